import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gstam.branches import MultiBranchModel
from gstam.errors import EvaluationError, LabelError
from gstam.metrics import (argmax_lowest, attribute_accuracy, attribute_f1, constant_attribute_guard, evaluate,
                           score)
from gstam.synthdata import SynthConfig, VideoSample, generate_dataset


def brute_macro_f1(preds, labels):
    classes = sorted(set(preds) | set(labels))
    out = []
    for k in classes:
        tp = sum(p == k and y == k for p, y in zip(preds, labels))
        pp = sum(p == k for p in preds)
        ap = sum(y == k for y in labels)
        prec = tp / pp if pp else 0.0
        rec = tp / ap if ap else 0.0
        out.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(out) / len(out)


def test_f1_examples():
    assert attribute_f1([0, 1, 2], [0, 1, 2], 3) == 1.0
    assert attribute_f1([1, 0, 0, 0], [1, 1, 0, 0], 2) == pytest.approx(0.73333, abs=5e-6)
    assert attribute_f1([0, 0, 0, 0], [0, 0, 1, 1], 2) == pytest.approx(1 / 3, abs=1e-15)


def test_f1_errors():
    with pytest.raises(EvaluationError):
        attribute_f1([], [], 2)
    with pytest.raises(EvaluationError):
        attribute_f1([0], [0, 1], 2)
    with pytest.raises(LabelError):
        attribute_f1([2], [0], 2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40), st.randoms())
def test_f1_matches_brute_force_and_ignores_order(pairs, rnd):
    preds, labels = map(list, zip(*pairs))
    ref = brute_macro_f1(preds, labels)
    assert attribute_f1(preds, labels, 4) == pytest.approx(ref, abs=1e-12)
    rnd.shuffle(pairs)
    p2, l2 = map(list, zip(*pairs))
    assert attribute_f1(p2, l2, 4) == pytest.approx(ref, abs=1e-12)


def test_accuracy_and_empty_input():
    assert attribute_accuracy([0, 1, 1], [0, 1, 0]) == pytest.approx(2 / 3)
    with pytest.raises(EvaluationError):
        attribute_accuracy([], [])


def test_argmax_ties_go_to_lowest_index():
    assert argmax_lowest([0.25, 0.25, 0.25, 0.25]) == 0
    assert argmax_lowest([0.1, 0.45, 0.45]) == 1


def test_guard_examples():
    names = ["hat", "gender"]

    def vid(labels):
        return VideoSample(0, np.zeros((2, 6)), np.array(labels), np.zeros((1, 6), dtype=bool))

    assert constant_attribute_guard([vid([0, 0]), vid([0, 1])], names) == ["hat"]
    assert constant_attribute_guard([vid([0, 0]), vid([1, 1])], names) == []
    assert constant_attribute_guard([vid([1, 0])], names) == names


def test_report_averages():
    rep = score(["a", "b", "c"], [2, 2, 2], np.array([[0, 1, 1], [1, 1, 0]]), np.array([[0, 1, 0], [1, 0, 0]]))
    assert rep.avg_accuracy == pytest.approx(np.mean(rep.accuracy), abs=1e-12)
    assert rep.avg_f1 == pytest.approx(np.mean(rep.f1), abs=1e-12)
    rows = rep.to_csv().splitlines()
    assert rows[0] == "attribute,accuracy,f1,n" and rows[-1].startswith("AVG,")
    assert len(rows) == 5


def test_excluded_attribute_left_out_of_rows_and_average():
    rep = score(["a", "b"], [2, 2], np.array([[0, 1], [0, 0]]), np.array([[0, 1], [0, 1]]), exclude=["a"])
    assert rep.avg_accuracy == rep.accuracy[1]
    assert [r["attribute"] for r in rep.rows()] == ["b", "AVG"]


# -- end-to-end ------------------------------------------------------------------------

LAYOUT = [("g0", [("a", 2), ("b", 3)]), ("g1", [("c", 2)])]


def oracle_model(cfg):
    """Identity-trunk model whose heads read the noiseless codewords directly."""
    from gstam.synthdata import make_codebook
    specs, part = cfg.specs()
    m = MultiBranchModel(specs, part, cfg.d, "stam", seed=0)
    m.attention.conv2_w.data = np.zeros(m.attention.conv2_w.shape)  # uniform 0.5 attention
    book = make_codebook(cfg)
    D = cfg.dim_per_part
    for i, s in enumerate(specs):
        W = np.zeros((s.classes, cfg.d))
        k = s.group_id
        # codewords of one group are nearly orthogonal at this dimension; scale for confident argmax
        W[:, k * D:(k + 1) * D] = 50 * book[i]
        m.heads[i].data = W
    return m


def test_oracle_model_is_perfect_on_noiseless_data():
    cfg = SynthConfig(layout=[[g, [list(a) for a in attrs]] for g, attrs in LAYOUT], dim_per_part=64,
                      noise_sigma=0.0, p_occ=0.0, n_videos=60)
    vids = generate_dataset(cfg, 0)
    rep = evaluate(oracle_model(cfg), vids, "all", 6)
    assert rep.avg_accuracy == 1.0 and rep.avg_f1 == 1.0


def test_all_is_weighted_union_of_subsets():
    cfg = SynthConfig(p_occ=0.05, persistence=0.5, n_videos=80, dim_per_part=4)
    vids = generate_dataset(cfg, 1)
    specs, part = cfg.specs()
    m = MultiBranchModel(specs, part, cfg.d, "stam", seed=2)
    full = evaluate(m, vids, "all", 6, exclude_constant=False)
    occ = evaluate(m, vids, "occluded", 6, exclude_constant=False)
    vis = evaluate(m, vids, "visible", 6, exclude_constant=False)
    assert occ.n + vis.n == full.n
    weighted = (occ.n * occ.accuracy + vis.n * vis.accuracy) / full.n
    np.testing.assert_allclose(full.accuracy, weighted, atol=1e-12)


def test_brute_force_accuracy_recount():
    cfg = SynthConfig(n_videos=15, dim_per_part=4)
    vids = generate_dataset(cfg, 3)
    specs, part = cfg.specs()
    m = MultiBranchModel(specs, part, cfg.d, "ptam", seed=4)
    from gstam.inference import infer_trajectory
    rep = evaluate(m, vids, "all", 6, exclude_constant=False)
    for i in range(len(specs)):
        hits = sum(int(np.argmax(infer_trajectory(m, v.frames, 6)[i]) == v.labels[i]) for v in vids)
        assert rep.accuracy[i] == hits / len(vids)


def test_empty_subset_names_filter():
    vids = generate_dataset(SynthConfig(p_occ=0.0, n_videos=5, dim_per_part=4), 0)
    specs, part = SynthConfig().specs()
    m = MultiBranchModel(specs, part, 20, "stam")
    with pytest.raises(EvaluationError, match="occluded"):
        evaluate(m, vids, "occluded", 6)
    with pytest.raises(EvaluationError):
        evaluate(m, vids, "blurry", 6)


def test_evaluate_respects_guard():
    cfg = SynthConfig(n_videos=1, dim_per_part=4)
    single = generate_dataset(cfg, 0)
    specs, part = cfg.specs()
    m = MultiBranchModel(specs, part, cfg.d, "stam")
    vids2 = generate_dataset(SynthConfig(n_videos=30, dim_per_part=4), 0)
    for v in vids2:
        v.labels[2] = 0  # "hat" constant
    rep = evaluate(m, vids2, "all", 6)
    assert rep.excluded == ["hat"]
    assert "hat" not in [r["attribute"] for r in rep.rows()]
    # every attribute constant: fall back to averaging over all of them
    rep1 = evaluate(m, single, "all", 6)
    assert rep1.excluded == []
