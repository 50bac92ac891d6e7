"""Synthetic crowded-video features with part-level occlusion.

Each frame is the concatenation of ``K`` part sub-vectors, one per attribute
group.  On a visible frame a part carries the sum of its attributes' label
codewords plus Gaussian noise; on an occluded frame it carries occluder noise
only.  Occlusion of each part follows a two-state Markov chain, so occlusions
persist across consecutive frames.

Dataset files hold one JSON object per line: an optional header describing
the attribute layout, then one record per video::

    {"id": 3, "shape": [d, L], "frames": [...row-major...],
     "labels": [...], "mask": [[run, run, ...], ...]}

``mask`` stores each part's occlusion as alternating run lengths starting with
a visible run (which may be 0).
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .partition import SYNTHETIC_LAYOUT, BranchSpec, GroupPartition, make_layout

DATASET_FORMAT = "gstam-dataset/1"


@dataclass
class SynthConfig:
    layout: list = field(default_factory=lambda: [list(g) for g in SYNTHETIC_LAYOUT])
    dim_per_part: int = 8
    T_total: int = 12
    length_jitter: int = 0
    p_occ: float = 0.3
    persistence: float = 0.7
    noise_sigma: float = 0.3
    occluder_sigma: float = 1.5
    codebook_seed: int = 1234
    n_videos: int = 100

    def __post_init__(self):
        self.layout = [(g, [tuple(a) for a in attrs]) for g, attrs in self.layout]
        if not 0.0 <= self.p_occ <= 1.0:
            raise ConfigError(f"p_occ must be in [0, 1], got {self.p_occ}")
        if not 0.0 <= self.persistence < 1.0:
            raise ConfigError(f"persistence must be in [0, 1), got {self.persistence}")
        if 0.0 < self.p_occ < 1.0 and self.entry_rate() > 1.0:
            raise ConfigError(f"p_occ={self.p_occ} is unreachable with persistence={self.persistence}")
        for name in ("dim_per_part", "T_total", "n_videos"):
            if getattr(self, name) < (0 if name == "n_videos" else 1):
                raise ConfigError(f"{name} must be positive")
        if self.length_jitter < 0 or self.length_jitter >= self.T_total:
            raise ConfigError("length_jitter must be in [0, T_total)")
        if self.noise_sigma < 0 or self.occluder_sigma < 0:
            raise ConfigError("noise scales must be non-negative")

    def entry_rate(self) -> float:
        """Visible -> occluded transition probability giving stationary rate ``p_occ``."""
        return self.p_occ * (1.0 - self.persistence) / (1.0 - self.p_occ)

    @property
    def n_parts(self) -> int:
        return len(self.layout)

    @property
    def d(self) -> int:
        return self.n_parts * self.dim_per_part

    def specs(self) -> tuple[list[BranchSpec], GroupPartition]:
        return make_layout(self.layout)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["layout"] = [[g, [list(a) for a in attrs]] for g, attrs in self.layout]
        return out


@dataclass
class VideoSample:
    id: int
    frames: np.ndarray  # (d, L)
    labels: np.ndarray  # (B,)
    occ_mask: np.ndarray  # (K, L) bool

    @property
    def length(self) -> int:
        return self.frames.shape[1]

    @property
    def is_occluded(self) -> bool:
        return bool(self.occ_mask.any())

    def __eq__(self, other):
        return (isinstance(other, VideoSample) and self.id == other.id
                and np.array_equal(self.frames, other.frames)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.occ_mask, other.occ_mask))


def make_codebook(cfg: SynthConfig) -> list:
    """One ``(c_i, dim_per_part)`` codeword matrix per branch, from ``codebook_seed``."""
    specs, part = cfg.specs()
    rng = np.random.default_rng(cfg.codebook_seed)
    book = []
    for s in specs:
        scale = 1.0 / np.sqrt(len(part.groups[s.group_id]))
        book.append(rng.standard_normal((s.classes, cfg.dim_per_part)) * scale)
    return book


def occlusion_chain(cfg: SynthConfig, length: int, rng) -> np.ndarray:
    """Boolean ``(K, length)`` mask, one stationary two-state chain per part."""
    K = cfg.n_parts
    if cfg.p_occ <= 0.0:
        return np.zeros((K, length), dtype=bool)
    if cfg.p_occ >= 1.0:
        return np.ones((K, length), dtype=bool)
    enter = cfg.entry_rate()
    u = rng.random((K, length))
    mask = np.empty((K, length), dtype=bool)
    mask[:, 0] = u[:, 0] < cfg.p_occ
    for t in range(1, length):
        stay = np.where(mask[:, t - 1], cfg.persistence, enter)
        mask[:, t] = u[:, t] < stay
    return mask


def part_signal(book, part: GroupPartition, labels, k: int) -> np.ndarray:
    return sum(book[i][labels[i]] for i in part.groups[k])


def generate_video(cfg: SynthConfig, book, index: int, seed: int) -> VideoSample:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    specs, part = cfg.specs()
    length = cfg.T_total - (int(rng.integers(0, cfg.length_jitter + 1)) if cfg.length_jitter else 0)
    labels = np.array([rng.integers(0, s.classes) for s in specs], dtype=np.int64)
    mask = occlusion_chain(cfg, length, rng)
    D = cfg.dim_per_part
    frames = np.empty((cfg.d, length))
    for k in range(cfg.n_parts):
        rows = slice(k * D, (k + 1) * D)
        clean = part_signal(book, part, labels, k)[:, None] + cfg.noise_sigma * rng.standard_normal((D, length))
        occluder = cfg.occluder_sigma * rng.standard_normal((D, length))
        frames[rows] = np.where(mask[k][None, :], occluder, clean)
    return VideoSample(index, frames, labels, mask)


def generate_dataset(cfg: SynthConfig, seed: int) -> list:
    """Deterministic list of ``cfg.n_videos`` samples; video ``i`` uses seed ``(seed, i)``."""
    book = make_codebook(cfg)
    return [generate_video(cfg, book, i, seed) for i in range(cfg.n_videos)]


def nearest_codeword_labels(cfg: SynthConfig, book, frame: np.ndarray) -> np.ndarray:
    """Decode every attribute from one frame by joint nearest codeword within each part."""
    specs, part = cfg.specs()
    D = cfg.dim_per_part
    out = np.zeros(len(specs), dtype=np.int64)
    for k, members in enumerate(part.groups):
        x = frame[k * D:(k + 1) * D]
        best, best_dist = None, np.inf
        for combo in product(*(range(specs[i].classes) for i in members)):
            c = sum(book[i][y] for i, y in zip(members, combo))
            dist = float(np.sum((x - c) ** 2))
            if dist < best_dist:
                best, best_dist = combo, dist
        out[list(members)] = best
    return out


# ----------------------------------------------------------------------------
# file format


def _rle(row) -> list:
    runs, state, n = [], False, 0
    for v in row:
        if bool(v) == state:
            n += 1
        else:
            runs.append(n)
            state, n = not state, 1
    runs.append(n)
    return runs


def _unrle(runs, length) -> np.ndarray:
    out = np.zeros(length, dtype=bool)
    pos, state = 0, False
    for n in runs:
        out[pos:pos + n] = state
        pos += n
        state = not state
    if pos != length:
        raise ValueError(f"mask runs cover {pos} frames, expected {length}")
    return out


def sample_to_record(s: VideoSample) -> dict:
    return {
        "id": int(s.id),
        "shape": list(s.frames.shape),
        "frames": s.frames.ravel().tolist(),
        "labels": [int(y) for y in s.labels],
        "mask": [_rle(row) for row in s.occ_mask],
    }


def record_to_sample(rec: dict) -> VideoSample:
    d, L = rec["shape"]
    frames = np.array(rec["frames"], dtype=np.float64)
    if frames.size != d * L:
        raise ValueError(f"{frames.size} values for shape {d}x{L}")
    mask = np.array([_unrle(r, L) for r in rec["mask"]], dtype=bool).reshape(len(rec["mask"]), L)
    return VideoSample(rec["id"], frames.reshape(d, L), np.array(rec["labels"], dtype=np.int64), mask)


def save_dataset(path, samples, cfg: SynthConfig | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        if cfg is not None:
            header = {"format": DATASET_FORMAT, "config": cfg.to_dict()}
            fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in samples:
            fh.write(json.dumps(sample_to_record(s)) + "\n")
    return path


def _records(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                m = re.match(r'\s*\{\s*"id"\s*:\s*(-?\d+)', line)
                which = f"record id={m.group(1)}" if m else "record"
                raise ParseError(f"malformed {which} ({exc.msg})", lineno) from None


def read_header(path) -> dict | None:
    for _, rec in _records(path):
        return rec if rec.get("format") == DATASET_FORMAT else None
    return None


def load_dataset(path) -> list:
    samples = []
    for lineno, rec in _records(path):
        if "format" in rec:
            if rec["format"] != DATASET_FORMAT:
                raise ParseError(f"unknown dataset format {rec['format']!r}", lineno)
            continue
        try:
            samples.append(record_to_sample(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"record id={rec.get('id', '?')}: {exc}", lineno) from None
    return samples


def config_from_header(header: dict | None) -> SynthConfig | None:
    if header is None:
        return None
    return SynthConfig(**header["config"])
