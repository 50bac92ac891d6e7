"""Trajectory-level prediction by averaging fixed-length segment predictions."""

from __future__ import annotations

import numpy as np

from .branches import model_forward
from .tensor import no_grad

CHUNK = 512


def segment_windows(length: int, T: int) -> list:
    """``(start, stop)`` windows covering a trajectory of ``length`` frames.

    Consecutive disjoint windows of ``T`` frames, plus the final ``T`` frames
    as one extra overlapping window when ``length % T != 0``.  Trajectories
    shorter than ``T`` get no windows.
    """
    if length < T:
        return []
    wins = [(s, s + T) for s in range(0, length - T + 1, T)]
    if length % T:
        wins.append((length - T, length))
    return wins


def _forward_chunks(model, segments):
    probs = [[] for _ in range(model.n_branches)]
    attn = []
    for lo in range(0, len(segments), CHUNK):
        X = np.stack(segments[lo:lo + CHUNK])
        with no_grad():
            preds, A = model_forward(model, X)
        for i, p in enumerate(preds):
            probs[i].append(p.data)
        attn.append(A.data)
    return [np.concatenate(p) for p in probs], np.concatenate(attn)


def infer_trajectories(model, videos, T: int, return_attention=False):
    """Averaged per-branch probabilities for each video.

    Returns a list with one entry per video: ``None`` for trajectories shorter
    than ``T`` (excluded), else a list of ``B`` probability vectors.  With
    ``return_attention`` also returns, per video, ``(windows, A)`` where ``A``
    holds the ``(n_windows, B, T)`` attention weights.
    """
    segments, owner, windows = [], [], []
    for v, video in enumerate(videos):
        frames = video.frames if hasattr(video, "frames") else np.asarray(video)
        wins = segment_windows(frames.shape[1], T)
        windows.append(wins)
        for s, e in wins:
            segments.append(frames[:, s:e])
            owner.append(v)
    results = [None] * len(videos)
    attention = [None] * len(videos)
    if not segments:
        return (results, attention) if return_attention else results
    probs, attn = _forward_chunks(model, segments)
    owner = np.asarray(owner)
    for v in range(len(videos)):
        rows = np.flatnonzero(owner == v)
        if rows.size == 0:
            continue
        results[v] = [p[rows].mean(axis=0) for p in probs]
        attention[v] = (windows[v], attn[rows])
    return (results, attention) if return_attention else results


def infer_trajectory(model, frames, T: int):
    """Averaged predictions for one ``(d, L)`` trajectory; ``None`` if ``L < T``."""
    return infer_trajectories(model, [np.asarray(frames)], T)[0]
