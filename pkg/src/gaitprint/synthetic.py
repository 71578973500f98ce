"""Synthetic walking-like accelerometry for tests and demos.

Each subject gets its own cadence, harmonic amplitudes and phase; the
magnitude signal is ``1 + sum_h a_h sin(2 pi h f t + phi_h) + noise`` and is
spread over three axes along a slowly wobbling direction.
"""
from __future__ import annotations

import numpy as np
import pandas as pd

from .ingest import SubjectSeries, series_from_signal


def subject_params(n_subjects: int, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    return [{"cadence": rng.uniform(0.8, 1.25), "amps": rng.uniform(0.05, 0.35, size=3),
             "phases": rng.uniform(0, 2 * np.pi, size=3), "noise": rng.uniform(0.03, 0.08)}
            for _ in range(n_subjects)]


def magnitude_signal(params: dict, n_samples: int, rate: float = 100.0, rng=None,
                     drift: float = 0.0) -> np.ndarray:
    rng = np.random.default_rng(rng)
    t = np.arange(n_samples) / rate
    f = params["cadence"] * (1 + drift)
    v = np.ones(n_samples)
    for h, (a, ph) in enumerate(zip(params["amps"], params["phases"]), start=1):
        v += a * np.sin(2 * np.pi * h * f * t + ph + rng.uniform(-0.2, 0.2))
    v += params["noise"] * rng.standard_normal(n_samples)
    return np.abs(v)


def simulate_series(n_subjects: int = 5, seconds: int = 40, S: int = 100, seed: int = 0,
                    sessions: tuple[str, ...] | None = None) -> list[SubjectSeries]:
    """Segmented magnitude series; with ``sessions``, each session is a separate bout."""
    params = subject_params(n_subjects, seed)
    rng = np.random.default_rng(seed + 1)
    out = []
    for i, p in enumerate(params):
        sid = str(i + 1)
        if sessions is None:
            out.append(series_from_signal(sid, magnitude_signal(p, seconds * S, rng=rng), S))
            continue
        frames = []
        for k, sess in enumerate(sessions):
            part = series_from_signal(sid, magnitude_signal(p, seconds * S, rng=rng, drift=0.03 * k), S, sess)
            frames.extend(part.frames)
        frames = [type(f)(f.subject_id, j + 1, f.v, f.session) for j, f in enumerate(frames)]
        out.append(SubjectSeries(sid, frames))
    return out


def simulate_raw_csv(path, n_subjects: int = 5, seconds: int = 40, rate: float = 100.0,
                     seed: int = 0, sessions: tuple[str, ...] = ("1",)) -> None:
    """Write a long-format raw file with columns subject, session, t, x, y, z."""
    params = subject_params(n_subjects, seed)
    rng = np.random.default_rng(seed + 1)
    parts = []
    n = int(seconds * rate)
    for i, p in enumerate(params):
        for k, sess in enumerate(sessions):
            v = magnitude_signal(p, n, rate, rng=rng, drift=0.03 * k)
            theta = 0.3 + 0.05 * np.sin(np.arange(n) / (7 * rate))
            phi = 1.0 + 0.05 * np.cos(np.arange(n) / (5 * rate))
            parts.append(pd.DataFrame({
                "subject": str(i + 1), "session": sess, "t": np.arange(n) + k * (n + 10),
                "x": v * np.sin(theta) * np.cos(phi), "y": v * np.sin(theta) * np.sin(phi),
                "z": v * np.cos(theta)}))
    pd.concat(parts).to_csv(path, index=False, float_format="%.6f")
