"""Descriptive diversity measures reported next to the hypothesis tests."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import AllZeroTarget, InvalidDistribution


def _frequencies(values: Sequence[float]) -> np.ndarray:
    f = np.asarray(values, dtype=float)
    if f.ndim != 1 or (f < 0).any() or abs(f.sum() - 1.0) > 1e-9:
        raise InvalidDistribution("frequencies must be non-negative and sum to 1")
    return f


def diversity_loss(target: Sequence[float], observed: Sequence[float]) -> float:
    """1 - min over targeted groups of observed / target frequency.

    0 when every targeted group reaches its target share, 1 when one of them
    is absent. The raw value is returned, without clamping.
    """
    t, o = np.asarray(target, dtype=float), np.asarray(observed, dtype=float)
    if t.shape != o.shape:
        raise ValueError("target and observed must have the same length")
    mask = t > 0
    if not mask.any():
        raise AllZeroTarget("target frequencies are all zero")
    return float(1.0 - np.min(o[mask] / t[mask]))


def conditional_entropy(frequencies: Sequence[float], log_base: str = "natural") -> float:
    """Shannon entropy -sum f log f of a frequency vector (0 log 0 = 0).

    ``log_base`` is ``"natural"`` or ``"base2"``.
    """
    f = _frequencies(frequencies)
    nz = f[f > 0]
    h = -float(np.sum(nz * np.log(nz)))
    if log_base == "base2":
        return h / math.log(2)
    if log_base != "natural":
        raise ValueError(f"unknown log base {log_base!r}")
    return h


def geometric_diversity(columns) -> float:
    """sqrt(det(D^T D)) for the data matrix D whose columns are the variables.

    ``columns`` is an (p, n) array, one variable per column. Uses a
    column-pivoted QR: D P = Q R gives det(D^T D) = prod(diag(R))^2, which
    stays accurate when the columns are nearly dependent.
    """
    d = np.asarray(columns, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    p, n = d.shape
    if n < 1:
        raise ValueError("data matrix needs at least one column")
    if n > p:
        return 0.0
    r = linalg.qr(d, mode="r", pivoting=True)[0]
    return float(np.prod(np.abs(np.diag(r))))


def category_volume(frequencies: Sequence[float]) -> float:
    """Geometric diversity of a categorical attribute.

    The data matrix has one column per modality: that modality's indicator
    over the N records, scaled by 1/sqrt(N). Its Gram matrix is diag(f), so
    the volume is sqrt(prod f) and vanishes when a modality is missing.
    """
    f = _frequencies(frequencies)
    return float(np.sqrt(np.prod(f)))
