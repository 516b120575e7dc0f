"""sRGB to CIELAB conversion, ITA, skin colour summaries and surprising scores."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage, stats

from .errors import DegenerateClass, DimensionMismatch, EmptyMask, EmptyPixelSet, EmptyRegion

# linear sRGB -> XYZ, D65 white, 2 degree observer
SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
XYZ_TO_SRGB = np.linalg.inv(SRGB_TO_XYZ)
D65_WHITE = SRGB_TO_XYZ.sum(axis=1)

_EPS = 216 / 24389
_KAPPA = 24389 / 27


class LabColor(NamedTuple):
    L_star: float
    a_star: float
    b_star: float


def _linearize(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _compand(c: np.ndarray) -> np.ndarray:
    c = np.clip(c, 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1 / 2.4) - 0.055)


def srgb_to_lab_array(rgb) -> np.ndarray:
    """Vectorized sRGB (0-255, last axis = channels) to Lab (last axis = L, a, b)."""
    rgb = np.asarray(rgb, dtype=float) / 255.0
    xyz = _linearize(rgb) @ SRGB_TO_XYZ.T / D65_WHITE
    f = np.where(xyz > _EPS, np.cbrt(xyz), (_KAPPA * xyz + 16) / 116)
    L = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def lab_to_srgb_array(lab) -> np.ndarray:
    lab = np.asarray(lab, dtype=float)
    fy = (lab[..., 0] + 16) / 116
    fx = fy + lab[..., 1] / 500
    fz = fy - lab[..., 2] / 200
    f = np.stack([fx, fy, fz], axis=-1)
    xyz = np.where(f**3 > _EPS, f**3, (116 * f - 16) / _KAPPA)
    # y uses the lightness branch directly
    xyz[..., 1] = np.where(lab[..., 0] > _KAPPA * _EPS, fy**3, lab[..., 0] / _KAPPA)
    rgb = (xyz * D65_WHITE) @ XYZ_TO_SRGB.T
    return _compand(rgb) * 255.0


def srgb_to_lab(rgb: Sequence[float]) -> LabColor:
    """Convert one 8-bit sRGB triple to CIELAB (D65)."""
    L, a, b = srgb_to_lab_array(rgb)
    return LabColor(float(L), float(a), float(b))


def lab_to_srgb(lab: Sequence[float]) -> tuple[float, float, float]:
    r, g, b = lab_to_srgb_array(lab)
    return float(r), float(g), float(b)


def ita_array(L, b) -> np.ndarray:
    """Individual Typology Angle in degrees, elementwise.

    At b* = 0 the limit value sign(L* - 50) * 90 is returned (0 when L* = 50).
    """
    L, b = np.asarray(L, dtype=float), np.asarray(b, dtype=float)
    num = L - 50.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.degrees(np.arctan(num / b))
    return np.where(b == 0, 90.0 * np.sign(num), out)


def ita(lab) -> float:
    L, _, b = lab
    if b == 0:
        return 90.0 * float(np.sign(L - 50.0))
    return math.degrees(math.atan((L - 50.0) / b))


def smooth_pixels(pixels, kernel_radius: int = 1) -> np.ndarray:
    """Per-channel box blur of width 2r+1 with clamped (edge-replicated) borders."""
    arr = np.asarray(pixels, dtype=float)
    if arr.size == 0:
        raise EmptyRegion("cannot smooth an empty region")
    if kernel_radius < 0:
        raise ValueError("kernel_radius must be >= 0")
    if kernel_radius == 0:
        return arr.copy()
    size = [2 * kernel_radius + 1] * min(arr.ndim, 2) + [1] * max(arr.ndim - 2, 0)
    return ndimage.uniform_filter(arr, size=size, mode="nearest")


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    while len(centers) < k:
        total = d2.sum()
        if total <= 0:
            break  # fewer distinct points than k: remaining clusters are dropped
        nxt = points[rng.choice(len(points), p=d2 / total)]
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((points - nxt) ** 2, axis=1))
    return np.array(centers)


def kmeans(points, k: int = 3, seed: int = 0, max_iters: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns (centroids, labels). Clusters that end up empty are dropped, so
    fewer than ``k`` centroids may come back.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) == 0:
        raise EmptyPixelSet("no pixels to cluster")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(pts, k, rng)
    labels = np.full(len(pts), -1)
    for _ in range(max_iters):
        dist = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dist, axis=1)
        used = np.unique(new_labels)
        if len(used) < len(centers):
            centers = centers[used]
            new_labels = np.searchsorted(used, new_labels)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        centers = np.array([pts[labels == j].mean(axis=0) for j in range(len(centers))])
    return centers, labels


def kmeans_dominant_cluster(pixels, k: int = 3, seed: int = 0, max_iters: int = 100) -> LabColor:
    """Centroid with the highest L* after clustering Lab pixels."""
    centers, _ = kmeans(pixels, k, seed, max_iters)
    return LabColor(*map(float, centers[np.argmax(centers[:, 0])]))


@dataclass(frozen=True)
class SkinSummary:
    ita_mean: float
    ita_std: float
    L_mean: float
    L_std: float
    a_mean: float
    a_std: float
    b_mean: float
    b_std: float
    R_mean: float
    R_std: float
    G_mean: float
    G_std: float
    B_mean: float
    B_std: float
    pixel_count: int
    dominant_cluster_centroid: LabColor


SUMMARY_COLUMNS = (
    "id", "pixel_count", "ita_mean", "ita_std", "L_mean", "L_std", "a_mean", "a_std",
    "b_mean", "b_std", "R_mean", "R_std", "G_mean", "G_std", "B_mean", "B_std",
)


def extract_skin_summary(image, mask, k: int = 3, kernel_radius: int = 1, seed: int = 0) -> SkinSummary:
    """Colour statistics of the brightest skin cluster of one image.

    The image is smoothed, masked pixels (mask != 0) are converted to Lab and
    clustered; statistics (population std) cover the pixels assigned to the
    cluster with the highest L*. ITA is evaluated per pixel.
    """
    img = np.asarray(image)
    m = np.asarray(mask)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatch(f"expected an RGB raster, got shape {img.shape}")
    if m.ndim == 3:
        m = m[..., 0]
    if m.shape != img.shape[:2]:
        raise DimensionMismatch(f"mask shape {m.shape} does not match image {img.shape[:2]}")
    sel = m != 0
    if not sel.any():
        raise EmptyMask("mask selects no pixel")

    rgb = smooth_pixels(img.astype(float), kernel_radius)[sel]
    lab = srgb_to_lab_array(rgb)
    centers, labels = kmeans(lab, k, seed)
    top = int(np.argmax(centers[:, 0]))
    keep = labels == top
    lab, rgb = lab[keep], rgb[keep]
    itas = ita_array(lab[:, 0], lab[:, 2])

    cols = np.column_stack([itas, lab, rgb])
    mean, std = cols.mean(axis=0), cols.std(axis=0)
    constant = np.ptp(cols, axis=0) == 0
    mean[constant], std[constant] = cols[0, constant], 0.0
    stats_ = [v for pair in zip(mean, std) for v in pair]
    return SkinSummary(*map(float, stats_), pixel_count=int(keep.sum()),
                       dominant_cluster_centroid=LabColor(*map(float, centers[top])))


def summary_row(record_id: str, s: SkinSummary) -> list:
    return [record_id, s.pixel_count] + [getattr(s, c) for c in SUMMARY_COLUMNS[2:]]


@dataclass(frozen=True)
class SurprisingFlag:
    id: str
    fitz_class: int
    ita: float
    z_score: float
    flagged: bool


Z_975 = float(stats.norm.ppf(0.975))


def surprising_scores(records: Iterable[tuple[str, int, float]]) -> list[SurprisingFlag]:
    """Flag records whose ITA falls outside the central 95% of their class.

    A Gaussian (sample mean, unbiased std) is fitted to the ITA values of
    each Fitzpatrick class; records with |z| > z_0.975 are flagged.
    """
    records = list(records)
    by_class: dict[int, list[float]] = {}
    for _, cls, value in records:
        by_class.setdefault(cls, []).append(float(value))
    fits = {}
    for cls, values in by_class.items():
        if len(values) < 2:
            raise DegenerateClass(cls, "needs at least 2 records")
        sd = float(np.std(values, ddof=1))
        if sd == 0:
            raise DegenerateClass(cls, "zero variance")
        fits[cls] = (float(np.mean(values)), sd)
    out = []
    for rid, cls, value in records:
        mu, sd = fits[cls]
        z = (float(value) - mu) / sd
        out.append(SurprisingFlag(rid, cls, float(value), z, abs(z) > Z_975))
    return out
