"""Independent reference computations used to check the library.

None of these import faceaudit or scipy.stats: they use mpmath quadrature,
exhaustive enumeration, small linear programs and cofactor expansion.
"""

import itertools
import math

import mpmath as mp
import numpy as np
from scipy.optimize import linprog

mp.mp.dps = 30


def chi2_upper_tail(x, df):
    """P(chi2_df > x) by numerically integrating the density."""
    if x <= 0:
        return 1.0
    k = mp.mpf(df)
    norm = 2 ** (k / 2) * mp.gamma(k / 2)
    density = lambda t: t ** (k / 2 - 1) * mp.e ** (-t / 2) / norm  # noqa: E731
    return float(mp.quad(density, [x, x + 50, mp.inf]))


def normal_two_sided(z):
    """2 (1 - Phi(|z|)) via the complementary error function."""
    return float(mp.erfc(abs(mp.mpf(z)) / mp.sqrt(2)))


def pearson_one_sample(counts, probs):
    n = sum(counts)
    cells = [(o, n * p) for o, p in zip(counts, probs) if p > 0]
    stat = sum((o - e) ** 2 / e for o, e in cells)
    return stat, len(cells) - 1


def pearson_two_sample(a, b):
    cols = [(x, y) for x, y in zip(a, b) if x + y > 0]
    na, nb = sum(a), sum(b)
    total = na + nb
    stat = 0.0
    for x, y in cols:
        c = x + y
        for o, r in ((x, na), (y, nb)):
            e = r * c / total
            stat += (o - e) ** 2 / e
    return stat, len(cols) - 1


def wasserstein_matching(a, b, order=1.0):
    """Exact W_order for equal-size samples: best matching over all permutations."""
    assert len(a) == len(b)
    best = min(
        sum(abs(x - b[j]) ** order for x, j in zip(a, perm))
        for perm in itertools.permutations(range(len(b)))
    )
    return (best / len(a)) ** (1.0 / order)


def wasserstein_lp(a, b, order=1.0):
    """Exact W_order by solving the transport linear program."""
    na, nb = len(a), len(b)
    cost = np.array([[abs(x - y) ** order for y in b] for x in a]).ravel()
    a_eq = []
    for i in range(na):
        row = np.zeros((na, nb))
        row[i, :] = 1
        a_eq.append(row.ravel())
    for j in range(nb):
        col = np.zeros((na, nb))
        col[:, j] = 1
        a_eq.append(col.ravel())
    b_eq = [1 / na] * na + [1 / nb] * nb
    res = linprog(cost, A_eq=np.array(a_eq), b_eq=b_eq, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0
    return max(res.fun, 0.0) ** (1.0 / order)


def cofactor_det(m):
    """Determinant by Laplace expansion along the first row."""
    n = len(m)
    if n == 1:
        return m[0][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        total += (-1) ** j * m[0][j] * cofactor_det(minor)
    return total


def gram_volume(columns):
    """sqrt(det(D^T D)) with the Gram matrix built entry by entry."""
    n = len(columns)
    gram = [[sum(x * y for x, y in zip(columns[i], columns[j])) for j in range(n)] for i in range(n)]
    return math.sqrt(max(cofactor_det(gram), 0.0))


def best_two_means(points):
    """Global optimum of 2-means by enumerating every bipartition."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    best = (math.inf, None)
    for mask in range(1, 2 ** (n - 1)):
        sel = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        groups = (pts[sel], pts[~sel])
        sse = sum(((g - g.mean(axis=0)) ** 2).sum() for g in groups)
        if sse < best[0]:
            best = (sse, [g.mean(axis=0) for g in groups])
    return best[1]


# sRGB -> Lab, written independently from the published D65 formulas.
_M = (
    (0.4124564, 0.3575761, 0.1804375),
    (0.2126729, 0.7151522, 0.0721750),
    (0.0193339, 0.1191920, 0.9503041),
)
_WHITE = (0.95047, 1.00000, 1.08883)


def srgb_to_lab(rgb):
    def lin(v):
        v = v / 255.0
        return v / 12.92 if v <= 0.04045 else ((v + 0.055) / 1.055) ** 2.4

    r, g, b = (lin(c) for c in rgb)
    xyz = [row[0] * r + row[1] * g + row[2] * b for row in _M]

    def f(t):
        return t ** (1 / 3) if t > (6 / 29) ** 3 else t / (3 * (6 / 29) ** 2) + 4 / 29

    fx, fy, fz = (f(v / w) for v, w in zip(xyz, _WHITE))
    return 116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)
