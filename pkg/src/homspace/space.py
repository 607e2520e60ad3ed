"""Finite quasi-metric measure spaces and their certified geometry.

A space is a finite point set with a symmetric distance table, strictly
positive atomic weights, and a certified quasi-triangle constant
``d(x,z) <= a0 * (d(x,y) + d(y,z))``.  Balls are open:
``B(x,r) = {y : d(x,y) < r}``, so ties at exactly ``r`` are excluded.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificationError, FormatError, ParameterError

# Exhaustive triple enumeration up to this point count; sampled above it.
A0_EXHAUSTIVE_CAP = 512
A0_SAMPLE_TRIPLES = 10_000_000


def _as_float_matrix(dist):
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise FormatError("distance table must be a square matrix")
    return d


def certify_a0(dist, cap=A0_EXHAUSTIVE_CAP, samples=A0_SAMPLE_TRIPLES, seed=0):
    """Largest ratio d(x,z)/(d(x,y)+d(y,z)) over triples, clamped below at 1.

    Returns ``(a0, method, worst_triple)`` where method is "exhaustive" for
    n <= cap and "sampled" otherwise, and worst_triple is ``(x, y, z)`` with
    y the middle point.
    """
    d = _as_float_matrix(dist)
    n = d.shape[0]
    if n <= 2:
        return 1.0, "exhaustive", None
    best = 1.0
    worst = None
    if n <= cap:
        for j in range(n):
            denom = d[:, j][:, None] + d[j, :][None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(denom > 0, d / denom, 0.0)
            k = int(np.argmax(ratio))
            i, l = divmod(k, n)
            if ratio[i, l] > best:
                best = float(ratio[i, l])
                worst = (i, j, l)
        return best, "exhaustive", worst
    rng = np.random.default_rng(seed)
    chunk = 1_000_000
    remaining = samples
    while remaining > 0:
        m = min(chunk, remaining)
        idx = rng.integers(0, n, size=(3, m))
        x, y, z = idx
        num = d[x, z]
        denom = d[x, y] + d[y, z]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(denom > 0, num / denom, 0.0)
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best = float(ratio[k])
            worst = (int(x[k]), int(y[k]), int(z[k]))
        remaining -= m
    return best, "sampled", worst


class MetricMeasureSpace:
    """Immutable finite quasi-metric measure space.

    Parameters
    ----------
    dist : (n, n) array of pairwise distances, symmetric, zero diagonal.
    weight : (n,) array of strictly positive atomic measures.
    a0 : certified quasi-triangle constant (>= 1).
    label : free-form description.
    a0_method : how a0 was obtained ("exhaustive", "sampled", "declared").
    points : optional coordinate array kept for round-tripping documents.
    """

    def __init__(self, dist, weight, a0=None, label="", a0_method=None,
                 points=None, a0_cap=A0_EXHAUSTIVE_CAP, seed=0):
        d = _as_float_matrix(dist)
        n = d.shape[0]
        w = np.asarray(weight, dtype=float)
        if w.shape != (n,):
            raise FormatError("weight vector length does not match point count")
        if not np.all(np.isfinite(d)) or not np.all(np.isfinite(w)):
            raise FormatError("distances and weights must be finite")
        if np.any(w <= 0):
            bad = int(np.argmax(w <= 0))
            raise FormatError(f"weight of point {bad} is not positive")
        if np.any(np.diag(d) != 0):
            bad = int(np.argmax(np.diag(d) != 0))
            raise FormatError(f"dist({bad},{bad}) is nonzero")
        if not np.array_equal(d, d.T):
            idx = np.argwhere(d != d.T)[0]
            raise FormatError(
                f"distance table is asymmetric at ({idx[0]},{idx[1]})")
        off = d + np.eye(n)
        if np.any(off <= 0):
            idx = np.argwhere(off <= 0)[0]
            raise FormatError(
                f"dist({idx[0]},{idx[1]}) is not positive for distinct points")

        if a0 is None:
            a0, method, _ = certify_a0(d, cap=a0_cap, seed=seed)
        else:
            a0 = float(a0)
            if a0 < 1:
                raise ParameterError("a0 must be >= 1")
            method = a0_method or "declared"
            measured, _, worst = certify_a0(d, cap=a0_cap, seed=seed)
            if measured > a0 * (1 + 1e-12):
                raise CertificationError(
                    f"declared a0={a0} violated: triple {worst} attains "
                    f"ratio {measured:.12g}", triple=worst)

        self.dist = d
        self.dist.setflags(write=False)
        self.weight = w
        self.weight.setflags(write=False)
        self.a0 = float(max(a0, 1.0))
        self.a0_method = method
        self.label = label
        self.points = None if points is None else np.asarray(points, float)
        self._cache = {}

    @property
    def n(self):
        return self.dist.shape[0]

    @property
    def total_mass(self):
        return float(self.weight.sum())

    @property
    def diam(self):
        return float(self.dist.max())

    @property
    def min_gap(self):
        """Smallest positive pairwise distance (inf for one point)."""
        if self.n == 1:
            return math.inf
        off = self.dist + np.where(np.eye(self.n, dtype=bool), np.inf, 0.0)
        return float(off.min())

    # -- ball machinery -----------------------------------------------------

    def ball_mask(self, r):
        """Boolean (n, n) mask, row x marks the open ball B(x, r)."""
        return self.dist < r

    def ball_mask_cached(self, r):
        key = ("mask", float(r))
        if key not in self._cache:
            m = self.dist < r
            m.setflags(write=False)
            self._cache[key] = m
        return self._cache[key]

    def ball_measure(self, r):
        """Vector of mu(B(x, r)) over all centers x."""
        return self.ball_mask(r) @ self.weight

    def _sorted(self):
        if "order" not in self._cache:
            order = np.argsort(self.dist, axis=1, kind="stable")
            sd = np.take_along_axis(self.dist, order, axis=1)
            wp = np.cumsum(self.weight[order], axis=1)
            self._cache["order"] = order
            self._cache["sorted_dist"] = sd
            self._cache["weight_prefix"] = wp
        return (self._cache["order"], self._cache["sorted_dist"],
                self._cache["weight_prefix"])

    def v_table(self):
        """V(x, y) = mu(B(x, d(x, y))) as an (n, n) table; V(x, x) = 0."""
        if "v_table" not in self._cache:
            _, sd, wp = self._sorted()
            n = self.n
            v = np.empty_like(self.dist)
            for x in range(n):
                cnt = np.searchsorted(sd[x], self.dist[x], side="left")
                v[x] = np.where(cnt > 0, wp[x][np.maximum(cnt - 1, 0)], 0.0)
            v.setflags(write=False)
            self._cache["v_table"] = v
        return self._cache["v_table"]

    def v_symmetry_ratio(self):
        """max over pairs of V(x,y)/V(y,x); finite because balls own centers."""
        if self.n == 1:
            return 1.0
        v = self.v_table()
        mask = ~np.eye(self.n, dtype=bool)
        return float(np.max(v[mask] / v.T[mask]))


@dataclass
class GeometryReport:
    """Measured doubling/dimension constants of a space."""

    c_mu: float
    omega: float
    diam: float
    q_global: float | None = None
    c_global: float | None = None
    q_local: float | None = None
    c_local: float | None = None
    kappa: float | None = None
    v_ratio: float | None = None
    radius_grid: tuple = field(default_factory=tuple)


def default_radius_grid(space, count=7):
    """Dyadic radii from diam/2 down, stopping above 1.6x the minimum gap.

    Radii at or below the nearest-neighbor gap make the smaller ball a
    singleton and inflate the measured doubling ratio; the cutoff keeps the
    grid in the regime the dimension fits are meant for.
    """
    hi = space.diam / 2.0
    lo = 1.6 * space.min_gap
    if not math.isfinite(lo) or hi <= 0:
        return [1.0]
    out = []
    r = hi
    while r >= lo and len(out) < count:
        out.append(r)
        r /= 2.0
    return sorted(out) or [hi]


def geometry_report(space, radius_grid, fit_reverse=False):
    """Measure doubling constant, upper dimension and lower-bound fits.

    ``c_mu`` is the exact max of mu(B(x,2r))/mu(B(x,r)) over all centers and
    grid radii; lower-bound exponents are least-squares slopes of
    log mu(B(x,r)) against log r with worst-case (minimum intercept)
    constants, global over all radii and local over r <= 1.
    """
    radii = [float(r) for r in radius_grid]
    if not radii or any(r <= 0 for r in radii) or radii != sorted(radii):
        raise ParameterError("radius_grid must be nonempty, positive, sorted")

    c_mu = 1.0
    logs_r, logs_v = [], []
    vols = {}
    for r in radii:
        v1 = space.ball_measure(r)
        v2 = space.ball_measure(2 * r)
        vols[r] = v1
        c_mu = max(c_mu, float(np.max(v2 / v1)))
        logs_r.append(np.full(space.n, math.log(r)))
        logs_v.append(np.log(v1))
    lr = np.concatenate(logs_r)
    lv = np.concatenate(logs_v)

    def _fit(mask):
        if mask.sum() < 2 or np.ptp(lr[mask]) == 0:
            return None, None
        slope, intercept = np.polyfit(lr[mask], lv[mask], 1)
        # worst-case constant: infimum over samples of mu(B)/r^Q
        c = float(np.exp(np.min(lv[mask] - slope * lr[mask])))
        return float(slope), c

    q_global, c_global = _fit(np.ones_like(lr, dtype=bool))
    q_local, c_local = _fit(lr <= 0.0)

    kappa = None
    if fit_reverse:
        pts_l, pts_g = [], []
        for r in radii:
            for lam in (2.0, 4.0):
                if lam * r >= space.diam or space.diam == 0:
                    continue
                ratio = space.ball_measure(lam * r) / vols[r]
                pts_l.append(np.full(space.n, math.log(lam)))
                pts_g.append(np.log(ratio))
        if pts_l:
            ll = np.concatenate(pts_l)
            gg = np.concatenate(pts_g)
            if np.ptp(ll) > 0:
                kappa = float(np.polyfit(ll, gg, 1)[0])
            else:
                kappa = float(np.min(gg) / ll[0])
            kappa = max(kappa, 0.0)

    return GeometryReport(
        c_mu=c_mu, omega=math.log2(c_mu) if c_mu > 0 else 0.0,
        diam=space.diam, q_global=q_global, c_global=c_global,
        q_local=q_local, c_local=c_local, kappa=kappa,
        v_ratio=space.v_symmetry_ratio(), radius_grid=tuple(radii))


# -- generators -------------------------------------------------------------

def _euclidean(points):
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _grid1d_points(size):
    if size == 1:
        return np.zeros((1, 1))
    return np.linspace(0.0, 1.0, size)[:, None]


def _grid2d_points(size):
    axis = np.linspace(0.0, 1.0, size) if size > 1 else np.zeros(1)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def _circle_dist(size):
    idx = np.arange(size)
    gap = np.abs(idx[:, None] - idx[None, :])
    gap = np.minimum(gap, size - gap)
    return gap / float(size)


def _binary_tree_dist(size):
    # complete binary tree on `size` nodes, unit edges, normalized to diam 1
    parent = [(i - 1) // 2 for i in range(size)]
    depth = np.zeros(size, dtype=int)
    for i in range(1, size):
        depth[i] = depth[parent[i]] + 1

    def ancestors(i):
        chain = {}
        d = 0
        while True:
            chain[i] = d
            if i == 0:
                return chain
            i = parent[i]
            d += 1

    dist = np.zeros((size, size))
    chains = [ancestors(i) for i in range(size)]
    for i in range(size):
        for j in range(i + 1, size):
            a, b = i, j
            da = db = 0
            ci = chains[i]
            while b not in ci:
                b = parent[b]
                db += 1
            dist[i, j] = dist[j, i] = ci[b] + db
    m = dist.max()
    return dist / m if m > 0 else dist


def _sierpinski_points(level):
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    tris = [verts]
    for _ in range(level):
        nxt = []
        for t in tris:
            for v in t:
                nxt.append((t + v) / 2.0)
        tris = nxt
    pts = np.concatenate(tris, axis=0)
    # deduplicate shared vertices; coordinates are dyadic except the sqrt(3)/2
    # factor, which is common to every y, so rounding is collision-free
    return np.unique(np.round(pts, 12), axis=0)


def generate_space(kind, size=None, level=None, exponent=None,
                   measure="uniform", weights=None, label=None,
                   a0_cap=A0_EXHAUSTIVE_CAP, seed=0):
    """Build one of the stock finite test spaces.

    Kinds: grid1d(size), grid2d(size per side), circle(size), graph(size,
    binary tree metric), sierpinski_level(level), snowflake_power(size,
    exponent a; d = |x - y|^a, a genuine quasi-metric for a > 1).
    """
    points = None
    if kind in ("grid1d", "grid2d", "circle", "graph", "snowflake_power"):
        if size is None or int(size) < 1:
            raise ParameterError("size must be >= 1")
        size = int(size)

    if kind == "grid1d":
        points = _grid1d_points(size)
        dist = _euclidean(points)
    elif kind == "grid2d":
        points = _grid2d_points(size)
        dist = _euclidean(points)
    elif kind == "circle":
        dist = _circle_dist(size)
    elif kind == "graph":
        dist = _binary_tree_dist(size)
    elif kind == "sierpinski_level":
        if level is None or int(level) < 0:
            raise ParameterError("level must be >= 0")
        points = _sierpinski_points(int(level))
        dist = _euclidean(points)
    elif kind == "snowflake_power":
        if exponent is None or not exponent > 0:
            raise ParameterError("snowflake exponent must be > 0")
        base = _grid1d_points(size)
        dist = _euclidean(base) ** float(exponent)
        points = base
    else:
        raise ParameterError(f"unknown space kind {kind!r}")

    n = dist.shape[0]
    if measure == "uniform":
        w = np.full(n, 1.0 / n)
    elif measure == "custom":
        if weights is None:
            raise ParameterError("custom measure requires weights")
        w = np.asarray(weights, dtype=float)
    else:
        raise ParameterError(f"unknown measure {measure!r}")

    return MetricMeasureSpace(
        dist, w, label=label or kind, points=points, a0_cap=a0_cap, seed=seed)


# -- document I/O -----------------------------------------------------------

def _tri_to_full(tri, n):
    d = np.zeros((n, n))
    k = 0
    for i in range(n):
        for j in range(i):
            d[i, j] = d[j, i] = tri[k]
            k += 1
    if k != len(tri):
        raise FormatError("lower-triangle length does not match n")
    return d


def space_to_document(space):
    doc = {
        "n": space.n,
        "weights": space.weight.tolist(),
        "a0": space.a0,
        "label": space.label,
    }
    if space.points is not None:
        doc["points"] = space.points.tolist()
    tri = []
    for i in range(space.n):
        for j in range(i):
            tri.append(space.dist[i, j])
    doc["dist"] = tri
    return doc


def save_space(space, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(space_to_document(space), fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_space_document(doc, a0_cap=A0_EXHAUSTIVE_CAP, seed=0):
    try:
        n = int(doc["n"])
        weights = np.asarray(doc["weights"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad space document: {exc}") from None
    if n < 1:
        raise FormatError("n must be >= 1")

    points = None
    if "dist" in doc:
        raw = doc["dist"]
        arr = np.asarray(raw, dtype=float)
        if arr.ndim == 1:
            dist = _tri_to_full(arr, n)
        elif arr.shape == (n, n):
            dist = arr
        else:
            raise FormatError("dist must be a lower triangle or full matrix")
        if "points" in doc:
            points = np.asarray(doc["points"], dtype=float)
    elif "points" in doc:
        points = np.asarray(doc["points"], dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.shape[0] != n:
            raise FormatError("points length does not match n")
        dist = _euclidean(points)
    else:
        raise FormatError("space document needs points or dist")

    return MetricMeasureSpace(
        dist, weights, a0=doc.get("a0"), label=doc.get("label", ""),
        points=points, a0_cap=a0_cap, seed=seed)


def load_space(path, a0_cap=A0_EXHAUSTIVE_CAP, seed=0):
    """Load and certify a space document (JSON)."""
    with open(path) as fh:
        doc = json.load(fh)
    return load_space_document(doc, a0_cap=a0_cap, seed=seed)
