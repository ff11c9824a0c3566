"""Topological degree via integration of pulled-back unit bumps.

deg(f, y, U) is the integral over U of f^* w for a smooth bump w with
unit integral supported near y, inside the component of y in the
complement of f(boundary U).  The bump radius is half the measured
distance from y to the sampled image of the boundary; degrees are
rounded to integers with the rounding gap reported, and flagged
unreliable when the gap exceeds 0.25.

``preimage_count`` is the independent oracle: it locates preimages on
the grid, polishes each by damped local inversion, and sums Jacobian
signs at regular values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid_forms import GridDomain, bump_normalization
from .sampled_maps import DerivativeField, SampledMap, derivative, pullback, torus_dist
from .target_forms import AnalyticTargetForm, RadialBumpField

__all__ = [
    "Subdomain",
    "DegreeResult",
    "degree",
    "local_index",
    "excision_check",
    "preimage_count",
]

UNRELIABLE_GAP = 0.25


@dataclass(frozen=True)
class Subdomain:
    """Ball or box region inside a map's grid domain."""

    kind: str  # "ball" | "box"
    center: tuple[float, ...] = ()
    radius: float = 0.0
    corner: tuple[float, ...] = ()
    sides: tuple[float, ...] = ()

    @classmethod
    def ball(cls, center, radius: float) -> "Subdomain":
        return cls("ball", center=tuple(float(c) for c in center), radius=float(radius))

    @classmethod
    def box(cls, corner, sides) -> "Subdomain":
        return cls("box", corner=tuple(float(c) for c in corner),
                   sides=tuple(float(s) for s in sides))

    def mask(self, domain: GridDomain) -> np.ndarray:
        pts = domain.points
        if self.kind == "ball":
            d2 = np.sum((pts - np.asarray(self.center)) ** 2, axis=-1)
            return (d2 <= self.radius**2) & domain.mask
        lo = np.asarray(self.corner)
        hi = lo + np.asarray(self.sides)
        return np.all((pts >= lo) & (pts <= hi), axis=-1) & domain.mask

    def boundary_band(self, domain: GridDomain) -> np.ndarray:
        """Cells within one grid spacing of the subdomain boundary."""
        pts = domain.points
        if self.kind == "ball":
            d = np.sqrt(np.sum((pts - np.asarray(self.center)) ** 2, axis=-1))
            width = float(np.max(domain.h))
            return (np.abs(d - self.radius) <= width) & domain.mask
        lo = np.asarray(self.corner)
        hi = lo + np.asarray(self.sides)
        w = np.max(domain.h)
        near_face = (np.abs(pts - lo) <= w) | (np.abs(pts - hi) <= w)
        inside_ish = np.all((pts >= lo - w) & (pts <= hi + w), axis=-1)
        return np.any(near_face, axis=-1) & inside_ish & domain.mask


@dataclass
class DegreeResult:
    raw: float
    rounded: int
    gap: float
    bump_radius: float
    boundary_distance: float
    unreliable: bool

    @classmethod
    def from_raw(cls, raw: float, bump_radius: float, boundary_distance: float) -> "DegreeResult":
        rounded = int(np.round(raw))
        gap = abs(raw - rounded)
        return cls(raw=raw, rounded=rounded, gap=gap, bump_radius=bump_radius,
                   boundary_distance=boundary_distance, unreliable=gap > UNRELIABLE_GAP)


def _target_distance(f: SampledMap, pts_values: np.ndarray, y: np.ndarray) -> np.ndarray:
    if f.torus:
        return torus_dist(pts_values, y)
    return np.sqrt(np.sum((pts_values - np.asarray(y)) ** 2, axis=-1))


def _image_oscillation(f: SampledMap, band: np.ndarray) -> float:
    """Largest per-cell jump of f over a band of cells, wrap-aware."""
    osc = 0.0
    for axis in range(f.domain.n):
        d = np.diff(f.values, axis=axis)
        if f.torus:
            d = d - np.round(d)
        pair = band.take(range(1, f.domain.res[axis]), axis=axis) | \
            band.take(range(0, f.domain.res[axis] - 1), axis=axis)
        if np.any(pair):
            osc = max(osc, float(np.max(np.sqrt(np.sum(d * d, axis=-1))[pair])))
    return osc


def degree(f: SampledMap, y, U: Subdomain, bump_factor: float = 0.5,
           bump_radius: float | None = None,
           df: DerivativeField | None = None) -> DegreeResult:
    """deg(f, y, U) by pulling back a unit bump at y over U."""
    if f.m != f.domain.n:
        raise ValueError("degree needs equal dimensions m = n")
    y = np.asarray(y, dtype=float)
    band = U.boundary_band(f.domain)
    if not np.any(band):
        raise ValueError("subdomain boundary not resolved by the grid")
    dist_boundary = float(np.min(_target_distance(f, f.values[band], y)))
    osc = _image_oscillation(f, band)
    if dist_boundary <= 2.0 * osc:
        raise ValueError(
            f"y too close to f(boundary U): dist {dist_boundary:.3g} <= 2 cells of "
            f"image oscillation {osc:.3g}")
    rho = bump_factor * dist_boundary if bump_radius is None else float(bump_radius)
    if rho > dist_boundary:
        raise ValueError("bump radius reaches the sampled image of the boundary")
    n = f.domain.n
    amp = 1.0 / bump_normalization(n, rho)
    bump = AnalyticTargetForm.of(
        n, n, {tuple(range(1, n + 1)): RadialBumpField(n, tuple(y), rho, amp=amp,
                                                       torus=f.torus)},
        torus=f.torus)
    fw = pullback(f, bump, df=df)
    raw = float(np.sum(fw.values[..., 0][U.mask(f.domain)]) * f.domain.cell_volume)
    return DegreeResult.from_raw(raw, rho, dist_boundary)


def _preimage_cells(f: SampledMap, y: np.ndarray, df: DerivativeField) -> list[tuple]:
    """Grid cells that are local minima of dist(f, y) below a resolution threshold."""
    d = _target_distance(f, f.values, y)
    thresh = float(np.max(df.opnorm)) * float(np.max(f.domain.h)) * 1.5
    cand = np.argwhere((d <= thresh) & f.domain.mask)
    cells = []
    for idx in map(tuple, cand):
        best = True
        for axis in range(f.domain.n):
            for step in (-1, 1):
                j = list(idx)
                j[axis] += step
                if 0 <= j[axis] < f.domain.res[axis] and d[tuple(j)] < d[idx]:
                    best = False
        if best:
            cells.append(idx)
    return cells


def _cluster(points: np.ndarray, sep: float) -> list[np.ndarray]:
    """Greedy clustering of points closer than sep."""
    clusters: list[list[np.ndarray]] = []
    for p in points:
        for cl in clusters:
            if np.linalg.norm(cl[0] - p) < sep:
                cl.append(p)
                break
        else:
            clusters.append([p])
    return [np.mean(cl, axis=0) for cl in clusters]


def _interpolate(f: SampledMap, x: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of the map at a point, wrap-aware on torus targets."""
    dom = f.domain
    n = dom.n
    rel = (x - np.asarray(dom.corner)) / dom.h - 0.5
    base = np.floor(rel).astype(int)
    frac = rel - base
    base = np.clip(base, 0, np.asarray(dom.res) - 2)
    frac = np.clip(rel - base, 0.0, 1.0)
    out = np.zeros(f.m)
    anchor = f.values[tuple(base)]
    for corner_bits in range(2**n):
        idx = []
        wgt = 1.0
        for axis in range(n):
            bit = (corner_bits >> axis) & 1
            idx.append(base[axis] + bit)
            wgt *= frac[axis] if bit else (1.0 - frac[axis])
        val = f.values[tuple(idx)]
        if f.torus:
            val = anchor + ((val - anchor) - np.round(val - anchor))
        out += wgt * val
    return out


def _refine_preimage(f: SampledMap, df: DerivativeField, y: np.ndarray,
                     x0: np.ndarray, iters: int = 40) -> tuple[np.ndarray, bool]:
    """Damped local inversion of f around a candidate preimage cell."""
    dom = f.domain
    x = x0.copy()
    half = 1.5 * dom.h
    lo, hi = x0 - half, x0 + half
    idx0 = tuple(np.clip(((x0 - np.asarray(dom.corner)) / dom.h - 0.5).round().astype(int),
                         0, np.asarray(dom.res) - 1))
    J = df.df[idx0]
    try:
        Jinv = np.linalg.inv(J)
    except np.linalg.LinAlgError:
        return x, False
    for _ in range(iters):
        fx = _interpolate(f, x)
        delta = y - fx
        if f.torus:
            delta = delta - np.round(delta)
        if np.linalg.norm(delta) < 1e-12:
            break
        x = np.clip(x + 0.8 * (Jinv @ delta), lo, hi)
    fx = _interpolate(f, x)
    delta = y - fx
    if f.torus:
        delta = delta - np.round(delta)
    ok = np.linalg.norm(delta) < 0.25 * float(np.min(dom.h)) * max(1.0, np.linalg.norm(J))
    return x, ok


def preimage_count(f: SampledMap, y, tol: float = 1e-6,
                   df: DerivativeField | None = None) -> dict:
    """Signed preimage count at a heuristically regular value y."""
    if f.m != f.domain.n:
        raise ValueError("preimage counting needs equal dimensions m = n")
    y = np.asarray(y, dtype=float)
    if df is None:
        df = derivative(f)
    cells = _preimage_cells(f, y, df)
    if not cells:
        return {"count": 0, "preimages": [], "signs": []}
    pts = np.array([f.domain.points[c] for c in cells])
    sep = 3.0 * float(np.max(f.domain.h))
    centers = _cluster(pts, sep)
    preimages, signs = [], []
    for c in centers:
        x, ok = _refine_preimage(f, df, y, np.asarray(c))
        if not ok:
            continue
        if any(np.linalg.norm(x - p) < sep for p in preimages):
            continue  # same root reached from a neighboring candidate cell
        idx = tuple(np.clip(((x - np.asarray(f.domain.corner)) / f.domain.h - 0.5)
                            .round().astype(int), 0, np.asarray(f.domain.res) - 1))
        j = float(df.jacobian[idx])
        if abs(j) <= tol:
            raise ValueError(f"suspected critical value: |J| = {abs(j):.3g} at {x}")
        preimages.append(x)
        signs.append(1 if j > 0 else -1)
    return {"count": int(sum(signs)), "preimages": preimages, "signs": signs}


def local_index(f: SampledMap, x, df: DerivativeField | None = None) -> DegreeResult:
    """Degree over the smallest dyadic ball isolating x among grid-detected preimages."""
    x = np.asarray(x, dtype=float)
    if df is None:
        df = derivative(f)
    y = _interpolate(f, x)
    cells = _preimage_cells(f, y, df)
    pts = np.array([f.domain.points[c] for c in cells]) if cells else np.zeros((0, f.domain.n))
    sep = 3.0 * float(np.max(f.domain.h))
    centers = [c for c in _cluster(pts, sep) if np.linalg.norm(c - x) > sep]
    nearest_other = min((np.linalg.norm(c - x) for c in centers), default=math.inf)

    lo = np.asarray(f.domain.corner)
    hi = lo + np.asarray(f.domain.sides)
    max_r = float(min(np.min(x - lo), np.min(hi - x)))
    r = float(np.max(f.domain.h)) * 4.0
    radius = None
    while r <= max_r:
        if r < 0.5 * nearest_other:
            radius = r
        r *= 2.0
    if radius is None:
        raise ValueError("isolation not detected at grid scale")
    ball = Subdomain.ball(x, radius)
    try:
        result = degree(f, y, ball, df=df)
    except ValueError:
        # boundary separation failed on the isolating ball: report, don't guess
        return DegreeResult(raw=math.nan, rounded=0, gap=math.inf, bump_radius=0.0,
                            boundary_distance=0.0, unreliable=True)
    jac = df.jacobian[ball.mask(f.domain)]
    scale = 1e-9 * float(np.max(np.abs(jac))) if jac.size else 0.0
    if np.any(jac < -scale) and np.any(jac > scale):
        # orientation flips inside the isolating ball: the degree no longer
        # counts preimages and the local index is not trustworthy
        result.unreliable = True
    return result


def excision_check(f: SampledMap, y, U: Subdomain, V: Subdomain,
                   df: DerivativeField | None = None) -> dict:
    """deg(f, y, U) = deg(f, y, V) when y avoids f(closure(U) minus V)."""
    y = np.asarray(y, dtype=float)
    ring = U.mask(f.domain) & ~V.mask(f.domain)
    if not np.any(ring):
        raise ValueError("V must be strictly smaller than U on the grid")
    dist_ring = float(np.min(_target_distance(f, f.values[ring], y)))
    osc = _image_oscillation(f, ring)
    if dist_ring <= 2.0 * osc:
        raise ValueError(
            f"y meets f(U \\ V) numerically: dist {dist_ring:.3g} <= {2 * osc:.3g}")
    if df is None:
        df = derivative(f)
    # one shared bump, admissible for both integrals and clear of f(U \ V)
    rho = 0.5 * min(_boundary_dist(f, y, U), _boundary_dist(f, y, V), dist_ring)
    du = degree(f, y, U, bump_radius=rho, df=df)
    dv = degree(f, y, V, bump_radius=rho, df=df)
    return {"deg_U": du, "deg_V": dv, "equal": du.rounded == dv.rounded}


def _boundary_dist(f: SampledMap, y, U: Subdomain) -> float:
    band = U.boundary_band(f.domain)
    return float(np.min(_target_distance(f, f.values[band], np.asarray(y, dtype=float))))
