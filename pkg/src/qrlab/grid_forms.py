"""Differential k-form fields sampled on uniform grids over boxes and balls.

Grids are cell-centered tensor products.  Ball domains live on their
bounding box and carry a mask of in-domain cells; all integrals and
norms sum over masked cells only, while pointwise operations (wedge,
exterior derivative) act on the full bounding box so finite-difference
stencils never see ragged data.

The discrete exterior derivative uses central differences in the
interior and one-sided differences at the box boundary, so boundary
cells contribute an O(h) band to residuals.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exterior_algebra import (
    KCovector,
    contraction_table,
    index_position,
    multi_indices,
    wedge_table,
)

__all__ = [
    "GridDomain",
    "GridForm",
    "HolderSequence",
    "HolderReport",
    "exterior_derivative",
    "lp_norm",
    "integrate_top",
    "pairing",
    "wedge_forms",
    "bump_form",
    "bump_profile",
    "bump_normalization",
    "holder_validate",
    "write_qrgf",
    "read_qrgf",
]


@dataclass(frozen=True)
class GridDomain:
    """Cell-centered uniform grid over a box, optionally masked to a ball."""

    corner: tuple[float, ...]
    sides: tuple[float, ...]
    res: tuple[int, ...]
    ball: tuple[tuple[float, ...], float] | None = None

    def __post_init__(self):
        if len(self.corner) != len(self.sides) or len(self.sides) != len(self.res):
            raise ValueError("corner, sides, res must have equal length")
        if any(r < 4 for r in self.res):
            raise ValueError("resolution must be at least 4 per axis")
        if any(s <= 0 for s in self.sides):
            raise ValueError("box sides must be positive")

    @classmethod
    def box(cls, corner, sides, res) -> "GridDomain":
        corner = tuple(float(c) for c in np.atleast_1d(corner))
        sides = tuple(float(s) for s in np.atleast_1d(sides))
        if np.isscalar(res) or np.ndim(res) == 0:
            res = (int(res),) * len(corner)
        return cls(corner, sides, tuple(int(r) for r in res))

    @classmethod
    def ball_domain(cls, center, radius, res) -> "GridDomain":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        radius = float(radius)
        corner = tuple(center - radius)
        sides = (2.0 * radius,) * len(center)
        if np.isscalar(res) or np.ndim(res) == 0:
            res = (int(res),) * len(center)
        return cls(corner, sides, tuple(int(r) for r in res),
                   ball=(tuple(center), radius))

    @property
    def n(self) -> int:
        return len(self.res)

    @cached_property
    def h(self) -> np.ndarray:
        return np.array(self.sides) / np.array(self.res)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            self.corner[i] + (np.arange(self.res[i]) + 0.5) * self.h[i]
            for i in range(self.n)
        )

    @cached_property
    def points(self) -> np.ndarray:
        """Cell centers, shape res + (n,)."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(grids, axis=-1)

    @cached_property
    def mask(self) -> np.ndarray:
        """In-domain cells, shape res."""
        if self.ball is None:
            return np.ones(self.res, dtype=bool)
        center, radius = self.ball
        d2 = np.sum((self.points - np.asarray(center)) ** 2, axis=-1)
        return d2 <= radius * radius

    def shrunk_mask(self, sigma: float) -> np.ndarray:
        """In-domain cells of the domain scaled by sigma about its center."""
        if self.ball is not None:
            center, radius = self.ball
            d2 = np.sum((self.points - np.asarray(center)) ** 2, axis=-1)
            return d2 <= (sigma * radius) ** 2
        center = np.asarray(self.corner) + 0.5 * np.asarray(self.sides)
        half = 0.5 * sigma * np.asarray(self.sides)
        rel = np.abs(self.points - center)
        return np.all(rel <= half, axis=-1)

    def ball_mask(self, center, radius: float) -> np.ndarray:
        d2 = np.sum((self.points - np.asarray(center, dtype=float)) ** 2, axis=-1)
        return d2 <= radius * radius

    def compatible(self, other: "GridDomain") -> bool:
        return (
            self.res == other.res
            and np.allclose(self.corner, other.corner)
            and np.allclose(self.sides, other.sides)
        )

    def refine(self, factor: int = 2) -> "GridDomain":
        return GridDomain(self.corner, self.sides,
                          tuple(r * factor for r in self.res), self.ball)

    @property
    def radius(self) -> float:
        """Radius for balls, side length for boxes (the scale r of the domain)."""
        if self.ball is not None:
            return self.ball[1]
        return float(max(self.sides))


@dataclass(frozen=True)
class GridForm:
    """A k-form field: one KCovector coefficient array per grid cell."""

    domain: GridDomain
    k: int
    values: np.ndarray  # shape res + (binom(n, k),)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = self.domain.res + (math.comb(self.domain.n, self.k),)
        if v.shape != expected:
            raise ValueError(f"values shape {v.shape}, expected {expected}")
        if not np.all(np.isfinite(v)):
            raise ValueError("form values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, domain: GridDomain, cov: KCovector) -> "GridForm":
        vals = np.broadcast_to(cov.coeffs, domain.res + cov.coeffs.shape).copy()
        return cls(domain, cov.k, vals)

    @classmethod
    def zero(cls, domain: GridDomain, k: int) -> "GridForm":
        return cls(domain, k, np.zeros(domain.res + (math.comb(domain.n, k),)))

    def at(self, idx) -> KCovector:
        return KCovector(self.domain.n, self.k, self.values[idx])

    def __add__(self, other: "GridForm") -> "GridForm":
        return GridForm(self.domain, self.k, self.values + other.values)

    def __sub__(self, other: "GridForm") -> "GridForm":
        return GridForm(self.domain, self.k, self.values - other.values)

    def __mul__(self, scalar: float) -> "GridForm":
        return GridForm(self.domain, self.k, self.values * float(scalar))

    __rmul__ = __mul__

    def pointwise_grassmann(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=-1))


def exterior_derivative(omega: GridForm) -> GridForm:
    """Discrete d: central differences inside, one-sided at the box boundary."""
    dom = omega.domain
    n, k = dom.n, omega.k
    if k >= n:
        raise ValueError(f"cannot raise degree {k} in dimension {n}")
    out = np.zeros(dom.res + (math.comb(n, k + 1),))
    in_indices = multi_indices(n, k)
    for pos, I in enumerate(in_indices):
        for axis1 in range(1, n + 1):
            if axis1 in I:
                continue
            J = tuple(sorted(I + (axis1,)))
            slot = J.index(axis1)
            sign = -1.0 if slot % 2 else 1.0
            d = np.gradient(omega.values[..., pos], dom.h[axis1 - 1],
                            axis=axis1 - 1, edge_order=1)
            out[..., index_position(n, k + 1, J)] += sign * d
    return GridForm(dom, k + 1, out)


def lp_norm(omega: GridForm, p: float, mask: np.ndarray | None = None) -> float:
    """L^p norm over in-domain cells; p = inf gives the max pointwise norm."""
    m = omega.domain.mask if mask is None else mask
    mag = omega.pointwise_grassmann()[m]
    if mag.size == 0:
        return 0.0
    if math.isinf(p):
        return float(np.max(mag))
    if p < 1:
        raise ValueError("exponent must be >= 1")
    return float(np.sum(mag**p) * omega.domain.cell_volume) ** (1.0 / p)


def integrate_top(omega: GridForm, mask: np.ndarray | None = None) -> float:
    """Integral of a top-degree form over in-domain cells."""
    if omega.k != omega.domain.n:
        raise ValueError(f"integrate_top needs degree n = {omega.domain.n}")
    m = omega.domain.mask if mask is None else mask
    return float(np.sum(omega.values[..., 0][m]) * omega.domain.cell_volume)


def wedge_forms(a: GridForm, b: GridForm) -> GridForm:
    """Pointwise wedge of two fields on the same grid."""
    if not a.domain.compatible(b.domain):
        raise ValueError("wedge of forms on incompatible domains")
    n = a.domain.n
    out = np.zeros(a.domain.res + (math.comb(n, a.k + b.k),))
    for pa, pb, po, s in wedge_table(n, a.k, b.k):
        out[..., po] += s * a.values[..., pa] * b.values[..., pb]
    return GridForm(a.domain, a.k + b.k, out)


def contract_vector_field(a: GridForm, vecs: np.ndarray) -> GridForm:
    """Pointwise interior product of a k-form field with a vector field (res + (n,))."""
    n = a.domain.n
    out = np.zeros(a.domain.res + (math.comb(n, a.k - 1),))
    for pi, axis, po, s in contraction_table(n, a.k):
        out[..., po] += s * a.values[..., pi] * vecs[..., axis]
    return GridForm(a.domain, a.k - 1, out)


def pairing(omega: GridForm, eta: GridForm, mask: np.ndarray | None = None) -> float:
    """Integral of omega ^ eta for complementary degrees on a shared grid."""
    if omega.k + eta.k != omega.domain.n:
        raise ValueError("pairing needs complementary degrees")
    return integrate_top(wedge_forms(omega, eta), mask=mask)


def bump_profile(t2: np.ndarray) -> np.ndarray:
    """(1 - t^2)^4 profile evaluated at squared radius ratio t2, clipped outside."""
    return np.clip(1.0 - t2, 0.0, None) ** 4


def bump_normalization(n: int, radius: float) -> float:
    """Integral of the unnormalized bump over R^n in closed form."""
    return radius**n * math.pi ** (n / 2) * 24.0 / math.gamma(n / 2 + 5)


def bump_form(
    domain: GridDomain,
    center,
    radius: float,
    k: int,
    index: tuple[int, ...],
    normalize: bool = False,
) -> GridForm:
    """Smooth compactly supported field phi(x) e_I with the (1-t^2)^4 profile."""
    center = np.asarray(center, dtype=float)
    lo = np.asarray(domain.corner)
    hi = lo + np.asarray(domain.sides)
    if np.any(center - radius < lo - 1e-12) or np.any(center + radius > hi + 1e-12):
        raise ValueError("bump support must be contained in the domain box")
    if domain.ball is not None:
        bc, br = domain.ball
        if np.linalg.norm(center - np.asarray(bc)) + radius > br + 1e-12:
            raise ValueError("bump support must be contained in the ball")
    t2 = np.sum((domain.points - center) ** 2, axis=-1) / radius**2
    phi = bump_profile(t2)
    if normalize:
        if k != domain.n:
            raise ValueError("normalization applies to top-degree bumps")
        phi = phi / bump_normalization(domain.n, radius)
    vals = np.zeros(domain.res + (math.comb(domain.n, k),))
    vals[..., index_position(domain.n, k, tuple(index))] = phi
    return GridForm(domain, k, vals)


# ---------------------------------------------------------------------------
# Hoelder sequences p_0, ..., p_n governing the graded L^p algebra.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderSequence:
    exponents: tuple[float, ...]

    def __post_init__(self):
        for p in self.exponents:
            if not (p >= 1.0):
                raise ValueError("exponents must lie in [1, inf]")

    @classmethod
    def of(cls, *exponents: float) -> "HolderSequence":
        return cls(tuple(float(p) for p in exponents))

    @classmethod
    def degree_over_k(cls, n: int) -> "HolderSequence":
        """The sequence p_k = n/k (with p_0 = inf)."""
        return cls(tuple(math.inf if k == 0 else n / k for k in range(n + 1)))

    @property
    def n(self) -> int:
        return len(self.exponents) - 1

    def __getitem__(self, k: int) -> float:
        return self.exponents[k]


def _recip(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


@dataclass(frozen=True)
class HolderReport:
    valid: bool
    violations: tuple[tuple[int, int], ...]
    monotone: bool          # p_{k+1} <= p_k
    conjugate_bound: bool   # p_k* <= p_{n-k}
    unit_exponent_infinite: bool  # p_0 = inf

    def __bool__(self) -> bool:
        return self.valid


def holder_validate(seq: HolderSequence, tol: float = 1e-12) -> HolderReport:
    """Check p_k^{-1} + p_l^{-1} <= p_{k+l}^{-1} and report derived facts."""
    n = seq.n
    violations = []
    for k in range(n + 1):
        for l in range(n + 1 - k):
            if _recip(seq[k]) + _recip(seq[l]) > _recip(seq[k + l]) + tol:
                violations.append((k, l))
    monotone = all(seq[k + 1] <= seq[k] + tol for k in range(n))
    conj = True
    for k in range(n + 1):
        p = seq[k]
        pstar = math.inf if p <= 1.0 + tol else p / (p - 1.0)
        if _recip(seq[n - k]) > _recip(pstar) + tol:
            conj = False
    return HolderReport(
        valid=not violations,
        violations=tuple(violations),
        monotone=monotone,
        conjugate_bound=conj,
        unit_exponent_infinite=math.isinf(seq[0]),
    )


# ---------------------------------------------------------------------------
# QRGF binary format: magic "QRGF", version u32, n u32, k u32, per-axis
# resolution u32 list, then little-endian float64 coefficients, point-major
# then lexicographic-index order.  Maps are stored with their m target
# channels in the k slot.
# ---------------------------------------------------------------------------

_QRGF_MAGIC = b"QRGF"
_QRGF_VERSION = 1


def write_qrgf(path, n: int, k: int, res: tuple[int, ...], coeffs: np.ndarray):
    coeffs = np.ascontiguousarray(coeffs, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_QRGF_MAGIC)
        fh.write(struct.pack("<III", _QRGF_VERSION, n, k))
        fh.write(struct.pack(f"<{len(res)}I", *res))
        fh.write(coeffs.tobytes())


def read_qrgf(path) -> tuple[int, int, tuple[int, ...], np.ndarray]:
    """Returns (n, k_or_m, res, coeffs) with coeffs of shape res + (channels,)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _QRGF_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_QRGF_MAGIC!r}")
        version, n, k = struct.unpack("<III", fh.read(12))
        if version != _QRGF_VERSION:
            raise ValueError(f"unsupported QRGF version {version}")
        res = struct.unpack(f"<{n}I", fh.read(4 * n))
        data = np.frombuffer(fh.read(), dtype="<f8")
    channels = data.size // int(np.prod(res))
    return n, k, res, data.reshape(res + (channels,)).astype(float)
