"""Built-in analytic map families with exact derivatives for oracle checks.

* ``linear_family(A)``: x -> A x, optionally reduced mod Z^m.
* ``covering_family(n, scale)``: x -> scale * x mod Z^n, the standard
  covering of the flat torus; a local similarity with |Df| = scale.
* ``winding_family(k)``: the planar winding map (r, theta) -> (r, k theta),
  the classical degree-k map with constant distortion K = k.
* ``radial_family(a)``: the radial stretch x -> |x|^{a-1} x with
  |Df| = a r^{a-1} and J = a r^{n(a-1)}.
* ``bump_perturbed_covering(...)``: a covering map perturbed inside a small
  ball, built together with an analytic Sigma that makes the perturbed map
  satisfy the relaxed distortion inequalities by construction.
* ``eventually_constant_family(...)``: a torus-valued map that is constant
  outside a compact ball (finite energy, exact Stokes-vanishing input).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid_forms import GridDomain, GridForm, bump_profile
from .sampled_maps import SampledMap

__all__ = [
    "MapFamily",
    "PerturbedCovering",
    "linear_family",
    "covering_family",
    "winding_family",
    "radial_family",
    "bump_perturbed_covering",
    "eventually_constant_family",
    "sample",
    "family_by_name",
]


@dataclass(frozen=True)
class MapFamily:
    name: str
    n: int
    m: int
    torus: bool
    f: Callable[[np.ndarray], np.ndarray]          # (..., n) -> (..., m)
    df: Callable[[np.ndarray], np.ndarray] | None  # (..., n) -> (..., m, n)


def sample(family: MapFamily, domain: GridDomain) -> SampledMap:
    if domain.n != family.n:
        raise ValueError(f"family expects dimension {family.n}, domain has {domain.n}")
    return SampledMap(domain, family.m, family.f(domain.points), torus=family.torus)


def exact_df(family: MapFamily, domain: GridDomain) -> np.ndarray:
    if family.df is None:
        raise ValueError(f"family {family.name} has no closed-form derivative")
    return family.df(domain.points)


def linear_family(A: np.ndarray, torus: bool = False) -> MapFamily:
    A = np.asarray(A, dtype=float)
    m, n = A.shape

    def f(x):
        y = np.tensordot(x, A, axes=([-1], [1]))
        return np.mod(y, 1.0) if torus else y

    def df(x):
        return np.broadcast_to(A, x.shape[:-1] + (m, n)).copy()

    return MapFamily(name="linear", n=n, m=m, torus=torus, f=f, df=df)


def covering_family(n: int, scale: float = 1.0) -> MapFamily:
    fam = linear_family(scale * np.eye(n), torus=True)
    return MapFamily(name="covering", n=n, m=n, torus=True, f=fam.f, df=fam.df)


def winding_family(k: int) -> MapFamily:
    """(r, theta) -> (r, k theta) in the plane; degree k, distortion K = k."""

    def f(x):
        r = np.sqrt(np.sum(x * x, axis=-1))
        theta = np.arctan2(x[..., 1], x[..., 0])
        return np.stack([r * np.cos(k * theta), r * np.sin(k * theta)], axis=-1)

    def df(x):
        xx, yy = x[..., 0], x[..., 1]
        r = np.sqrt(xx * xx + yy * yy)
        r = np.where(r == 0.0, 1e-300, r)
        theta = np.arctan2(yy, xx)
        ckt, skt = np.cos(k * theta), np.sin(k * theta)
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = (xx / r) * ckt + (k * yy / r) * skt
        out[..., 0, 1] = (yy / r) * ckt - (k * xx / r) * skt
        out[..., 1, 0] = (xx / r) * skt - (k * yy / r) * ckt
        out[..., 1, 1] = (yy / r) * skt + (k * xx / r) * ckt
        return out

    return MapFamily(name="winding", n=2, m=2, torus=False, f=f, df=df)


def radial_family(n: int, a: float) -> MapFamily:
    """x -> |x|^{a-1} x; singular values a r^{a-1} (radial) and r^{a-1} (angular)."""

    def f(x):
        r = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
        r = np.where(r == 0.0, 1e-300, r)
        return r ** (a - 1.0) * x

    def df(x):
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        r2 = np.where(r2 == 0.0, 1e-300, r2)
        r = np.sqrt(r2)
        outer = x[..., :, None] * x[..., None, :] / r2[..., None]
        eye = np.eye(n)
        return (r ** (a - 1.0))[..., None] * (eye + (a - 1.0) * outer)

    return MapFamily(name="radial", n=n, m=n, torus=False, f=f, df=df)


@dataclass(frozen=True)
class PerturbedCovering:
    """Covering map with a compact bump perturbation and a compatible Sigma.

    The map is f(x) = (x + eps * phi(x) * u) mod Z^n with phi the standard
    bump profile on B(center, rho).  Since Df = I + eps u grad(phi)^T,

        |Df|^n - J_f <= c_n * eps * |grad phi|   with c_n = 2 (n + 1)

    whenever eps |grad phi| <= 1/4, so the map has a (1, Sigma)-quasiregular
    value at any y0 with dist(f(x), y0) >= d0 on the bump support, using
    Sigma = c_n eps |grad phi| / d0^n.  Outside the support the map is an
    isometry and the residual is zero.
    """

    family: MapFamily
    center: tuple[float, ...]
    rho: float
    eps: float
    y0: np.ndarray
    dist_floor: float

    def sigma_plain(self, domain: GridDomain) -> GridForm:
        """Sigma for the plain relaxed inequality |Df|^n <= K J + Sigma."""
        vals = self._sigma_density(domain.points)
        return GridForm(domain, 0, vals[..., None])

    def sigma_value(self, domain: GridDomain) -> GridForm:
        """Sigma for the quasiregular-value inequality at y0."""
        vals = self._sigma_density(domain.points) / self.dist_floor**self.family.n
        return GridForm(domain, 0, vals[..., None])

    def _sigma_density(self, pts: np.ndarray) -> np.ndarray:
        n = self.family.n
        c = np.asarray(self.center)
        d = pts - c
        t2 = np.sum(d * d, axis=-1) / self.rho**2
        inside = np.clip(1.0 - t2, 0.0, None)
        grad_mag = 8.0 * inside**3 * np.sqrt(t2) / self.rho
        return 2.0 * (n + 1) * self.eps * grad_mag


def bump_perturbed_covering(n: int, center, rho: float, eps: float,
                            direction=None) -> PerturbedCovering:
    center = tuple(float(c) for c in np.atleast_1d(center))
    u = np.zeros(n)
    u[0] = 1.0
    if direction is not None:
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)

    def phi(x):
        d = x - np.asarray(center)
        return bump_profile(np.sum(d * d, axis=-1) / rho**2)

    def f(x):
        return np.mod(x + eps * phi(x)[..., None] * u, 1.0)

    def df(x):
        d = x - np.asarray(center)
        t2 = np.sum(d * d, axis=-1) / rho**2
        inside = np.clip(1.0 - t2, 0.0, None)
        grad = 4.0 * inside[..., None] ** 3 * (-2.0 * d / rho**2)
        eye = np.eye(n)
        return eye + eps * u[:, None] * grad[..., None, :]

    fam = MapFamily(name="bump-perturbed-covering", n=n, m=n, torus=True, f=f, df=df)
    # y0 on the torus far from the image of the bump support: the map moves
    # points by at most eps, so place y0 at the antipode of the support center.
    y0 = np.mod(np.asarray(center) + 0.5, 1.0)
    dist_floor = 0.5 * math.sqrt(n) - rho - eps
    if dist_floor <= 0:
        raise ValueError("bump support too large to separate y0 from its image")
    return PerturbedCovering(family=fam, center=center, rho=rho, eps=eps,
                             y0=y0, dist_floor=dist_floor)


def eventually_constant_family(n: int, base, bumps, m: int | None = None) -> MapFamily:
    """Map into T^m equal to `base` outside the union of bump supports.

    ``bumps`` is a list of (center, rho, amp) deformations; with two or
    more overlapping bumps of independent amplitudes the Jacobian is not
    identically zero, so integral identities are probed non-trivially.
    """
    m = n if m is None else m
    base = np.asarray(base, dtype=float)
    bumps = [(np.asarray(c, dtype=float), float(r), np.asarray(a, dtype=float))
             for c, r, a in bumps]

    def f(x):
        out = np.broadcast_to(base, x.shape[:-1] + (m,)).copy()
        for c, rho, amp in bumps:
            d = x - c
            phi = bump_profile(np.sum(d * d, axis=-1) / rho**2)
            out = out + phi[..., None] * amp
        return np.mod(out, 1.0)

    def df(x):
        out = np.zeros(x.shape[:-1] + (m, n))
        for c, rho, amp in bumps:
            d = x - c
            t2 = np.sum(d * d, axis=-1) / rho**2
            inside = np.clip(1.0 - t2, 0.0, None)
            grad = 4.0 * inside[..., None] ** 3 * (-2.0 * d / rho**2)
            out += amp[:, None] * grad[..., None, :]
        return out

    return MapFamily(name="eventually-constant", n=n, m=m, torus=True, f=f, df=df)


def family_by_name(name: str, n: int = 2, **params) -> MapFamily:
    """CLI-facing registry: instantiate a family from its name and parameters."""
    if name == "linear":
        return linear_family(np.asarray(params["matrix"], dtype=float),
                             torus=bool(params.get("torus", False)))
    if name == "covering":
        return covering_family(n, scale=float(params.get("scale", 1.0)))
    if name == "winding":
        return winding_family(int(params.get("k", 2)))
    if name == "radial":
        return radial_family(n, float(params.get("a", 2.0)))
    if name == "eventually-constant":
        bumps = params.get("bumps")
        if bumps is None:
            bumps = [([0.1] + [0.0] * (n - 1), 0.5, [0.3] + [0.12] * (n - 1)),
                     ([-0.1] + [0.0] * (n - 1), 0.45, [0.0, 0.25] + [0.0] * (n - 2))]
        return eventually_constant_family(n, base=params.get("base", [0.25] * n),
                                          bumps=bumps)
    raise ValueError(f"unknown map family {name!r}")
