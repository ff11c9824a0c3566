"""Dyadic-cube machinery: weak reverse Hoelder margins, the higher-
integrability probe, and the polynomial-growth table.

The reverse Hoelder inequality compares, per cube Q with 2Q inside the
root cube,

    inf_M |w|_M  avg_Q |DF|^n
        <=  K C(w) (avg_{2Q} |DF|^{n^2/(n+1)})^{(n+1)/n}  +  avg_{2Q} 2^n |Sigma|.

The constant C(w) is not explicit; a single calibration constant is
fitted over a reference suite once and frozen
(``FROZEN_REVERSE_HOLDER_CONSTANT``), after which "margin >= 0" is a
reproducible assertion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid_forms import GridDomain
from .sampled_maps import DerivativeField, SampledMap, derivative

__all__ = [
    "Cube",
    "CubeFamily",
    "GehringReport",
    "FROZEN_REVERSE_HOLDER_CONSTANT",
    "weak_reverse_holder_check",
    "calibrate_reverse_holder_constant",
    "gehring_probe",
    "growth_probe",
    "holder_average_monotonicity",
]

# Calibrated once over the covering / winding / perturbed-covering suite at
# 128^2 with 3 dyadic levels (see tests/test_estimates.py); frozen thereafter.
FROZEN_REVERSE_HOLDER_CONSTANT = 1.25


@dataclass(frozen=True)
class Cube:
    corner: tuple[float, ...]
    side: float

    def doubled(self) -> "Cube":
        c = np.asarray(self.corner) - 0.5 * self.side
        return Cube(tuple(c), 2.0 * self.side)

    def mask(self, domain: GridDomain) -> np.ndarray:
        lo = np.asarray(self.corner)
        hi = lo + self.side
        pts = domain.points
        return np.all((pts >= lo) & (pts < hi), axis=-1)


@dataclass(frozen=True)
class CubeFamily:
    """Dyadic subcubes Q of a root cube with 2Q contained in the root."""

    root: Cube
    levels: int
    cubes: tuple[Cube, ...]

    @classmethod
    def build(cls, root: Cube, levels: int) -> "CubeFamily":
        n = len(root.corner)
        cubes = []
        for lev in range(1, levels + 1):
            side = root.side / 2**lev
            per_axis = 2**lev
            for idx in np.ndindex(*([per_axis] * n)):
                corner = np.asarray(root.corner) + np.asarray(idx) * side
                q = Cube(tuple(corner), side)
                d = q.doubled()
                dlo = np.asarray(d.corner)
                dhi = dlo + d.side
                rlo = np.asarray(root.corner)
                if np.all(dlo >= rlo - 1e-12) and np.all(dhi <= rlo + root.side + 1e-12):
                    cubes.append(q)
        return cls(root=root, levels=levels, cubes=tuple(cubes))


def _cube_average(field: np.ndarray, domain: GridDomain, cube: Cube) -> float:
    m = cube.mask(domain)
    cnt = int(np.count_nonzero(m))
    if cnt == 0:
        raise ValueError(f"cube {cube} is not resolved by the grid")
    return float(np.sum(field[m]) / cnt)


@dataclass
class ReverseHolderRow:
    cube: Cube
    lhs: float
    rhs_gradient_term: float
    rhs_sigma_term: float
    margin: float


def weak_reverse_holder_check(F: SampledMap, omega_floor: float, K: float,
                              cubes: CubeFamily, sigma: np.ndarray | None = None,
                              df: DerivativeField | None = None,
                              constant: float = FROZEN_REVERSE_HOLDER_CONSTANT
                              ) -> list[ReverseHolderRow]:
    """Per-cube margins of the weak reverse Hoelder estimate.

    omega_floor is inf over the target of the comass of the reference form
    (1.0 when the form is the volume form).
    """
    if df is None:
        df = derivative(F)
    n = F.domain.n
    q = n * n / (n + 1)
    opn = df.opnorm
    sig = np.zeros(F.domain.res) if sigma is None else sigma
    rows = []
    for cube in cubes.cubes:
        lhs = omega_floor * _cube_average(opn**n, F.domain, cube)
        grad = _cube_average(opn**q, F.domain, cube.doubled()) ** ((n + 1) / n)
        sig_term = 2**n * _cube_average(np.abs(sig), F.domain, cube.doubled())
        margin = K * constant * grad + sig_term - lhs
        rows.append(ReverseHolderRow(cube=cube, lhs=lhs, rhs_gradient_term=grad,
                                     rhs_sigma_term=sig_term, margin=margin))
    return rows


def calibrate_reverse_holder_constant(suite) -> float:
    """Smallest constant making every margin nonnegative over a suite.

    ``suite`` is an iterable of (F, omega_floor, K, cubes, sigma) tuples.
    """
    worst = 0.0
    for F, omega_floor, K, cubes, sigma in suite:
        rows = weak_reverse_holder_check(F, omega_floor, K, cubes, sigma=sigma,
                                         constant=0.0)
        for row in rows:
            if row.lhs - row.rhs_sigma_term > 0:
                worst = max(worst, (row.lhs - row.rhs_sigma_term)
                            / (K * row.rhs_gradient_term))
    return worst


@dataclass
class GehringReport:
    lambdas: tuple[float, ...]
    ratios: dict[float, float]            # lambda -> max over cubes of LHS/RHS
    refined_ratios: dict[float, float] | None
    lambda_star: float
    stable: dict[float, bool]


DEFAULT_LAMBDAS = (1.01, 1.02, 1.05, 1.1, 1.2)


def _gehring_ratios(opnorm: np.ndarray, sig: np.ndarray, domain: GridDomain,
                    cubes: CubeFamily, lambdas) -> dict[float, float]:
    n = domain.n
    out = {}
    for lam in lambdas:
        worst = 0.0
        for cube in cubes.cubes:
            lhs = _cube_average(opnorm ** (lam * n), domain, cube) ** (n / (lam * (n + 1)))
            r1 = _cube_average(opnorm**n, domain, cube.doubled()) ** (n / (n + 1))
            r2 = _cube_average(np.abs(sig) ** lam, domain, cube.doubled()) ** (
                n / (lam * (n + 1)))
            worst = max(worst, lhs / max(r1 + r2, 1e-300))
        out[lam] = worst
    return out


def gehring_probe(F: SampledMap, cubes: CubeFamily, sigma: np.ndarray | None = None,
                  lambdas=DEFAULT_LAMBDAS, df: DerivativeField | None = None,
                  refined: tuple[SampledMap, CubeFamily] | None = None,
                  stability: float = 0.2) -> GehringReport:
    """Max over cubes of the higher-integrability ratio, per lambda.

    lambda* is the largest lambda whose ratio moves by at most ``stability``
    (relative) under one grid refinement; without a refined map, the largest
    lambda with a finite ratio.
    """
    if df is None:
        df = derivative(F)
    sig = np.zeros(F.domain.res) if sigma is None else sigma
    ratios = _gehring_ratios(df.opnorm, sig, F.domain, cubes, lambdas)
    refined_ratios = None
    stable = {lam: True for lam in lambdas}
    if refined is not None:
        F2, cubes2 = refined
        df2 = derivative(F2)
        sig2 = np.zeros(F2.domain.res) if sigma is None else None
        if sigma is not None:
            raise ValueError("refined stability check expects sigma = None")
        refined_ratios = _gehring_ratios(df2.opnorm, np.zeros(F2.domain.res),
                                         F2.domain, cubes2, lambdas)
        for lam in lambdas:
            a, b = ratios[lam], refined_ratios[lam]
            stable[lam] = abs(a - b) <= stability * max(a, b)
    candidates = [lam for lam in lambdas if math.isfinite(ratios[lam]) and stable[lam]]
    lam_star = max(candidates) if candidates else 1.0
    return GehringReport(lambdas=tuple(lambdas), ratios=ratios,
                         refined_ratios=refined_ratios, lambda_star=lam_star,
                         stable=stable)


def growth_probe(F: SampledMap, q0: Cube, schedule: list[float], lam: float,
                 df: DerivativeField | None = None) -> dict:
    """Energy over 2Q against the reference rate r^{(1 - 1/lambda) n}.

    ``schedule`` lists side lengths of nested cubes containing q0, all
    concentric with it.
    """
    if df is None:
        df = derivative(F)
    dom = F.domain
    n = dom.n
    opn = df.opnorm
    center = np.asarray(q0.corner) + 0.5 * q0.side
    rows = []
    for side in sorted(schedule):
        if side < q0.side:
            raise ValueError("schedule cubes must contain the base cube")
        q = Cube(tuple(center - 0.5 * side), side)
        dbl = q.doubled()
        m = dbl.mask(dom)
        energy = float(np.sum(opn[m] ** n) * dom.cell_volume)
        rows.append({"side": side, "energy": energy,
                     "reference": side ** ((1.0 - 1.0 / lam) * n)})
    sides = np.log([r["side"] for r in rows])
    energies = np.log([max(r["energy"], 1e-300) for r in rows])
    slope = float(np.polyfit(sides, energies, 1)[0]) if len(rows) >= 2 else math.nan
    return {"rows": rows, "slope": slope,
            "reference_slope": (1.0 - 1.0 / lam) * n}


def holder_average_monotonicity(F: SampledMap, cubes: CubeFamily,
                                df: DerivativeField | None = None) -> float:
    """Largest violation of (avg |DF|^q)^{1/q} <= (avg |DF|^p)^{1/p}, q < p.

    Returns the max over cubes of the signed excess; power-mean
    monotonicity makes this nonpositive up to roundoff.
    """
    if df is None:
        df = derivative(F)
    n = F.domain.n
    q = n * n / (n + 1)
    p = float(n)
    worst = -math.inf
    for cube in cubes.cubes:
        a = _cube_average(df.opnorm**q, F.domain, cube) ** (1.0 / q)
        b = _cube_average(df.opnorm**p, F.domain, cube) ** (1.0 / p)
        worst = max(worst, a - b)
    return worst
