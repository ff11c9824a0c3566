"""Grid-sampled maps into R^m or the flat torus T^m = R^m/Z^m.

Derivatives are central differences; torus-valued samples are locally
unwrapped first (each neighbor lifted to the representative nearest the
center value), which requires the per-cell oscillation of the map to
stay below half a period.  Jacobians exist only for m = n.

``distortion_check`` evaluates the pointwise residual of one of five
inequalities relating |Df|^n to the Jacobian / pulled-back n-form:

    qr              |Df|^n <= K J_f
    qr-value        |Df|^n <= K J_f + dist^n(f, y0) Sigma
    qr-curve        |w_F|_M |DF|^n <= K *(F^* w)
    qr-curve-sigma  |w_F|_M |DF|^n <= K *(F^* w) + Sigma
    qr-curve-value  |w_F|_M |DF|^n <= K *(F^* w) + dist^n(F, y0) Sigma

Residual <= 0 means the inequality holds at that cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exterior_algebra import ComassConfig, KCovector, comass_norm, multi_indices
from .grid_forms import GridDomain, GridForm
from .target_forms import AnalyticTargetForm

__all__ = [
    "SampledMap",
    "DerivativeField",
    "DistortionParams",
    "DistortionReport",
    "derivative",
    "pullback",
    "pullback_exact",
    "torus_dist",
    "distortion_check",
    "energy",
]

DISTORTION_KINDS = ("qr", "qr-value", "qr-curve", "qr-curve-sigma", "qr-curve-value")


@dataclass(frozen=True)
class SampledMap:
    """A map sampled at the cell centers of a grid domain."""

    domain: GridDomain
    m: int
    values: np.ndarray  # res + (m,)
    torus: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.domain.res + (self.m,):
            raise ValueError(f"values shape {v.shape}, expected {self.domain.res + (self.m,)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("map values must be finite")
        if self.torus:
            v = np.mod(v, 1.0)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, domain: GridDomain, m: int, f, torus: bool = False) -> "SampledMap":
        return cls(domain, m, np.asarray(f(domain.points), dtype=float), torus=torus)


@dataclass(frozen=True)
class DerivativeField:
    """Per-cell derivative matrices with operator norms and Jacobians."""

    domain: GridDomain
    df: np.ndarray                 # res + (m, n)
    opnorm: np.ndarray             # res
    jacobian: np.ndarray | None    # res, only when m = n


def _wrap_delta(d: np.ndarray) -> np.ndarray:
    """Lift differences of torus values to the representative in [-1/2, 1/2)."""
    return d - np.round(d)


def _axis_gradient(values: np.ndarray, h: float, axis: int, torus: bool) -> np.ndarray:
    """Central difference along one axis, one-sided at the ends.

    For torus values every single-step difference is wrapped to the
    nearest representative before combining.
    """
    fwd = np.diff(values, axis=axis)
    if torus:
        fwd = _wrap_delta(fwd)

    def take(arr, sl):
        idx = [slice(None)] * arr.ndim
        idx[axis] = sl
        return arr[tuple(idx)]

    out = np.empty_like(values)
    # interior: average of adjacent single-step differences
    interior = 0.5 * (take(fwd, slice(1, None)) + take(fwd, slice(None, -1)))
    idx = [slice(None)] * values.ndim
    idx[axis] = slice(1, -1)
    out[tuple(idx)] = interior
    idx[axis] = slice(0, 1)
    out[tuple(idx)] = take(fwd, slice(0, 1))
    idx[axis] = slice(-1, None)
    out[tuple(idx)] = take(fwd, slice(-1, None))
    return out / h


def derivative(f: SampledMap) -> DerivativeField:
    """Finite-difference derivative field with |Df| and J_f (when m = n)."""
    dom = f.domain
    n = dom.n
    df = np.empty(dom.res + (f.m, n))
    for axis in range(n):
        df[..., :, axis] = _axis_gradient(f.values, float(dom.h[axis]), axis, f.torus)
    if f.m == 2 and n == 2:
        # closed-form largest singular value of a 2x2 block
        a, b = df[..., 0, 0], df[..., 0, 1]
        c, d = df[..., 1, 0], df[..., 1, 1]
        frob2 = a * a + b * b + c * c + d * d
        det = a * d - b * c
        gap = np.sqrt(np.maximum(frob2 * frob2 - 4.0 * det * det, 0.0))
        opnorm = np.sqrt(np.maximum(0.5 * (frob2 + gap), 0.0))
        jac = det
    else:
        svals = np.linalg.svd(df, compute_uv=False)
        opnorm = svals[..., 0]
        jac = np.linalg.det(df) if f.m == n else None
    return DerivativeField(dom, df, opnorm, jac)


def _minor_tables(m: int, n: int, k: int):
    rows = np.array(multi_indices(m, k), dtype=int) - 1
    cols = np.array(multi_indices(n, k), dtype=int) - 1
    return rows, cols


def pullback(f: SampledMap, omega: AnalyticTargetForm,
             df: DerivativeField | None = None) -> GridForm:
    """Pull back an analytic k-form on the target through a sampled map."""
    if omega.m != f.m:
        raise ValueError(f"form lives on R^{omega.m}, map targets R^{f.m}")
    k = omega.k
    if k > min(f.m, f.domain.n):
        raise ValueError(f"degree {k} too large for pull-back to R^{f.domain.n}")
    if df is None:
        df = derivative(f)
    return _pullback_from_df(f.domain, df.df, f.values, omega)


def pullback_exact(domain: GridDomain, omega: AnalyticTargetForm,
                   values: np.ndarray, df_values: np.ndarray) -> GridForm:
    """Pull-back using caller-supplied exact map values and derivatives."""
    return _pullback_from_df(domain, df_values, values, omega)


def _pullback_from_df(domain: GridDomain, df: np.ndarray, fvals: np.ndarray,
                      omega: AnalyticTargetForm) -> GridForm:
    n = domain.n
    k = omega.k
    target_coeffs = omega.evaluate(fvals)  # res + (binom(m,k),)
    if k == 0:
        return GridForm(domain, 0, target_coeffs)
    rows, cols = _minor_tables(omega.m, n, k)
    out = np.zeros(domain.res + (math.comb(n, k),))
    for pj in range(cols.shape[0]):
        sub = df[..., :, cols[pj]]                   # res + (m, k)
        if k == 1:
            minors = sub[..., rows[:, 0], 0]         # res + (num_I,)
        else:
            minors = np.linalg.det(sub[..., rows, :])  # res + (num_I,)
        out[..., pj] = np.sum(minors * target_coeffs, axis=-1)
    return GridForm(domain, k, out)


def torus_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Flat-torus distance, coordinates wrapped to the nearest representative."""
    d = _wrap_delta(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.sqrt(np.sum(d * d, axis=-1))


@dataclass
class DistortionParams:
    K: float
    sigma: GridForm | None = None          # degree-0 field on the map's domain
    y0: np.ndarray | None = None
    omega: AnalyticTargetForm | None = None
    comass_cfg: ComassConfig = field(default_factory=ComassConfig)
    norm: str = "comass"                   # or "grassmann", for cross-checks


@dataclass
class DistortionReport:
    kind: str
    residual: np.ndarray               # res; <= 0 means inequality satisfied
    lhs: np.ndarray
    rhs: np.ndarray
    minimal_constant: np.ndarray       # minimal K (qr) or minimal Sigma (qr-value)
    constant_mask: np.ndarray          # cells where the minimal constant is defined
    quantiles: dict[str, float]
    satisfied_fraction: float
    omega_vanishing: bool = False

    def max_min_constant(self) -> float:
        vals = self.minimal_constant[self.constant_mask]
        return float(np.max(vals)) if vals.size else math.nan


def _comass_of_values(coeff_values: np.ndarray, m: int, k: int,
                      cfg: ComassConfig, norm: str) -> np.ndarray:
    """Pointwise comass over a field of covector coefficients.

    Distinct coefficient vectors (after rounding) are evaluated once;
    constant-coefficient reference forms therefore cost a single comass.
    """
    flat = coeff_values.reshape(-1, coeff_values.shape[-1])
    if norm == "grassmann":
        return np.linalg.norm(flat, axis=-1).reshape(coeff_values.shape[:-1])
    rounded = np.round(flat, 12)
    uniq, inverse = np.unique(rounded, axis=0, return_inverse=True)
    vals = np.array([comass_norm(KCovector(m, k, row), cfg) for row in uniq])
    return vals[inverse].reshape(coeff_values.shape[:-1])


def distortion_check(f: SampledMap, kind: str, params: DistortionParams,
                     df: DerivativeField | None = None) -> DistortionReport:
    """Residual field LHS - RHS of the requested distortion inequality."""
    if kind not in DISTORTION_KINDS:
        raise ValueError(f"unknown inequality kind {kind!r}")
    dom = f.domain
    n = dom.n
    if df is None:
        df = derivative(f)
    opn = df.opnorm**n
    K = params.K

    if kind in ("qr", "qr-value"):
        if f.m != n:
            raise ValueError("qr kinds need equal dimensions m = n")
        jac = df.jacobian
        if kind == "qr":
            lhs = opn
            rhs = K * jac
            positive = jac > 0
            min_const = np.where(positive, opn / np.where(positive, jac, 1.0), np.nan)
            report_mask = positive
        else:
            if params.y0 is None or params.sigma is None:
                raise ValueError("qr-value needs y0 and sigma")
            dist = (torus_dist(f.values, params.y0) if f.torus
                    else np.sqrt(np.sum((f.values - np.asarray(params.y0)) ** 2, axis=-1)))
            distn = dist**n
            sig = params.sigma.values[..., 0]
            lhs = opn
            rhs = K * jac + distn * sig
            away = distn > 1e-300
            min_const = np.where(
                away, np.maximum(0.0, (opn - K * jac)) / np.where(away, distn, 1.0), np.nan)
            report_mask = away
    else:
        omega = params.omega
        if omega is None:
            raise ValueError("curve kinds need the reference n-form")
        if omega.k != n:
            raise ValueError(f"reference form must have degree n = {n}")
        fw = pullback(f, omega, df=df)
        star = fw.values[..., 0]          # Hodge star of an n-form on R^n
        target_vals = omega.evaluate(f.values)
        grassmann = np.sqrt(np.sum(target_vals**2, axis=-1))
        vanishing = bool(np.any(grassmann[dom.mask] < 1e-12))
        com = _comass_of_values(target_vals, omega.m, omega.k,
                                params.comass_cfg, params.norm)
        lhs = com * opn
        if kind == "qr-curve":
            rhs = K * star
        elif kind == "qr-curve-sigma":
            if params.sigma is None:
                raise ValueError("qr-curve-sigma needs sigma")
            rhs = K * star + params.sigma.values[..., 0]
        else:
            if params.y0 is None or params.sigma is None:
                raise ValueError("qr-curve-value needs y0 and sigma")
            dist = (torus_dist(f.values, params.y0) if f.torus
                    else np.sqrt(np.sum((f.values - np.asarray(params.y0)) ** 2, axis=-1)))
            rhs = K * star + dist**n * params.sigma.values[..., 0]
        min_const = np.where(star > 0, lhs / np.where(star > 0, star, 1.0), np.nan)
        report_mask = star > 0

    residual = lhs - rhs
    inside = dom.mask
    res_in = residual[inside]
    qs = {f"q{int(100 * q)}": float(np.quantile(res_in, q))
          for q in (0.0, 0.5, 0.9, 0.99, 1.0)}
    report = DistortionReport(
        kind=kind,
        residual=residual,
        lhs=lhs,
        rhs=rhs,
        minimal_constant=min_const,
        constant_mask=report_mask & inside,
        quantiles=qs,
        satisfied_fraction=float(np.mean(res_in <= 0.0)),
    )
    if kind.startswith("qr-curve"):
        report.omega_vanishing = vanishing
    return report


def energy(f: SampledMap, mask: np.ndarray | None = None,
           df: DerivativeField | None = None, p: float | None = None) -> float:
    """The n-energy: integral of |Df|^n over a region (default: the whole domain)."""
    if df is None:
        df = derivative(f)
    dom = f.domain
    p = float(dom.n) if p is None else float(p)
    m = dom.mask if mask is None else (mask & dom.mask)
    return float(np.sum(df.opnorm[m] ** p) * dom.cell_volume)
