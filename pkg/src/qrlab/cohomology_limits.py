"""Desk-scale pipeline from rescaled map families to a cohomology embedding.

The chain implemented here follows the energy-normalization route:

1. ``normalizing_factor``: A(F, Sigma) = integral over the unit ball of
   K *(F^* w) + Sigma.
2. ``family_check``: membership in the admissible family (distortion
   inequality, doubling bound, comass floor, Sigma mass bound).
3. ``reduction_measure`` / ``hunting_search``: the measure with density
   K *(F^* w) + Sigma and the search for a ball with mass >= j and
   doubling ratio <= D.
4. ``normalized_pullback``: G_j^! a = A_j^{-k/n} F_j^* a, uniformly bounded
   in j for admissible sequences.
5. ``exact_form_decay`` / ``build_limit_map``: pairings against a fixed
   dictionary of compactly supported bumps estimate the vague limit of
   each cohomology class; exact classes decay like A_j^{-1/n}.
6. ``point_evaluate_phi``: evaluate the limit fields at a grid point
   chosen to minimize the wedge-compatibility defect, producing a graded
   linear map into the exterior algebra of the domain.

Vague limits cannot be certified numerically; the limit field is the
final normalized pull-back after mollification, and the dictionary
pairing increments are reported as a Cauchy diagnostic instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exterior_algebra import (
    ComassConfig,
    KCovector,
    comass_norm,
    interior_product,
    multi_indices,
    index_position,
    wedge,
    wedge_table,
)
from .exterior_algebra import _merge_sign  # basis product bookkeeping
from .grid_forms import (
    GridDomain,
    GridForm,
    bump_form,
    exterior_derivative,
    integrate_top,
    lp_norm,
    pairing,
    wedge_forms,
    HolderSequence,
    holder_validate,
)
from .sampled_maps import (
    DerivativeField,
    DistortionParams,
    SampledMap,
    derivative,
    distortion_check,
    pullback,
    torus_dist,
)
from .target_forms import (
    AnalyticTargetForm,
    ConstantField,
    RadialPlateauField,
    ScalarField,
    TrigField,
    constant_form,
    harmonic_basis_forms,
)
from .degree_index import Subdomain
from .families import covering_family, sample

__all__ = [
    "FamilyParams",
    "SequenceEntry",
    "NormalizedSequence",
    "DiscreteMeasure",
    "HarmonicBasis",
    "BumpSpec",
    "LimitMap",
    "PhiResult",
    "normalizing_factor",
    "family_check",
    "hunting_search",
    "reduction_measure",
    "normalized_pullback",
    "admissibility_check",
    "exact_form_decay",
    "build_limit_map",
    "point_evaluate_phi",
    "pairing_lower_bound_check",
    "kunneth_decompose",
    "stokes_vanishing_check",
    "qrv_energy_experiment",
    "covering_rescalings",
    "default_dictionary",
]


@dataclass(frozen=True)
class FamilyParams:
    """Constants of the admissible family: distortion K, size D, reference n-form."""

    K: float
    D: float
    omega: AnalyticTargetForm

    def __post_init__(self):
        if self.K < 0 or self.D < 1:
            raise ValueError("need K >= 0 and D >= 1")


@dataclass
class SequenceEntry:
    F: SampledMap
    A: float
    sigma: GridForm | None = None
    r: float = 1.0
    center: tuple[float, ...] = ()
    df: DerivativeField | None = None

    def derivative_field(self) -> DerivativeField:
        if self.df is None:
            self.df = derivative(self.F)
        return self.df


@dataclass
class NormalizedSequence:
    params: FamilyParams
    entries: list[SequenceEntry]


@dataclass
class DiscreteMeasure:
    """Nonnegative cell weights over a grid; weights integrate the density."""

    domain: GridDomain
    weights: np.ndarray
    clamped_mass: float = 0.0

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    def ball_mass(self, center, radius: float) -> float:
        return float(np.sum(self.weights[self.domain.ball_mask(center, radius)]))


@dataclass(frozen=True)
class HarmonicBasis:
    """Constant-coefficient forms dy^I representing H^*(T^m)."""

    m: int
    top_degree: int

    def classes(self, k: int) -> list[tuple[tuple[int, ...], AnalyticTargetForm]]:
        return harmonic_basis_forms(self.m, k)

    def all_classes(self) -> list[tuple[int, tuple[int, ...], AnalyticTargetForm]]:
        out = []
        for k in range(self.top_degree + 1):
            for I, form in self.classes(k):
                out.append((k, I, form))
        return out


def _sigma_values(sigma: GridForm | None, domain: GridDomain) -> np.ndarray:
    if sigma is None:
        return np.zeros(domain.res)
    return sigma.values[..., 0]


def _density(F: SampledMap, sigma: GridForm | None, params: FamilyParams,
             df: DerivativeField | None = None) -> np.ndarray:
    """K *(F^* w) + Sigma sampled on the map's grid."""
    star = pullback(F, params.omega, df=df).values[..., 0]
    return params.K * star + _sigma_values(sigma, F.domain)


def _inner_ball_mask(domain: GridDomain) -> np.ndarray:
    """The unit-scale ball inside a radius-2 domain (generally: half radius)."""
    if domain.ball is None:
        raise ValueError("normalization is defined on ball domains")
    center, radius = domain.ball
    return domain.ball_mask(center, 0.5 * radius)


def normalizing_factor(F: SampledMap, sigma: GridForm | None, params: FamilyParams,
                       df: DerivativeField | None = None) -> float:
    """A(F, Sigma): integral of the density over the inner ball."""
    dens = _density(F, sigma, params, df=df)
    return float(np.sum(dens[_inner_ball_mask(F.domain)]) * F.domain.cell_volume)


@dataclass
class FamilyCheck:
    distortion_ok: bool
    distortion_margin: float     # -max residual; >= 0 means (4) holds a.e.
    doubling_ok: bool
    doubling_values: tuple[float, float]   # (integral over B_2, D * integral over B)
    comass_ok: bool
    comass_floor: float
    sigma_ok: bool
    sigma_mass: float

    @property
    def member(self) -> bool:
        return self.distortion_ok and self.doubling_ok and self.comass_ok and self.sigma_ok


def family_check(F: SampledMap, sigma: GridForm | None, params: FamilyParams,
                 df: DerivativeField | None = None,
                 comass_cfg: ComassConfig | None = None,
                 residual_tol: float = 1e-9) -> FamilyCheck:
    """Margins for the four admissibility conditions of the map family."""
    if df is None:
        df = derivative(F)
    dp = DistortionParams(K=params.K, sigma=sigma, omega=params.omega,
                          comass_cfg=comass_cfg or ComassConfig())
    kind = "qr-curve-sigma" if sigma is not None else "qr-curve"
    rep = distortion_check(F, kind, dp, df=df)
    res_max = rep.quantiles["q100"]
    scale = max(1.0, float(np.max(np.abs(rep.lhs))))

    dens = _density(F, sigma, params, df=df)
    outer = float(np.sum(dens[F.domain.mask]) * F.domain.cell_volume)
    inner = float(np.sum(dens[_inner_ball_mask(F.domain)]) * F.domain.cell_volume)

    target_vals = params.omega.evaluate(F.values)
    flat = target_vals.reshape(-1, target_vals.shape[-1])[F.domain.mask.reshape(-1)]
    cfg = comass_cfg or ComassConfig()
    floor = math.inf
    for row in np.unique(np.round(flat, 12), axis=0):
        floor = min(floor, comass_norm(KCovector(params.omega.m, params.omega.k, row), cfg))

    sig_mass = float(np.sum(np.abs(_sigma_values(sigma, F.domain))[F.domain.mask])
                     * F.domain.cell_volume)
    return FamilyCheck(
        distortion_ok=res_max <= residual_tol * scale,
        distortion_margin=-res_max,
        doubling_ok=(outer > 0.0) and (outer <= params.D * inner * (1 + 1e-9)),
        doubling_values=(outer, params.D * inner),
        comass_ok=floor >= 1.0 / params.D,
        comass_floor=floor,
        sigma_ok=sig_mass <= params.D,
        sigma_mass=sig_mass,
    )


def reduction_measure(F: SampledMap, sigma: GridForm | None, params: FamilyParams,
                      df: DerivativeField | None = None) -> DiscreteMeasure:
    """Cell masses of the measure with density K *(F^* w) + Sigma, clamped at 0."""
    dens = _density(F, sigma, params, df=df) * F.domain.cell_volume
    dens = np.where(F.domain.mask, dens, 0.0)
    clamped = float(-np.sum(dens[dens < 0.0]))
    weights = np.clip(dens, 0.0, None)
    total = float(np.sum(weights))
    if total > 0 and clamped > 0.01 * total:
        raise ValueError(
            f"density has substantial negative mass ({clamped:.3g} of {total:.3g}); "
            "the map does not satisfy the distortion inequality")
    return DiscreteMeasure(F.domain, weights, clamped)


@dataclass
class HuntingResult:
    found: bool
    center: tuple[float, ...]
    radius: float
    mass_inner: float
    mass_doubled: float
    best_shortfall: float = 0.0


def hunting_search(mu: DiscreteMeasure, j: float, D: float,
                   center_stride: int | None = None) -> HuntingResult:
    """First grid-centered ball with mu(2B) >= j and mu(2B) <= D mu(B).

    Scans dyadic radii (ascending) and grid-subsampled centers in
    lexicographic order; on failure reports the closest candidate.
    """
    dom = mu.domain
    if mu.total < j:
        raise ValueError(f"total mass {mu.total:.3g} below the threshold {j}")
    stride = center_stride or max(1, min(dom.res) // 8)
    axes_idx = [np.arange(stride // 2, r, stride) for r in dom.res]
    hmin = float(np.min(dom.h))
    max_radius = 0.25 * float(np.min(dom.sides))
    radius = 4.0 * hmin
    best = None
    while radius <= max_radius:
        for flat in np.ndindex(*[len(a) for a in axes_idx]):
            idx = tuple(axes_idx[i][flat[i]] for i in range(dom.n))
            center = tuple(dom.points[idx])
            m1 = mu.ball_mass(center, radius)
            m2 = mu.ball_mass(center, 2.0 * radius)
            ok = (m2 >= j) and (m2 <= D * m1)
            shortfall = max(j - m2, m2 - D * m1)
            if best is None or shortfall < best.best_shortfall:
                best = HuntingResult(False, center, radius, m1, m2,
                                     best_shortfall=shortfall)
            if ok:
                return HuntingResult(True, center, radius, m1, m2)
        radius *= 2.0
    return best


def normalized_pullback(F: SampledMap, A: float, alpha: AnalyticTargetForm,
                        df: DerivativeField | None = None) -> GridForm:
    """G^! alpha = A^{-k/n} F^* alpha."""
    if A <= 0:
        raise ValueError("normalizing factor must be positive")
    n = F.domain.n
    return A ** (-alpha.k / n) * pullback(F, alpha, df=df)


@dataclass
class AdmissibilityReport:
    ratios: dict[tuple[int, tuple[int, ...], int], float]  # (k, I, j) -> ratio
    worst: float
    bound: float
    passed: bool


def admissibility_check(seq: NormalizedSequence, basis: HarmonicBasis, C: float,
                        holder: HolderSequence) -> AdmissibilityReport:
    """max_{j,k,alpha} ||F_j^* alpha||_{p_k} / (A_j^{k/n} ||alpha||_inf) <= C."""
    if not holder_validate(holder).valid:
        raise ValueError("exponent sequence fails the Hoelder condition")
    n = seq.entries[0].F.domain.n
    ratios = {}
    worst = 0.0
    for ji, entry in enumerate(seq.entries):
        df = entry.derivative_field()
        for k, I, form in basis.all_classes():
            if k > n:
                continue
            pb = pullback(entry.F, form, df=df)
            norm = lp_norm(pb, holder[k])
            denom = entry.A ** (k / n) * form.sup_norm()
            ratio = norm / denom if denom > 0 else 0.0
            ratios[(k, I, ji)] = ratio
            worst = max(worst, ratio)
    return AdmissibilityReport(ratios=ratios, worst=worst, bound=C, passed=worst <= C)


# ---------------------------------------------------------------------------
# Test dictionary: compactly supported bumps at several scales and centers.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpSpec:
    center: tuple[float, ...]
    radius: float
    degree: int
    index: tuple[int, ...]

    def materialize(self, domain: GridDomain) -> GridForm:
        return bump_form(domain, self.center, self.radius, self.degree, self.index)


def default_dictionary(n: int, degree: int, extent: float = 1.0,
                       scales=(0.3, 0.45, 0.7), offsets=(-0.35, 0.35)) -> list[BumpSpec]:
    """Bumps at a few scales and centers for every basis direction of a degree."""
    specs = []
    centers = [np.zeros(n)]
    for axis in range(n):
        for off in offsets:
            c = np.zeros(n)
            c[axis] = off * extent
            centers.append(c)
    for s in scales:
        for c in centers:
            for I in multi_indices(n, degree):
                specs.append(BumpSpec(tuple(c), s * extent, degree, I))
    return specs


@dataclass
class DecayRow:
    j: int
    A: float
    pairing_max: float
    normalized: float   # pairing * A^{1/n}


@dataclass
class DecayTable:
    rows: list[DecayRow]
    consistent: bool
    fitted_exponent: float | None


def exact_form_decay(seq: NormalizedSequence, alpha: AnalyticTargetForm,
                     dictionary: list[BumpSpec], slack: float = 3.0) -> DecayTable:
    """Pairings of G_j^! d(alpha) against the dictionary, with an A_j^{-1/n} fit."""
    n = seq.entries[0].F.domain.n
    dalpha = alpha.exterior_derivative()
    rows = []
    for ji, entry in enumerate(seq.entries):
        g = normalized_pullback(entry.F, entry.A, dalpha, df=entry.derivative_field())
        best = 0.0
        for spec in dictionary:
            if spec.degree != n - dalpha.k:
                continue
            eta = spec.materialize(entry.F.domain)
            best = max(best, abs(pairing(eta, g)))
        rows.append(DecayRow(j=ji, A=entry.A, pairing_max=best,
                             normalized=best * entry.A ** (1.0 / n)))
    norms = [r.normalized for r in rows]
    base = max(norms[0], 1e-300)
    consistent = all(v <= slack * base for v in norms)
    fitted = None
    pos = [(math.log(r.A), math.log(r.pairing_max)) for r in rows if r.pairing_max > 0]
    if len(pos) >= 2:
        xs, ys = zip(*pos)
        fitted = float(np.polyfit(xs, ys, 1)[0])
    return DecayTable(rows=rows, consistent=consistent, fitted_exponent=fitted)


# ---------------------------------------------------------------------------
# The limit map L and its point evaluation Phi.
# ---------------------------------------------------------------------------

@dataclass
class LimitClass:
    k: int
    label: tuple[int, ...]
    field: GridForm
    cauchy_increments: list[float]
    closedness_residual: float


@dataclass
class LimitMap:
    domain: GridDomain
    classes: dict[tuple[int, tuple[int, ...]], LimitClass]

    def field(self, k: int, label: tuple[int, ...]) -> GridForm:
        return self.classes[(k, tuple(label))].field


def _box_smooth(values: np.ndarray, passes: int = 3, width: int = 3) -> np.ndarray:
    """Separable repeated box filter; approximates a B-spline mollifier."""
    out = values.copy()
    half = width // 2
    for _ in range(passes):
        for axis in range(values.ndim - 1):
            acc = np.zeros_like(out)
            cnt = np.zeros(out.shape[:-1] + (1,))
            for off in range(-half, half + 1):
                src = np.roll(out, off, axis=axis)
                valid = np.ones(out.shape[:-1] + (1,))
                # zero-pad: mask rolled-in wrap values
                idx = [slice(None)] * out.ndim
                if off > 0:
                    idx[axis] = slice(0, off)
                elif off < 0:
                    idx[axis] = slice(out.shape[axis] + off, None)
                if off != 0:
                    src[tuple(idx)] = 0.0
                    valid[tuple(idx[:-1]) + (slice(None),)] = 0.0
                acc += src
                cnt += valid
            out = acc / np.maximum(cnt, 1.0)
    return out


def build_limit_map(seq: NormalizedSequence, basis: HarmonicBasis,
                    holder: HolderSequence, dictionary: list[BumpSpec],
                    mollify_passes: int = 3) -> LimitMap:
    """Estimate L(c) as the mollified final normalized pull-back of each class."""
    n = seq.entries[0].F.domain.n
    final = seq.entries[-1]
    labels = [(k, I, form) for k, I, form in basis.all_classes() if k <= n]

    pairings: dict[tuple[int, tuple[int, ...]], list[np.ndarray]] = \
        {(k, I): [] for k, I, _ in labels}
    for entry in seq.entries:
        etas = {spec: spec.materialize(entry.F.domain) for spec in dictionary}
        df = entry.derivative_field()
        for k, I, form in labels:
            g = normalized_pullback(entry.F, entry.A, form, df=df)
            vals = [pairing(etas[spec], g) for spec in dictionary
                    if spec.degree == n - k]
            pairings[(k, I)].append(np.asarray(vals))

    etas_final = {spec: spec.materialize(final.F.domain) for spec in dictionary}
    classes = {}
    for k, I, form in labels:
        by_j = pairings[(k, I)]
        increments = [float(np.max(np.abs(by_j[i] - by_j[i - 1]))) if by_j[i].size else 0.0
                      for i in range(1, len(by_j))]
        g_final = normalized_pullback(final.F, final.A, form, df=final.derivative_field())
        smooth = GridForm(g_final.domain, k,
                          _box_smooth(g_final.values, passes=mollify_passes))
        closed_res = 0.0
        if k < n:
            scale = max(lp_norm(smooth, 1.0), 1e-300)
            for spec in dictionary:
                if spec.degree != n - k - 1:
                    continue
                deta = exterior_derivative(etas_final[spec])
                closed_res = max(closed_res, abs(pairing(smooth, deta)) / scale)
        classes[(k, I)] = LimitClass(k=k, label=I, field=smooth,
                                     cauchy_increments=increments,
                                     closedness_residual=closed_res)
    return LimitMap(domain=final.F.domain, classes=classes)


@dataclass
class PhiResult:
    x0: tuple[float, ...]
    table: dict[tuple[int, tuple[int, ...]], KCovector]
    defect: float
    rank: int

    def apply(self, k: int, label: tuple[int, ...]) -> KCovector:
        return self.table[(k, tuple(label))]


def _basis_product(m: int, I: tuple[int, ...], J: tuple[int, ...]):
    """dy^I ^ dy^J = sign * dy^{I u J}, or None when an index repeats."""
    s = _merge_sign(I, J)
    if s == 0:
        return None
    return s, tuple(sorted(I + J))


def point_evaluate_phi(L: LimitMap, interior: float = 0.45, stride: int | None = None,
                       defect_tol: float = 0.25) -> PhiResult:
    """Scan grid points for the best wedge-compatible evaluation of L.

    The score at x is the largest relative defect
    |L(c_i)_x ^ L(c_l)_x - L(c_i ^ c_l)_x| over all basis pairs with
    degree sum <= n; the minimizer becomes the evaluation point x0.
    """
    dom = L.domain
    n = dom.n
    center = np.asarray(dom.ball[0]) if dom.ball else \
        np.asarray(dom.corner) + 0.5 * np.asarray(dom.sides)
    radius = interior * dom.radius
    mask = dom.ball_mask(center, radius)
    stride = stride or max(1, min(dom.res) // 32)
    sub = np.zeros(dom.res, dtype=bool)
    sub[(slice(None, None, stride),) * n] = True
    mask = mask & sub
    if not np.any(mask):
        raise ValueError("no interior candidate points on the grid")

    labels = sorted(L.classes.keys())
    fields = {key: L.classes[key].field.values[mask] for key in labels}
    scale = {key: max(float(np.max(np.sqrt(np.sum(v**2, axis=-1)))), 1e-300)
             for key, v in fields.items()}

    npts = next(iter(fields.values())).shape[0]
    defect = np.zeros(npts)
    for (k1, I1) in labels:
        for (k2, I2) in labels:
            if k1 + k2 > n or k1 == 0 or k2 == 0:
                continue
            a = fields[(k1, I1)]
            b = fields[(k2, I2)]
            prod = np.zeros((npts, math.comb(n, k1 + k2)))
            for pa, pb, po, s in wedge_table(n, k1, k2):
                prod[:, po] += s * a[:, pa] * b[:, pb]
            target = np.zeros_like(prod)
            bp = _basis_product(n, I1, I2)
            if bp is not None:
                s, IJ = bp
                target = s * fields[(k1 + k2, IJ)]
            err = np.sqrt(np.sum((prod - target) ** 2, axis=-1))
            defect = np.maximum(defect, err / (scale[(k1, I1)] * scale[(k2, I2)]))

    best = int(np.argmin(defect))
    if defect[best] > defect_tol:
        raise ValueError(f"no candidate point reaches defect <= {defect_tol}; "
                         f"best is {defect[best]:.3g}")
    pts = dom.points[mask]
    x0 = tuple(pts[best])
    table = {key: KCovector(n, key[0], fields[key][best]) for key in labels}

    dim_total = 2**n
    rows = []
    for key in labels:
        k = key[0]
        vec = np.zeros(dim_total)
        off = sum(math.comb(n, kk) for kk in range(k))
        vec[off:off + math.comb(n, k)] = table[key].coeffs
        rows.append(vec)
    mat = np.array(rows)
    svals = np.linalg.svd(mat, compute_uv=False)
    rank = int(np.sum(svals > 1e-8 * svals[0])) if svals.size else 0
    return PhiResult(x0=x0, table=table, defect=float(defect[best]), rank=rank)


def pairing_lower_bound_check(seq: NormalizedSequence) -> list[dict]:
    """Per j: pairing of the unit-ball cut-off against A_j^{-1} F_j^* w.

    The admissibility argument forces
    integral(eta * A^{-1} F^* w) >= 1/K - (1 + D)/(K A).
    """
    params = seq.params
    out = []
    for ji, entry in enumerate(seq.entries):
        dom = entry.F.domain
        if dom.ball is None:
            raise ValueError("pairing bound needs ball domains")
        center, radius = dom.ball
        eta = RadialPlateauField(dom.n, center, radius, torus=False)
        etav = eta(dom.points)
        star = pullback(entry.F, params.omega, df=entry.derivative_field()).values[..., 0]
        val = float(np.sum((etav * star)[dom.mask]) * dom.cell_volume) / entry.A
        bound = 1.0 / params.K - (1.0 + params.D) / (params.K * entry.A)
        out.append({"j": ji, "A": entry.A, "pairing": val, "bound": bound,
                    "holds": val >= bound - 1e-9})
    return out


# ---------------------------------------------------------------------------
# Kuenneth decomposition of closed forms on the torus.
# ---------------------------------------------------------------------------

def _as_trig_terms(f: ScalarField) -> list[tuple[float, tuple[int, ...], float]]:
    from .target_forms import _ScaledField, _SumField
    if isinstance(f, ConstantField):
        return [(f.value, (), 0.0)]
    if isinstance(f, TrigField):
        return [(a, nu, ph) for a, nu, ph in f.terms]
    if isinstance(f, _ScaledField):
        return [(f.factor * a, nu, ph) for a, nu, ph in _as_trig_terms(f.base)]
    if isinstance(f, _SumField):
        out = []
        for p in f.parts:
            out.extend(_as_trig_terms(p))
        return out
    raise ValueError(f"coefficient field {type(f).__name__} is not trigonometric")


def _canonical_frequency(nu: tuple[int, ...], phase: float):
    for v in nu:
        if v > 0:
            return nu, phase
        if v < 0:
            return tuple(-x for x in nu), -phase
    return nu, phase


@dataclass
class KunnethDecomposition:
    pairs: list[tuple[AnalyticTargetForm, AnalyticTargetForm]]
    class_covector: KCovector
    antiderivative: AnalyticTargetForm | None
    residual: float

    def reconstruct_class(self) -> KCovector:
        """Wedge the constant parts of the pairs back together."""
        m = self.class_covector.n
        total = KCovector.zero(m, self.class_covector.k)
        for a, b in self.pairs:
            pa = a.at(np.zeros(m))
            pb = b.at(np.zeros(m))
            total = total + wedge(pa, pb)
        return total


def kunneth_decompose(omega: AnalyticTargetForm, rng_samples: int = 64,
                      seed: int = 0) -> KunnethDecomposition:
    """Split a closed torus form into monomial products plus an exact remainder.

    The constant-coefficient (harmonic) part c_I dy^I decomposes as
    (c_I dy^{i_1}) ^ dy^{I'}.  The oscillatory remainder is written as the
    exterior derivative of an explicit trigonometric antiderivative, one
    frequency at a time.
    """
    if not omega.torus:
        raise ValueError("Kuenneth decomposition implemented for torus targets")
    m, k = omega.m, omega.k
    if k < 2:
        raise ValueError("decomposition applies to degrees k >= 2")

    const = np.zeros(math.comb(m, k))
    freq: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}
    for I, fcoef in omega.coeffs:
        pos = index_position(m, k, I)
        for amp, nu, ph in _as_trig_terms(fcoef):
            if not any(nu):
                const[pos] += amp * math.cos(ph)
                continue
            cnu, cph = _canonical_frequency(nu, ph)
            ac, as_ = freq.setdefault(cnu, (np.zeros(math.comb(m, k)),
                                            np.zeros(math.comb(m, k))))
            ac[pos] += amp * math.cos(cph)
            as_[pos] -= amp * math.sin(cph)

    pairs = []
    for pos, I in enumerate(multi_indices(m, k)):
        c = const[pos]
        if c == 0.0:
            continue
        alpha = constant_form(m, 1, (I[0],), value=c, torus=True)
        beta = constant_form(m, k - 1, I[1:], torus=True)
        pairs.append((alpha, beta))

    antiderivative = None
    if freq:
        tau_coeffs: dict[tuple[int, ...], list] = {}
        for nu, (ac, as_) in freq.items():
            nuv = np.asarray(nu, dtype=float)
            nu2 = float(nuv @ nuv)
            for which, arr in (("c", ac), ("s", as_)):
                cov = KCovector(m, k, arr)
                if k < m:
                    # closedness per frequency: nu-flat wedge must vanish
                    nu_flat = KCovector(m, 1, nuv)
                    if np.max(np.abs(wedge(nu_flat, cov).coeffs)) > 1e-9 * max(
                            1.0, float(np.max(np.abs(arr)))):
                        raise ValueError(f"form is not closed at frequency {nu}")
                gamma = interior_product(cov, nuv) * (1.0 / (2.0 * math.pi * nu2))
                for Jpos, J in enumerate(multi_indices(m, k - 1)):
                    g = gamma.coeffs[Jpos]
                    if g == 0.0:
                        continue
                    # cos part integrates to sin, sin part to -cos
                    phase = -0.5 * math.pi if which == "c" else math.pi
                    tau_coeffs.setdefault(J, []).append((g, nu, phase))
        fields = {J: TrigField(m, tuple(terms)) for J, terms in tau_coeffs.items()}
        antiderivative = AnalyticTargetForm.of(m, k - 1, fields, torus=True)

    rng = np.random.default_rng(seed)
    ys = rng.random((rng_samples, m))
    recon = np.zeros((rng_samples, math.comb(m, k)))
    recon += const
    if antiderivative is not None:
        recon += antiderivative.exterior_derivative().evaluate(ys)
    residual = float(np.max(np.abs(omega.evaluate(ys) - recon)))
    return KunnethDecomposition(pairs=pairs, class_covector=KCovector(m, k, const),
                                antiderivative=antiderivative, residual=residual)


# ---------------------------------------------------------------------------
# Stokes vanishing and the isolated-preimage energy experiment.
# ---------------------------------------------------------------------------

@dataclass
class StokesReport:
    integral: float
    tail_deviation: float
    resolution: int


def stokes_vanishing_check(F: SampledMap, omega: AnalyticTargetForm,
                           support_center, support_radius: float,
                           df: DerivativeField | None = None) -> StokesReport:
    """|integral of F^* w| for a map constant outside a compact ball."""
    dom = F.domain
    outside = ~dom.ball_mask(support_center, support_radius)
    if not np.any(outside):
        raise ValueError("support ball covers the whole sampled box")
    ref = F.values[tuple(np.argwhere(outside)[0])]
    if F.torus:
        dev = float(np.max(torus_dist(F.values[outside], ref)))
    else:
        dev = float(np.max(np.linalg.norm(F.values[outside] - ref, axis=-1)))
    if dev > 1e-9:
        raise ValueError(
            f"map is not constant outside the declared support (deviation {dev:.3g})")
    fw = pullback(F, omega, df=df)
    return StokesReport(integral=float(integrate_top(fw)), tail_deviation=dev,
                        resolution=int(max(dom.res)))


def qrv_energy_experiment(f: SampledMap, sigma: GridForm | None, K: float,
                          radii: list[float], x0, U0: Subdomain,
                          df: DerivativeField | None = None) -> list[dict]:
    """Degree-localization table for an isolated preimage of y0 = f(x0).

    For each target radius r: the localized pull-back integral over U0,
    the companion integral over V_r = f^{-1} B(y0, r) minus U0, and the
    Sigma mass over f^{-1} B(y0, r).
    """
    if df is None:
        df = derivative(f)
    dom = f.domain
    x0 = np.asarray(x0, dtype=float)
    idx0 = tuple(np.clip(((x0 - np.asarray(dom.corner)) / dom.h - 0.5).round().astype(int),
                         0, np.asarray(dom.res) - 1))
    y0 = f.values[idx0]
    n = dom.n
    u_mask = U0.mask(dom)
    dist = torus_dist(f.values, y0) if f.torus else \
        np.sqrt(np.sum((f.values - y0) ** 2, axis=-1))
    rows = []
    for r in radii:
        eta_vol = AnalyticTargetForm.of(
            f.m, n, {tuple(range(1, n + 1)): RadialPlateauField(f.m, tuple(y0), r,
                                                                torus=f.torus)},
            torus=f.torus)
        fw = pullback(f, eta_vol, df=df).values[..., 0]
        lhs = float(np.sum(fw[u_mask]) * dom.cell_volume)
        v_mask = (dist < r) & ~u_mask & dom.mask
        companion = -float(np.sum(fw[v_mask]) * dom.cell_volume)
        pre_mask = (dist < r) & dom.mask
        sig_mass = float(np.sum(_sigma_values(sigma, dom)[pre_mask]) * dom.cell_volume)
        half_ball_vol = (math.pi ** (f.m / 2) / math.gamma(f.m / 2 + 1)) * (r / 2) ** f.m
        rows.append({
            "r": r,
            "localized_integral": lhs,
            "companion": companion,
            "sigma_mass": sig_mass,
            "half_ball_volume": half_ball_vol,
            "ratio": lhs / half_ball_vol if half_ball_vol > 0 else math.inf,
        })
    return rows


# ---------------------------------------------------------------------------
# Rescaled covering families for the embedding experiments.
# ---------------------------------------------------------------------------

def covering_rescalings(n: int, scales: list[float], params: FamilyParams,
                        res_rule=None) -> NormalizedSequence:
    """F_j(x) = r_j x mod Z^n on the radius-2 ball, with A_j computed exactly."""
    entries = []
    for r in scales:
        res = res_rule(r) if res_rule else max(64, int(12 * r))
        res += res % 2  # keep cell centers off the origin
        dom = GridDomain.ball_domain([0.0] * n, 2.0, res)
        F = sample(covering_family(n, scale=r), dom)
        df = derivative(F)
        A = normalizing_factor(F, None, params, df=df)
        entries.append(SequenceEntry(F=F, A=A, sigma=None, r=r, df=df))
    return NormalizedSequence(params=params, entries=entries)
