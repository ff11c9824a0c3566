"""Analytic differential forms on Euclidean space R^m and the flat torus T^m.

Coefficient functions come in three closed-under-differentiation kinds:

* ``PolynomialField``: multivariate polynomials (Euclidean targets),
* ``TrigField``: real trigonometric polynomials, terms a cos(2 pi nu.y + phase)
  with integer frequency vectors nu (torus targets),
* ``RadialBumpField`` / ``RadialPlateauField``: compactly supported radial
  profiles used as test functions (torus distance aware).

A form is a dict from multi-indices over the target to scalar fields.
Constant-coefficient forms on T^m are the harmonic representatives of
their cohomology classes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .exterior_algebra import KCovector, index_position, multi_indices

__all__ = [
    "ScalarField",
    "ConstantField",
    "PolynomialField",
    "TrigField",
    "RadialBumpField",
    "RadialPlateauField",
    "AnalyticTargetForm",
    "constant_form",
    "harmonic_basis_forms",
]


class ScalarField:
    """Interface: evaluable coefficient function with analytic partials."""

    def __call__(self, y: np.ndarray) -> np.ndarray:  # (..., m) -> (...)
        raise NotImplementedError

    def partial(self, axis: int) -> "ScalarField":
        """d/dy_{axis+1}; axis is 0-based."""
        raise NotImplementedError

    def constant_part(self) -> float:
        """Mean over the torus (trig) or constant term (polynomial)."""
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantField(ScalarField):
    value: float

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return np.full(y.shape[:-1], self.value)

    def partial(self, axis):
        return ConstantField(0.0)

    def constant_part(self):
        return self.value


@dataclass(frozen=True)
class PolynomialField(ScalarField):
    """sum_alpha c_alpha * y^alpha over exponent tuples alpha."""

    m: int
    terms: tuple[tuple[tuple[int, ...], float], ...]

    @classmethod
    def of(cls, m: int, terms: Mapping[tuple[int, ...], float]) -> "PolynomialField":
        return cls(m, tuple(sorted((tuple(a), float(c)) for a, c in terms.items())))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1])
        for alpha, c in self.terms:
            t = np.full(y.shape[:-1], c)
            for j, e in enumerate(alpha):
                if e:
                    t = t * y[..., j] ** e
            out += t
        return out

    def partial(self, axis):
        new = {}
        for alpha, c in self.terms:
            e = alpha[axis]
            if e == 0:
                continue
            beta = list(alpha)
            beta[axis] = e - 1
            beta = tuple(beta)
            new[beta] = new.get(beta, 0.0) + c * e
        return PolynomialField.of(self.m, new)

    def constant_part(self):
        return sum(c for alpha, c in self.terms if not any(alpha))


@dataclass(frozen=True)
class TrigField(ScalarField):
    """sum_t a_t * cos(2 pi nu_t . y + phase_t), integer frequencies nu_t."""

    m: int
    terms: tuple[tuple[float, tuple[int, ...], float], ...]  # (amp, nu, phase)

    @classmethod
    def cos(cls, m: int, nu, amp: float = 1.0, phase: float = 0.0) -> "TrigField":
        return cls(m, ((float(amp), tuple(int(v) for v in nu), float(phase)),))

    @classmethod
    def sin(cls, m: int, nu, amp: float = 1.0) -> "TrigField":
        # sin(theta) = cos(theta - pi/2)
        return cls(m, ((float(amp), tuple(int(v) for v in nu), -0.5 * math.pi),))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1])
        for amp, nu, phase in self.terms:
            if not any(nu):
                out += amp * math.cos(phase)
                continue
            theta = 2.0 * math.pi * np.tensordot(y, np.asarray(nu, dtype=float), axes=([-1], [0]))
            out += amp * np.cos(theta + phase)
        return out

    def partial(self, axis):
        new = []
        for amp, nu, phase in self.terms:
            if nu[axis] == 0:
                continue
            # d/dy cos(theta + phase) = -2 pi nu_axis sin(...) = 2 pi nu cos(... + pi/2)
            new.append((amp * 2.0 * math.pi * nu[axis], nu, phase + 0.5 * math.pi))
        return TrigField(self.m, tuple(new))

    def constant_part(self):
        return sum(amp * math.cos(phase) for amp, nu, phase in self.terms if not any(nu))

    def plus(self, other: "TrigField") -> "TrigField":
        return TrigField(self.m, self.terms + other.terms)


def _torus_diff(y: np.ndarray, center: np.ndarray) -> np.ndarray:
    d = y - center
    return d - np.round(d)


@dataclass(frozen=True)
class RadialBumpField(ScalarField):
    """amp * (1 - dist^2(y, center)/radius^2)^4, zero outside the ball."""

    m: int
    center: tuple[float, ...]
    radius: float
    amp: float = 1.0
    torus: bool = False

    def _t2(self, y):
        y = np.asarray(y, dtype=float)
        c = np.asarray(self.center)
        d = _torus_diff(y, c) if self.torus else y - c
        return np.sum(d * d, axis=-1) / self.radius**2, d

    def __call__(self, y):
        t2, _ = self._t2(y)
        return self.amp * np.clip(1.0 - t2, 0.0, None) ** 4

    def partial(self, axis):
        return _RadialBumpPartial(self, axis)

    def constant_part(self):
        raise NotImplementedError("bump fields have no trig constant part")


@dataclass(frozen=True)
class _RadialBumpPartial(ScalarField):
    base: RadialBumpField
    axis: int

    def __call__(self, y):
        t2, d = self.base._t2(y)
        inside = np.clip(1.0 - t2, 0.0, None)
        return self.base.amp * 4.0 * inside**3 * (-2.0 * d[..., self.axis] / self.base.radius**2)


@dataclass(frozen=True)
class RadialPlateauField(ScalarField):
    """1 on dist <= r/2, 0 on dist >= r, smooth polynomial joint in between."""

    m: int
    center: tuple[float, ...]
    radius: float
    torus: bool = False

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        c = np.asarray(self.center)
        d = _torus_diff(y, c) if self.torus else y - c
        t = np.sqrt(np.sum(d * d, axis=-1)) / self.radius
        s = np.clip(2.0 * t - 1.0, 0.0, 1.0)
        return np.clip(1.0 - s * s, 0.0, None) ** 4

    def constant_part(self):
        raise NotImplementedError("plateau fields have no trig constant part")


@dataclass(frozen=True)
class AnalyticTargetForm:
    """Degree-k form on R^m or T^m with analytic coefficient fields."""

    m: int
    k: int
    coeffs: tuple[tuple[tuple[int, ...], ScalarField], ...]
    torus: bool = False
    closed: bool = False

    @classmethod
    def of(cls, m: int, k: int, coeffs: Mapping[tuple[int, ...], ScalarField],
           torus: bool = False, closed: bool = False) -> "AnalyticTargetForm":
        items = tuple(sorted(((tuple(I), f) for I, f in coeffs.items()),
                             key=lambda t: t[0]))
        return cls(m, k, items, torus=torus, closed=closed)

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        """Coefficient arrays at target points: (..., m) -> (..., binom(m, k))."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1] + (math.comb(self.m, self.k),))
        for I, f in self.coeffs:
            out[..., index_position(self.m, self.k, I)] += f(y)
        return out

    def at(self, y) -> KCovector:
        return KCovector(self.m, self.k, self.evaluate(np.asarray(y, dtype=float)))

    def exterior_derivative(self) -> "AnalyticTargetForm":
        new: dict[tuple[int, ...], list[ScalarField]] = {}
        for I, f in self.coeffs:
            for axis1 in range(1, self.m + 1):
                if axis1 in I:
                    continue
                J = tuple(sorted(I + (axis1,)))
                slot = J.index(axis1)
                sign = -1.0 if slot % 2 else 1.0
                g = f.partial(axis1 - 1)
                new.setdefault(J, []).append(_scaled(g, sign))
        merged = {J: _SumField(tuple(fs)) for J, fs in new.items()}
        return AnalyticTargetForm.of(self.m, self.k + 1, merged,
                                     torus=self.torus, closed=False)

    def verify_closed(self, samples: np.ndarray, tol: float = 1e-9) -> bool:
        if self.k == self.m:
            return True
        d = self.exterior_derivative()
        return float(np.max(np.abs(d.evaluate(samples)))) <= tol

    def sup_norm(self, samples: np.ndarray | None = None) -> float:
        """Sup of the pointwise Grassmann norm; exact for constant coefficients."""
        if samples is None:
            if all(isinstance(f, ConstantField) for _, f in self.coeffs):
                v = np.zeros(math.comb(self.m, self.k))
                for I, f in self.coeffs:
                    v[index_position(self.m, self.k, I)] += f.value
                return float(np.linalg.norm(v))
            raise ValueError("sup_norm of non-constant form needs sample points")
        vals = self.evaluate(samples)
        return float(np.max(np.sqrt(np.sum(vals**2, axis=-1))))

    def scale(self, factor: float) -> "AnalyticTargetForm":
        return AnalyticTargetForm.of(
            self.m, self.k, {I: _scaled(f, factor) for I, f in self.coeffs},
            torus=self.torus, closed=self.closed)


@dataclass(frozen=True)
class _SumField(ScalarField):
    parts: tuple[ScalarField, ...]

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1])
        for p in self.parts:
            out += p(y)
        return out

    def partial(self, axis):
        return _SumField(tuple(p.partial(axis) for p in self.parts))

    def constant_part(self):
        return sum(p.constant_part() for p in self.parts)


@dataclass(frozen=True)
class _ScaledField(ScalarField):
    base: ScalarField
    factor: float

    def __call__(self, y):
        return self.factor * self.base(y)

    def partial(self, axis):
        return _ScaledField(self.base.partial(axis), self.factor)

    def constant_part(self):
        return self.factor * self.base.constant_part()


def _scaled(f: ScalarField, factor: float) -> ScalarField:
    if factor == 1.0:
        return f
    return _ScaledField(f, factor)


def constant_form(m: int, k: int, index: tuple[int, ...], value: float = 1.0,
                  torus: bool = False) -> AnalyticTargetForm:
    """The constant-coefficient form value * dy^I (harmonic on the torus)."""
    return AnalyticTargetForm.of(
        m, k, {tuple(index): ConstantField(float(value))}, torus=torus, closed=True)


def harmonic_basis_forms(m: int, k: int) -> list[tuple[tuple[int, ...], AnalyticTargetForm]]:
    """Constant forms dy^I spanning H^k of the flat torus T^m."""
    return [(I, constant_form(m, k, I, torus=True)) for I in multi_indices(m, k)]
