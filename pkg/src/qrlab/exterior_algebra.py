"""Exact multilinear algebra on k-covectors over R^n.

Conventions used throughout the package:

* A k-covector is stored as a dense coefficient array over the basis
  ``e_I = dx^{i_1} ^ ... ^ dx^{i_k}`` with ``I = (i_1 < ... < i_k)`` a
  strictly increasing multi-index of axis numbers in ``1..n``, ordered
  lexicographically.
* ``e_I(v_1, ..., v_k) = det(V[I-1, :])`` for the n-by-k matrix ``V``
  whose columns are the arguments.
* Two norms live on each graded piece: the Grassmann norm (Euclidean
  norm of basis coefficients) and the comass norm (supremum over
  orthonormal k-frames).  The comass is computed by multi-start
  projected ascent over frames, cross-checked by a random-sampling
  oracle.

Everything is 64-bit floating point; exactness claims in the tests mean
absolute error at most 1e-12.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "MultiIndex",
    "KCovector",
    "ComassConfig",
    "ComassReport",
    "multi_indices",
    "index_position",
    "wedge",
    "interior_product",
    "hodge_star",
    "grassmann_inner",
    "grassmann_norm",
    "frame_evaluate",
    "comass_norm",
    "comass_report",
    "pullback_linear",
]

MultiIndex = tuple[int, ...]


@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> tuple[MultiIndex, ...]:
    """All strictly increasing multi-indices of length k in 1..n, lexicographic."""
    if not 0 <= k <= n:
        raise ValueError(f"degree {k} out of range for dimension {n}")
    return tuple(combinations(range(1, n + 1), k))


@lru_cache(maxsize=None)
def _position_table(n: int, k: int) -> dict[MultiIndex, int]:
    return {I: pos for pos, I in enumerate(multi_indices(n, k))}


def index_position(n: int, k: int, index: MultiIndex) -> int:
    """Position of a multi-index in the lexicographic basis order."""
    return _position_table(n, k)[tuple(index)]


def _merge_sign(a: MultiIndex, b: MultiIndex) -> int:
    """Sign of sorting the concatenation (a, b) of two increasing index tuples.

    Counts inversions between the blocks; returns 0 on a shared index.
    """
    inversions = 0
    for x in a:
        for y in b:
            if x == y:
                return 0
            if x > y:
                inversions += 1
    return -1 if inversions % 2 else 1


@dataclass(frozen=True)
class KCovector:
    """Dense k-covector over R^n in the lexicographic multi-index basis."""

    n: int
    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        if not 0 <= self.k <= self.n:
            raise ValueError(f"degree {self.k} out of range for dimension {self.n}")
        c = np.asarray(self.coeffs, dtype=float)
        expected = math.comb(self.n, self.k)
        if c.shape != (expected,):
            raise ValueError(
                f"coefficient array has shape {c.shape}, expected ({expected},)"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, n: int, k: int) -> "KCovector":
        return cls(n, k, np.zeros(math.comb(n, k)))

    @classmethod
    def basis(cls, n: int, index: Iterable[int]) -> "KCovector":
        """The basis covector e_I."""
        I = tuple(index)
        k = len(I)
        c = np.zeros(math.comb(n, k))
        c[index_position(n, k, I)] = 1.0
        return cls(n, k, c)

    @classmethod
    def scalar(cls, n: int, value: float) -> "KCovector":
        return cls(n, 0, np.array([float(value)]))

    def __add__(self, other: "KCovector") -> "KCovector":
        self._check_same_grade(other)
        return KCovector(self.n, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other: "KCovector") -> "KCovector":
        self._check_same_grade(other)
        return KCovector(self.n, self.k, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "KCovector":
        return KCovector(self.n, self.k, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "KCovector":
        return KCovector(self.n, self.k, -self.coeffs)

    def _check_same_grade(self, other: "KCovector"):
        if self.n != other.n or self.k != other.k:
            raise ValueError(
                f"grade mismatch: ({self.n},{self.k}) vs ({other.n},{other.k})"
            )


@lru_cache(maxsize=None)
def wedge_table(n: int, k: int, l: int) -> tuple[tuple[int, int, int, int], ...]:
    """Sparse structure of the wedge product as (pos_a, pos_b, pos_out, sign)."""
    if k + l > n:
        raise ValueError(f"degree overflow: {k}+{l} > {n}")
    out = []
    pos_out = _position_table(n, k + l)
    for pa, I in enumerate(multi_indices(n, k)):
        for pb, J in enumerate(multi_indices(n, l)):
            s = _merge_sign(I, J)
            if s:
                out.append((pa, pb, pos_out[tuple(sorted(I + J))], s))
    return tuple(out)


def wedge(a: KCovector, b: KCovector) -> KCovector:
    """Wedge product a ^ b."""
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.k + b.k > a.n:
        raise ValueError(f"degree overflow: {a.k}+{b.k} > {a.n}")
    out = np.zeros(math.comb(a.n, a.k + b.k))
    for pa, pb, po, s in wedge_table(a.n, a.k, b.k):
        out[po] += s * a.coeffs[pa] * b.coeffs[pb]
    return KCovector(a.n, a.k + b.k, out)


@lru_cache(maxsize=None)
def contraction_table(n: int, k: int) -> tuple[tuple[int, int, int, int], ...]:
    """Interior-product structure as (pos_in, axis, pos_out, sign).

    axis is 0-based: contracting e_I with e_{axis+1} contributes
    sign * e_{I minus that index}.
    """
    if k < 1:
        raise ValueError("interior product needs degree >= 1")
    out = []
    pos_out = _position_table(n, k - 1)
    for pi, I in enumerate(multi_indices(n, k)):
        for slot, axis1 in enumerate(I):
            J = I[:slot] + I[slot + 1:]
            out.append((pi, axis1 - 1, pos_out[J], -1 if slot % 2 else 1))
    return tuple(out)


def interior_product(a: KCovector, v: np.ndarray) -> KCovector:
    """Contraction a |_ v, i.e. (a |_ v)(w_1,...,w_{k-1}) = a(v, w_1, ..., w_{k-1})."""
    if a.k < 1:
        raise ValueError("interior product needs degree >= 1")
    v = np.asarray(v, dtype=float)
    if v.shape != (a.n,):
        raise ValueError(f"vector has shape {v.shape}, expected ({a.n},)")
    out = np.zeros(math.comb(a.n, a.k - 1))
    for pi, axis, po, s in contraction_table(a.n, a.k):
        out[po] += s * a.coeffs[pi] * v[axis]
    return KCovector(a.n, a.k - 1, out)


@lru_cache(maxsize=None)
def _star_table(n: int, k: int) -> tuple[tuple[int, int], ...]:
    """For each position of a degree-k index I: (position of I^c, orientation sign)."""
    pos_out = _position_table(n, n - k)
    table = []
    for I in multi_indices(n, k):
        Ic = tuple(i for i in range(1, n + 1) if i not in I)
        table.append((pos_out[Ic], _merge_sign(I, Ic)))
    return tuple(table)


def hodge_star(a: KCovector) -> KCovector:
    """Hodge star for the Euclidean metric and standard orientation."""
    out = np.zeros(math.comb(a.n, a.n - a.k))
    for pos_in, (pos_out, s) in enumerate(_star_table(a.n, a.k)):
        out[pos_out] = s * a.coeffs[pos_in]
    return KCovector(a.n, a.n - a.k, out)


def grassmann_inner(a: KCovector, b: KCovector) -> float:
    a._check_same_grade(b)
    return float(np.dot(a.coeffs, b.coeffs))


def grassmann_norm(a: KCovector) -> float:
    return float(np.linalg.norm(a.coeffs))


# ---------------------------------------------------------------------------
# Comass norm: sup of a(v_1, ..., v_k) over orthonormal k-frames.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComassConfig:
    restarts: int = 12
    max_iters: int = 200
    step_tol: float = 1e-12
    sample_budget: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if min(self.restarts, self.max_iters, self.sample_budget) <= 0:
            raise ValueError("comass configuration values must be positive")
        if self.step_tol <= 0:
            raise ValueError("step_tol must be positive")


@dataclass(frozen=True)
class ComassReport:
    value: float       # best of both methods
    ascent: float      # multi-start projected ascent
    sampled: float     # pure random-frame oracle


def _gathered_rows(n: int, k: int) -> np.ndarray:
    """(num_indices, k) array of 0-based row selections, lexicographic order."""
    return np.array(multi_indices(n, k), dtype=int) - 1


def frame_evaluate(a: KCovector, V: np.ndarray) -> np.ndarray:
    """Evaluate a on frames: a(v_1,...,v_k) for V of shape (..., n, k)."""
    V = np.asarray(V, dtype=float)
    rows = _gathered_rows(a.n, a.k)
    minors = np.linalg.det(V[..., rows, :])       # (..., num_indices)
    return minors @ a.coeffs


def _orthonormalize(V: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on the columns of V (batched over leading dims)."""
    V = np.array(V, dtype=float, copy=True)
    k = V.shape[-1]
    for j in range(k):
        col = V[..., :, j]
        for i in range(j):
            prev = V[..., :, i]
            col = col - np.sum(prev * col, axis=-1, keepdims=True) * prev
        norm = np.linalg.norm(col, axis=-1, keepdims=True)
        V[..., :, j] = col / np.maximum(norm, 1e-300)
    return V


def _frame_gradient(a: KCovector, V: np.ndarray) -> np.ndarray:
    """Gradient of V -> a(v_1..v_k) via cofactor expansion of each minor."""
    n, k = a.n, a.k
    G = np.zeros_like(V)
    rows = _gathered_rows(n, k)
    for pos, I in enumerate(rows):
        c = a.coeffs[pos]
        if c == 0.0:
            continue
        M = V[I, :]
        for r in range(k):
            for ccol in range(k):
                minor = np.delete(np.delete(M, r, axis=0), ccol, axis=1)
                cof = ((-1) ** (r + ccol)) * (np.linalg.det(minor) if k > 1 else 1.0)
                G[I[r], ccol] += c * cof
    return G


def _ascend(a: KCovector, V0: np.ndarray, cfg: ComassConfig) -> float:
    V = _orthonormalize(V0)
    val = float(frame_evaluate(a, V))
    sign = 1.0 if val >= 0 else -1.0
    best = abs(val)
    step = 0.5
    for _ in range(cfg.max_iters):
        G = _frame_gradient(a, V)
        improved = False
        while step > cfg.step_tol:
            Vn = _orthonormalize(V + step * sign * G)
            vn = float(frame_evaluate(a, Vn))
            if abs(vn) > best + 1e-15:
                V, best, sign = Vn, abs(vn), (1.0 if vn >= 0 else -1.0)
                improved = True
                step *= 1.5
                break
            step *= 0.5
        if not improved:
            break
    return best


def _sample_oracle(a: KCovector, budget: int, rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """Best |a(frame)| over random orthonormal frames; returns (value, best frame)."""
    best = 0.0
    best_frame = np.eye(a.n)[:, : a.k]
    chunk = 50_000
    done = 0
    while done < budget:
        b = min(chunk, budget - done)
        V = _orthonormalize(rng.standard_normal((b, a.n, a.k)))
        vals = np.abs(frame_evaluate(a, V))
        i = int(np.argmax(vals))
        if vals[i] > best:
            best = float(vals[i])
            best_frame = V[i]
        done += b
    return best, best_frame


def comass_report(a: KCovector, cfg: ComassConfig | None = None) -> ComassReport:
    """Comass by projected ascent over frames plus an independent sampling oracle."""
    if not 1 <= a.k <= a.n:
        raise ValueError("comass is defined for degrees 1 <= k <= n")
    cfg = cfg or ComassConfig()
    if a.k == 1 or a.k == a.n:
        # decomposable grades: comass equals the Grassmann norm
        g = grassmann_norm(a)
        return ComassReport(value=g, ascent=g, sampled=g)
    rng = np.random.default_rng(cfg.seed)
    sampled, best_frame = _sample_oracle(a, cfg.sample_budget, rng)
    ascent = 0.0
    starts = [best_frame] + [rng.standard_normal((a.n, a.k)) for _ in range(cfg.restarts)]
    for V0 in starts:
        ascent = max(ascent, _ascend(a, V0, cfg))
    return ComassReport(value=max(ascent, sampled), ascent=ascent, sampled=sampled)


def comass_norm(a: KCovector, cfg: ComassConfig | None = None) -> float:
    return comass_report(a, cfg).value


def pullback_linear(A: np.ndarray, a: KCovector, n: int | None = None) -> KCovector:
    """Pull back a k-covector over R^m along the linear map x -> A x, A of shape (m, n).

    The coefficient of target index J is sum_I a_I * det(A[I, J]).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != a.n:
        raise ValueError(f"matrix shape {A.shape} incompatible with covector over R^{a.n}")
    m, nn = A.shape
    if n is not None and n != nn:
        raise ValueError("explicit source dimension disagrees with matrix shape")
    k = a.k
    if k > nn:
        raise ValueError(f"degree {k} exceeds source dimension {nn}")
    rows = _gathered_rows(m, k)
    cols = _gathered_rows(nn, k)
    out = np.zeros(math.comb(nn, k))
    if k == 0:
        out[0] = a.coeffs[0]
        return KCovector(nn, 0, out)
    for pj in range(cols.shape[0]):
        sub = A[:, cols[pj]]                       # (m, k)
        minors = np.linalg.det(sub[rows, :])       # (num_I,)
        out[pj] = float(minors @ a.coeffs)
    return KCovector(nn, k, out)
