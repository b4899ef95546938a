"""Multi-indices, graded-lex monomial bases and sparse real polynomials."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BasisOverflow, DimensionMismatch

MultiIndex = tuple[int, ...]

# Largest basis we agree to index with a 64-bit integer.
_MAX_BASIS = 2**63 - 1


def basis_size(n: int, d: int) -> int:
    """Number of monomials of degree at most ``d`` in ``n`` variables."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if d < 0:
        raise ValueError(f"degree must be >= 0, got {d}")
    size = math.comb(n + d, n)
    if size > _MAX_BASIS:
        raise BasisOverflow(f"C({n + d}, {n}) does not fit in 64 bits")
    return size


def _compositions(n: int, k: int) -> list[MultiIndex]:
    # Exponent tuples of total degree k, lexicographically descending so that
    # x1 has the highest precedence (x1^2, x1 x2, ..., x2^2, ...).
    if n == 1:
        return [(k,)]
    out = []
    for first in range(k, -1, -1):
        for rest in _compositions(n - 1, k - first):
            out.append((first,) + rest)
    return out


@dataclass(frozen=True)
class MonomialBasis:
    """Graded-lexicographic list of exponents with |alpha| <= d."""

    n: int
    d: int
    order: tuple[MultiIndex, ...]
    index: Mapping[MultiIndex, int] = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.order)

    def __iter__(self):
        return iter(self.order)

    def position(self, alpha: Sequence[int]) -> int:
        return self.index[tuple(alpha)]

    @property
    def exponents(self) -> np.ndarray:
        """Integer array of shape (s(d), n)."""
        return _exponent_array(self.n, self.d)


@lru_cache(maxsize=None)
def enumerate_monomials(n: int, d: int) -> MonomialBasis:
    basis_size(n, d)
    order: list[MultiIndex] = []
    for k in range(d + 1):
        order.extend(_compositions(n, k))
    return MonomialBasis(n, d, tuple(order), {a: i for i, a in enumerate(order)})


@lru_cache(maxsize=None)
def _exponent_array(n: int, d: int) -> np.ndarray:
    arr = np.array(enumerate_monomials(n, d).order, dtype=np.int64).reshape(-1, n)
    arr.setflags(write=False)
    return arr


def eval_monomial_vector(x, d: int) -> np.ndarray:
    """Return v_d(x), the graded-lex monomial vector at the point ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    exps = _exponent_array(x.shape[0], d)
    return np.prod(x[None, :] ** exps, axis=1)


def eval_monomial_matrix(points, d: int) -> np.ndarray:
    """Rows are v_d(x_i) for each point; shape (len(points), s(d))."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    exps = _exponent_array(pts.shape[1], d)
    # Stable integer powers; avoids 0**0 surprises from log/exp tricks.
    out = np.ones((pts.shape[0], exps.shape[0]))
    for j in range(pts.shape[1]):
        powers = pts[:, j][:, None] ** np.arange(d + 1)[None, :]
        out *= powers[:, exps[:, j]]
    return out


def add_indices(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(i + j for i, j in zip(a, b))


class Polynomial:
    """Sparse real polynomial in ``n`` variables, keyed by exponent tuples.

    Instances are immutable; arithmetic returns new polynomials.
    """

    __slots__ = ("n", "_terms")

    def __init__(self, n: int, terms: Mapping[Sequence[int], float] | None = None):
        if n < 1:
            raise ValueError("dimension must be >= 1")
        clean: dict[MultiIndex, float] = {}
        for alpha, coeff in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n:
                raise DimensionMismatch(f"exponent {alpha} has length != {n}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            coeff = float(coeff)
            if not math.isfinite(coeff):
                raise ValueError(f"non-finite coefficient for {alpha}")
            total = clean.get(alpha, 0.0) + coeff
            clean[alpha] = total
        self.n = n
        self._terms = {a: c for a, c in clean.items() if c != 0.0}

    @classmethod
    def constant(cls, n: int, value: float) -> "Polynomial":
        return cls(n, {(0,) * n: value})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        alpha = [0] * n
        alpha[i] = 1
        return cls(n, {tuple(alpha): 1.0})

    @property
    def terms(self) -> dict[MultiIndex, float]:
        return dict(self._terms)

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def __call__(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape[0] != self.n:
            raise DimensionMismatch(f"point has dimension {x.shape[0]}, expected {self.n}")
        return float(sum(c * np.prod(x ** np.array(a)) for a, c in self._terms.items()))

    def evaluate_many(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.n)
        if not self._terms:
            return np.zeros(pts.shape[0])
        coeffs = self.coefficient_vector(self.degree)
        return eval_monomial_matrix(pts, self.degree) @ coeffs

    def coefficient_vector(self, d: int) -> np.ndarray:
        """Dense coefficients against the graded-lex basis of degree ``d``."""
        if self.degree > d:
            raise ValueError(f"polynomial degree {self.degree} exceeds {d}")
        basis = enumerate_monomials(self.n, d)
        vec = np.zeros(len(basis))
        for a, c in self._terms.items():
            vec[basis.index[a]] = c
        return vec

    @classmethod
    def from_coefficients(cls, n: int, d: int, coeffs) -> "Polynomial":
        basis = enumerate_monomials(n, d)
        return cls(n, {a: c for a, c in zip(basis.order, np.asarray(coeffs, dtype=float))})

    def _check(self, other: "Polynomial") -> None:
        if other.n != self.n:
            raise DimensionMismatch("polynomials live in different dimensions")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.n, other)
        self._check(other)
        out = dict(self._terms)
        for a, c in other._terms.items():
            out[a] = out.get(a, 0.0) + c
        return Polynomial(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial(self.n, {a: c * other for a, c in self._terms.items()})
        self._check(other)
        out: dict[MultiIndex, float] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                key = add_indices(a, b)
                out[key] = out.get(key, 0.0) + ca * cb
        return Polynomial(self.n, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Polynomial.constant(self.n, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.n == other.n and self._terms == other._terms

    def __hash__(self):
        return hash((self.n, frozenset(self._terms.items())))

    def __repr__(self):
        if not self._terms:
            return f"Polynomial(n={self.n}, 0)"
        parts = [f"{c:+g}*x^{a}" for a, c in sorted(self._terms.items())]
        return f"Polynomial(n={self.n}, {' '.join(parts)})"

    def to_json(self) -> list[dict]:
        return [{"exponents": list(a), "coeff": c} for a, c in sorted(self._terms.items(), key=lambda t: (sum(t[0]), [-e for e in t[0]]))]

    @classmethod
    def from_json(cls, n: int, entries: Iterable[Mapping]) -> "Polynomial":
        terms: dict[MultiIndex, float] = {}
        for k, entry in enumerate(entries):
            try:
                alpha = tuple(int(e) for e in entry["exponents"])
                coeff = float(entry["coeff"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"term {k}: malformed polynomial entry {entry!r}") from exc
            if len(alpha) != n:
                raise DimensionMismatch(f"term {k}: exponents {list(alpha)} have length != {n}")
            terms[alpha] = terms.get(alpha, 0.0) + coeff
        return cls(n, terms)


def poly_mul(f: Polynomial, g: Polynomial) -> Polynomial:
    return f * g


def norm_squared(n: int) -> Polynomial:
    """The polynomial x_1^2 + ... + x_n^2."""
    return Polynomial(n, {tuple(2 if j == i else 0 for j in range(n)): 1.0 for i in range(n)})


@dataclass(frozen=True)
class RegressionBasis:
    """Regressors F(x) = A v_d(x) given by a p x s(d) coefficient matrix."""

    matrix_A: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix_A, dtype=float))
        if A.shape[0] < 1:
            raise ValueError("regression basis needs at least one row")
        A = A.copy()
        A.setflags(write=False)
        object.__setattr__(self, "matrix_A", A)

    @classmethod
    def identity(cls, n: int, d: int) -> "RegressionBasis":
        return cls(np.eye(basis_size(n, d)))

    @property
    def p(self) -> int:
        return self.matrix_A.shape[0]

    @property
    def columns(self) -> int:
        return self.matrix_A.shape[1]

    def is_identity(self) -> bool:
        A = self.matrix_A
        return A.shape[0] == A.shape[1] and np.array_equal(A, np.eye(A.shape[0]))

    def full_row_rank(self, tol: float = 1e-10) -> bool:
        s = np.linalg.svd(self.matrix_A, compute_uv=False)
        return bool(s.size and s[-1] > tol * s[0] and self.p <= self.columns)


def regression_vector(basis: RegressionBasis, x, d: int) -> np.ndarray:
    v = eval_monomial_vector(x, d)
    if basis.columns != v.shape[0]:
        raise DimensionMismatch(
            f"regression matrix has {basis.columns} columns but s(d) = {v.shape[0]}"
        )
    return basis.matrix_A @ v
