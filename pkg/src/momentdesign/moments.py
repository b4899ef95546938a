"""Truncated moment sequences, moment and localizing matrices."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegreeOverflow, DimensionMismatch
from .polybasis import (
    MultiIndex,
    Polynomial,
    add_indices,
    basis_size,
    enumerate_monomials,
    eval_monomial_matrix,
)


@dataclass(frozen=True)
class MomentSequence:
    """Dense vector (y_alpha) for |alpha| <= order, graded-lex ordered."""

    n: int
    order: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel().copy()
        if vals.shape[0] != basis_size(self.n, self.order):
            raise DimensionMismatch(
                f"expected {basis_size(self.n, self.order)} moments for n={self.n}, "
                f"order={self.order}; got {vals.shape[0]}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __getitem__(self, alpha) -> float:
        return float(self.values[enumerate_monomials(self.n, self.order).index[tuple(alpha)]])

    def truncate(self, order: int) -> "MomentSequence":
        if order > self.order:
            raise DegreeOverflow(f"cannot truncate order {self.order} to {order}")
        return MomentSequence(self.n, order, self.values[: basis_size(self.n, order)])

    def to_json(self) -> dict:
        basis = enumerate_monomials(self.n, self.order)
        return {
            "n": self.n,
            "order": self.order,
            "entries": [
                {"exponents": list(a), "value": float(v)} for a, v in zip(basis.order, self.values)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "MomentSequence":
        n, order = int(data["n"]), int(data["order"])
        basis = enumerate_monomials(n, order)
        vals = np.full(len(basis), np.nan)
        for entry in data["entries"]:
            vals[basis.index[tuple(entry["exponents"])]] = float(entry["value"])
        if np.isnan(vals).any():
            raise ValueError("moment file is missing entries")
        return cls(n, order, vals)


def atomic_moments(points, weights, order: int) -> MomentSequence:
    """Moments of sum_i w_i delta_{x_i} up to ``order``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    w = np.asarray(weights, dtype=float)
    return MomentSequence(pts.shape[1], order, w @ eval_monomial_matrix(pts, order))


def riesz(y: MomentSequence, f: Polynomial) -> float:
    """L_y(f) = sum_alpha f_alpha y_alpha."""
    if f.n != y.n:
        raise DimensionMismatch("polynomial and moments differ in dimension")
    if f.degree > y.order:
        raise DegreeOverflow(f"deg f = {f.degree} exceeds moment order {y.order}")
    return float(f.coefficient_vector(y.order) @ y.values)


@lru_cache(maxsize=None)
def _hankel_positions(n: int, k: int, order: int) -> np.ndarray:
    # pos[a, b] = index of alpha_a + alpha_b in the basis of degree ``order``.
    rows = enumerate_monomials(n, k).order
    idx = enumerate_monomials(n, order).index
    pos = np.array([[idx[add_indices(a, b)] for b in rows] for a in rows], dtype=np.int64)
    pos.setflags(write=False)
    return pos


def moment_matrix(y: MomentSequence, k: int) -> np.ndarray:
    """M_k(y) with entries y_{alpha + beta}, |alpha|, |beta| <= k."""
    if 2 * k > y.order:
        raise DegreeOverflow(f"M_{k} needs order {2 * k}, sequence has {y.order}")
    return y.values[_hankel_positions(y.n, k, y.order)]


def localizing_operator(n: int, g: Polynomial, k: int, order: int) -> np.ndarray:
    """Linear map y -> M_k(g y) as an array of shape (s(order), s(k), s(k))."""
    if 2 * k + g.degree > order:
        raise DegreeOverflow(f"M_{k}(g y) needs order {2 * k + g.degree}, have {order}")
    rows = enumerate_monomials(n, k).order
    idx = enumerate_monomials(n, order).index
    size = len(rows)
    op = np.zeros((basis_size(n, order), size, size))
    for gamma, c in g.terms.items():
        for a, alpha in enumerate(rows):
            shifted = add_indices(gamma, alpha)
            for b in range(a, size):
                pos = idx[add_indices(shifted, rows[b])]
                op[pos, a, b] += c
                if b != a:
                    op[pos, b, a] += c
    return op


def moment_operator(n: int, k: int, order: int) -> np.ndarray:
    """Linear map y -> M_k(y), shape (s(order), s(k), s(k))."""
    return localizing_operator(n, Polynomial.constant(n, 1.0), k, order)


def localizing_matrix(y: MomentSequence, g: Polynomial, k: int) -> np.ndarray:
    """M_k(g y) with entries L_y(g x^alpha x^beta)."""
    if g.n != y.n:
        raise DimensionMismatch("polynomial and moments differ in dimension")
    if 2 * k + g.degree > y.order:
        raise DegreeOverflow(f"M_{k}(g y) needs order {2 * k + g.degree}, have {y.order}")
    out = np.zeros((basis_size(y.n, k),) * 2)
    for gamma, c in g.terms.items():
        out += c * y.values[_shifted_positions(y.n, k, y.order, gamma)]
    return out


@lru_cache(maxsize=None)
def _shifted_positions(n: int, k: int, order: int, gamma: MultiIndex) -> np.ndarray:
    rows = enumerate_monomials(n, k).order
    idx = enumerate_monomials(n, order).index
    return np.array(
        [[idx[add_indices(gamma, add_indices(a, b))] for b in rows] for a in rows], dtype=np.int64
    )


@lru_cache(maxsize=None)
def basis_matrices(n: int, d: int) -> np.ndarray:
    """Family B_alpha with sum_alpha B_alpha x^alpha = v_d(x) v_d(x)^T.

    Returned as an array of shape (s(2d), s(d), s(d)); entry [alpha] is B_alpha.
    """
    pos = _hankel_positions(n, d, 2 * d)
    size = pos.shape[0]
    B = np.zeros((basis_size(n, 2 * d), size, size))
    rows, cols = np.indices(pos.shape)
    B[pos, rows, cols] = 1.0
    B.setflags(write=False)
    return B
