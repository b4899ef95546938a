"""Kiefer phi_q criteria, their gradients and the Christoffel/dual polynomials."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EigMultiplicityAmbiguous,
    NonSymmetricInput,
    SingularMatrix,
)
from .moments import MomentSequence, moment_matrix
from .polybasis import RegressionBasis, eval_monomial_matrix

SINGULAR_RTOL = 1e-12
MULTIPLICITY_GAP = 1e-8


class Criterion(enum.Enum):
    D = 0.0
    A = -1.0
    E = -np.inf

    @property
    def q(self) -> float:
        return self.value

    @classmethod
    def parse(cls, name: "str | Criterion") -> "Criterion":
        if isinstance(name, Criterion):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            from .errors import UnsupportedCriterion

            raise UnsupportedCriterion(f"unknown criterion {name!r}; use D, A or E") from None


def _check_symmetric(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSymmetricInput(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-10 * scale:
        raise NonSymmetricInput("matrix is not symmetric")
    return (M + M.T) / 2


def information_matrix(y: MomentSequence, basis: RegressionBasis, d: int) -> np.ndarray:
    """A M_d(y) A^T."""
    Md = moment_matrix(y, d)
    A = basis.matrix_A
    if A.shape[1] != Md.shape[0]:
        raise DimensionMismatch(f"regression matrix has {A.shape[1]} columns, M_d has {Md.shape[0]}")
    return A @ Md @ A.T


def phi(M, c: Criterion) -> float:
    M = _check_symmetric(M)
    p = M.shape[0]
    lam = np.linalg.eigvalsh(M)
    top = max(lam[-1], 0.0)
    singular = lam[0] <= SINGULAR_RTOL * top or top == 0.0
    if c is Criterion.D:
        if singular:
            return 0.0
        return float(np.exp(np.sum(np.log(lam)) / p))
    if c is Criterion.A:
        if singular:
            return 0.0
        return float(p / np.sum(1.0 / lam))
    if c is Criterion.E:
        return float(max(lam[0], 0.0))
    raise ValueError(c)


def log_det(M) -> float:
    sign, val = np.linalg.slogdet(_check_symmetric(M))
    return float(val) if sign > 0 else -np.inf


def _pd_eigh(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, U = np.linalg.eigh(M)
    if lam[-1] <= 0 or lam[0] <= SINGULAR_RTOL * lam[-1]:
        raise SingularMatrix(f"matrix is singular to tolerance (eigenvalues {lam[0]:.3e}..{lam[-1]:.3e})")
    return lam, U


def matrix_power(M, power: float) -> np.ndarray:
    """Symmetric power of a positive definite matrix via eigendecomposition."""
    lam, U = _pd_eigh(_check_symmetric(M))
    return (U * lam**power) @ U.T


@dataclass(frozen=True)
class EOptCertificate:
    eigenvalue: float
    u: np.ndarray
    multiplicity: int

    @property
    def ambiguous(self) -> bool:
        return self.multiplicity > 1


def least_eigen(M, gap: float = MULTIPLICITY_GAP) -> EOptCertificate:
    """Least eigenpair with a deterministic choice inside a repeated eigenspace."""
    M = _check_symmetric(M)
    lam, U = np.linalg.eigh(M)
    mult = int(np.sum(lam - lam[0] < gap))
    space = U[:, :mult]
    if mult == 1:
        u = space[:, 0]
    else:
        # Vector of the eigenspace closest to e_1 (then e_2, ...): largest first component.
        u = None
        for i in range(M.shape[0]):
            cand = space @ space[i, :]
            if np.linalg.norm(cand) > 1e-8:
                u = cand
                break
        assert u is not None
    u = u / np.linalg.norm(u)
    nz = np.flatnonzero(np.abs(u) > 1e-12)
    if nz.size and u[nz[0]] < 0:
        u = -u
    return EOptCertificate(float(lam[0]), u, mult)


def grad_phi(M, c: Criterion, strict: bool = True) -> np.ndarray:
    """Gradient of phi_q at M (a projector subgradient for E).

    For E with a repeated least eigenvalue, ``strict`` raises
    EigMultiplicityAmbiguous carrying the deterministic subgradient choice;
    otherwise a warning is emitted and that choice returned.
    """
    M = _check_symmetric(M)
    p = M.shape[0]
    if c is Criterion.D:
        lam, U = _pd_eigh(M)
        root = np.exp(np.sum(np.log(lam)) / p)
        return (root / p) * (U / lam) @ U.T
    if c is Criterion.A:
        lam, U = _pd_eigh(M)
        tr_inv = np.sum(1.0 / lam)
        return (p / tr_inv**2) * (U / lam**2) @ U.T
    if c is Criterion.E:
        cert = least_eigen(M)
        G = np.outer(cert.u, cert.u)
        if cert.ambiguous:
            msg = f"least eigenvalue has multiplicity {cert.multiplicity}; returning one subgradient"
            if strict:
                raise EigMultiplicityAmbiguous(msg, subgradient=G)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return G
    raise ValueError(c)


@dataclass(frozen=True)
class DualPolynomial:
    """p*(x) = constant - F(x)^T kernel F(x) for an information matrix M.

    ``kernel`` is M^{q-1} for D and A (so F^T kernel F is the Christoffel
    polynomial) and u u^T for E; ``constant`` is trace(M^q), resp. lambda_min.
    """

    criterion: Criterion
    kernel: np.ndarray
    constant: float
    basis: RegressionBasis
    n: int
    d: int
    multiplicity: int = 1

    def christoffel(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None] if self.n == 1 else pts[None, :]
        F = eval_monomial_matrix(pts, self.d) @ self.basis.matrix_A.T
        return np.einsum("ij,jk,ik->i", F, self.kernel, F)

    def __call__(self, points) -> np.ndarray:
        return self.constant - self.christoffel(points)

    def coefficients(self) -> np.ndarray:
        """Coefficients of p* in the graded-lex basis of degree 2d."""
        from .moments import basis_matrices

        B = basis_matrices(self.n, self.d)
        G = self.basis.matrix_A.T @ self.kernel @ self.basis.matrix_A
        coeffs = -np.einsum("aij,ij->a", B, G)
        coeffs[0] += self.constant
        return coeffs


def dual_polynomial(M, c: Criterion, basis: RegressionBasis, n: int, d: int) -> DualPolynomial:
    M = _check_symmetric(M)
    if c is Criterion.D:
        return DualPolynomial(c, matrix_power(M, -1.0), float(M.shape[0]), basis, n, d)
    if c is Criterion.A:
        inv = matrix_power(M, -1.0)
        return DualPolynomial(c, inv @ inv, float(np.trace(inv)), basis, n, d)
    if c is Criterion.E:
        cert = least_eigen(M)
        return DualPolynomial(
            c, np.outer(cert.u, cert.u), cert.eigenvalue, basis, n, d, cert.multiplicity
        )
    raise ValueError(c)


def christoffel_kernel(M, c: Criterion) -> np.ndarray:
    """M^{q-1} for D/A; the least-eigenvector projector for E."""
    if c is Criterion.E:
        cert = least_eigen(M)
        return np.outer(cert.u, cert.u)
    return matrix_power(M, c.q - 1.0)


def christoffel_value(K, basis: RegressionBasis, x, d: int) -> float:
    from .polybasis import regression_vector

    F = regression_vector(basis, x, d)
    K = np.asarray(K, dtype=float)
    if K.shape != (F.shape[0], F.shape[0]):
        raise DimensionMismatch(f"kernel shape {K.shape} does not match p = {F.shape[0]}")
    return float(F @ K @ F)


def dual_polynomial_value(y: MomentSequence, basis: RegressionBasis, c: Criterion, x, d: int) -> float:
    M = information_matrix(y, basis, d)
    pstar = dual_polynomial(M, c, basis, y.n, d)
    return float(pstar(np.atleast_2d(np.asarray(x, dtype=float)))[0])


def multiplier_scale(M, c: Criterion) -> float:
    """c* with c* grad phi(M) = M^{q-1} (for E, 1: the projector itself)."""
    M = _check_symmetric(M)
    p = M.shape[0]
    if c is Criterion.D:
        val = phi(M, c)
        if val == 0.0:
            raise SingularMatrix("phi_D vanishes on a singular information matrix")
        return p / val
    if c is Criterion.A:
        tr_inv = float(np.trace(matrix_power(M, -1.0)))
        return tr_inv**2 / p
    return 1.0
