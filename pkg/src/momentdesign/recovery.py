"""Recovery of an atomic design from an optimal truncated moment sequence."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, LMIBlock, SolverOptions, Status, solve
from .criteria import Criterion, dual_polynomial, information_matrix, least_eigen
from .errors import (
    DegreeOverflow,
    ExtractionUnstable,
    IllConditionedVandermonde,
    MatchConstraintInfeasible,
    NoAtomsExtracted,
    SolverFailure,
)
from .moments import MomentSequence, atomic_moments, localizing_operator, moment_matrix, moment_operator
from .polybasis import Polynomial, RegressionBasis, basis_size, enumerate_monomials, eval_monomial_matrix
from .semialg import SemiAlgebraicSet, membership_many

R_CAP = 5
MERGE_TOL = 1e-5
CLUSTER_TOL = 1e-4
VANDERMONDE_COND = 1e12
ROUNDTRIP_TOL = 1e-5
POLISH_DRIFT = 1e-5


class RecoveryMethod(str, enum.Enum):
    NIE = "nie"
    CHRISTOFFEL_MIN = "christoffel_min"
    CHRISTOFFEL_TRACE = "christoffel_trace"

    @classmethod
    def parse(cls, value) -> "RecoveryMethod":
        if isinstance(value, RecoveryMethod):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"christoffelmin": "christoffel_min", "christoffeltrace": "christoffel_trace"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(
                f"unknown recovery method {value!r}; use nie, christoffel_min or christoffel_trace"
            ) from None


@dataclass(frozen=True)
class RecoveryConfig:
    r: int = 1
    method: RecoveryMethod = RecoveryMethod.NIE
    f_r: Polynomial | None = None
    rank_tol: float = 1e-6
    random_objective: bool = False
    seed: int = 0

    def __post_init__(self):
        if int(self.r) < 1:
            raise ValueError(f"lifting order r must be >= 1, got {self.r}")
        if not 0.0 < self.rank_tol < 1.0:
            raise ValueError(f"rank_tol must lie in (0, 1), got {self.rank_tol}")
        object.__setattr__(self, "r", int(self.r))
        object.__setattr__(self, "method", RecoveryMethod.parse(self.method))

    def with_r(self, r: int) -> "RecoveryConfig":
        return RecoveryConfig(r, self.method, self.f_r, self.rank_tol, self.random_objective, self.seed)


@dataclass
class Design:
    points: np.ndarray  # (l, n)
    weights: np.ndarray  # (l,)
    residual: float = float("nan")
    ranks: tuple[int, int] | None = None
    method: str = ""
    r: int | None = None
    polished: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        self.points = pts
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.weights.shape[0] != pts.shape[0]:
            raise ValueError("one weight per point is required")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def moments(self, order: int) -> MomentSequence:
        return atomic_moments(self.points, self.weights, order)

    def invariant_violations(self, X: SemiAlgebraicSet | None = None, tol: float = 1e-6) -> list[str]:
        """Empty list when weights lie on the simplex and points lie in X."""
        out = []
        if np.any(self.weights < -1e-9):
            out.append(f"negative weight {self.weights.min():.3e}")
        if abs(self.weights.sum() - 1.0) > 1e-7:
            out.append(f"weights sum to {self.weights.sum():.9f}")
        if X is not None and len(self):
            bad = ~membership_many(X, self.points, tol)
            if bad.any():
                out.append(f"{int(bad.sum())} point(s) outside the design space")
        return out

    def to_json(self) -> dict:
        return {
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
            "residual": float(self.residual),
            "ranks": list(self.ranks) if self.ranks is not None else None,
            "method": self.method,
            "r": self.r,
            "polished": self.polished,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Design":
        ranks = data.get("ranks")
        return cls(
            np.asarray(data["points"], dtype=float),
            np.asarray(data["weights"], dtype=float),
            float(data.get("residual", float("nan"))),
            tuple(ranks) if ranks is not None else None,
            data.get("method", ""),
            data.get("r"),
            bool(data.get("polished", False)),
        )


# ---------------------------------------------------------------------------
# lifting problems


def _cone_constraints(X: SemiAlgebraicSet, t: int, order: int):
    """PSD blocks and linear rows describing the order-t outer moment cone.

    An encoded equality g = 0 (a pair g >= 0, -g >= 0) becomes the rows
    L_y(g x^gamma) = 0 instead of two localizing blocks, and the moment
    block is compressed onto the complement of the directions g x^beta,
    which lie in its kernel. Without this the lift has no interior point.
    """
    n = X.n
    s = basis_size(n, t)
    ny = basis_size(n, order)
    paired = set()
    rows, kernel = [], []
    for i, j in X.equality_pairs():
        paired.update((i, j))
        g = X.inequalities[i]
        for gamma in enumerate_monomials(n, order - g.degree):
            rows.append((g * Polynomial(n, {gamma: 1.0})).coefficient_vector(order))
        for beta in enumerate_monomials(n, t - g.degree) if t >= g.degree else ():
            kernel.append((g * Polynomial(n, {beta: 1.0})).coefficient_vector(t))
    mom = moment_operator(n, t, order)
    if kernel:
        K = np.array(kernel).T
        U, sv, _ = np.linalg.svd(K, full_matrices=True)
        V = U[:, int(np.sum(sv > 1e-10 * sv[0])):]
        mom = np.einsum("ab,ibc,cd->iad", V.T, mom, V)
        s = V.shape[1]
    blocks = [LMIBlock(np.zeros((s, s)), mom, "moment")]
    for j, (g, vj) in enumerate(zip(X.inequalities, X.half_degrees)):
        if j in paired:
            continue
        kj = t - vj
        if kj < 0:
            raise DegreeOverflow(f"constraint {j} needs d + r >= {vj}")
        sj = basis_size(n, kj)
        blocks.append(LMIBlock(np.zeros((sj, sj)), localizing_operator(n, g, kj, order), f"localizing[{j}]"))
    A = np.array(rows).reshape(-1, ny)
    return blocks, A, np.zeros(A.shape[0])


def _default_objective(n: int, t: int, order: int, cfg: RecoveryConfig) -> np.ndarray:
    """Coefficients of f_r; L_y(f_r) = <G, M_t(y)> for a Gram matrix G > 0."""
    s = basis_size(n, t)
    if cfg.f_r is not None:
        if cfg.f_r.degree > order:
            raise DegreeOverflow(f"f_r has degree {cfg.f_r.degree} > {order}")
        return cfg.f_r.coefficient_vector(order)
    G = np.eye(s)
    if cfg.random_objective:
        rng = np.random.default_rng(cfg.seed)
        B = rng.standard_normal((s, s))
        G = G + B @ B.T / s
    return np.einsum("aij,ij->a", moment_operator(n, t, order), G)


def _run(prog: ConicProgram, opts: SolverOptions | None, what: str):
    sol = solve(prog, opts or SolverOptions())
    if sol.status is Status.INFEASIBLE:
        return sol
    if sol.status not in (Status.OPTIMAL, Status.NUMERICAL_TROUBLE, Status.MAX_ITER) or not np.all(
        np.isfinite(sol.z)
    ):
        raise SolverFailure(f"{what}: {sol.status.value} {sol.message}".strip(), solution=sol)
    return sol


def nie_lift(
    y_star: MomentSequence,
    X: SemiAlgebraicSet,
    cfg: RecoveryConfig,
    d: int | None = None,
    opts: SolverOptions | None = None,
) -> MomentSequence:
    """Minimize L(f_r) over lifts y_r of y* of order 2(d + r) in the outer moment cone."""
    if y_star.n != X.n:
        raise ValueError("moment sequence and design space differ in dimension")
    d = y_star.order // 2 if d is None else d
    y_star = y_star.truncate(2 * d)
    t = d + cfg.r
    order = 2 * t
    n = X.n
    ny = basis_size(n, order)
    nfix = basis_size(n, 2 * d)
    A = np.zeros((nfix, ny))
    A[:, :nfix] = np.eye(nfix)
    blocks, A_eq, b_eq = _cone_constraints(X, t, order)
    prog = ConicProgram(
        _default_objective(n, t, order, cfg), blocks, np.vstack([A, A_eq]), np.concatenate([y_star.values, b_eq])
    )
    sol = _run(prog, opts, "lifting problem")
    if sol.status is Status.INFEASIBLE:
        raise MatchConstraintInfeasible(
            f"y* has no lift of order {order} in the moment relaxation ({sol.message})"
        )
    return MomentSequence(n, order, sol.z)


def _pstar_coefficients(y_star, n, basis, criterion, d, ny) -> np.ndarray:
    basis = basis or RegressionBasis.identity(n, d)
    M = information_matrix(y_star.truncate(2 * d), basis, d)
    coeffs = np.zeros(ny)
    coeffs[: basis_size(n, 2 * d)] = dual_polynomial(M, Criterion.parse(criterion), basis, n, d).coefficients()
    return coeffs


def christoffel_program(
    y_star: MomentSequence,
    X: SemiAlgebraicSet,
    cfg: RecoveryConfig,
    basis: RegressionBasis | None = None,
    criterion: Criterion = Criterion.D,
    d: int | None = None,
) -> ConicProgram:
    """SDP minimizing L_y(p*) (or the trace of M_{d+r}(y) subject to L_y(p*) = 0)."""
    d = y_star.order // 2 if d is None else d
    n = X.n
    t = d + cfg.r
    order = 2 * t
    ny = basis_size(n, order)
    coeffs = _pstar_coefficients(y_star, n, basis, criterion, d, ny)
    e0 = np.zeros(ny)
    e0[0] = 1.0
    blocks, A_eq, b_eq = _cone_constraints(X, t, order)
    if cfg.method is RecoveryMethod.CHRISTOFFEL_TRACE:
        c = _default_objective(n, t, order, cfg)
        A = np.vstack([e0, coeffs / max(1.0, np.abs(coeffs).max())])
        b = np.array([1.0, 0.0])
    else:
        c, A, b = coeffs, e0[None, :], np.array([1.0])
    return ConicProgram(c, blocks, np.vstack([A, A_eq]), np.concatenate([b, b_eq]))


def christoffel_recover(
    y_star: MomentSequence,
    X: SemiAlgebraicSet,
    cfg: RecoveryConfig,
    basis: RegressionBasis | None = None,
    criterion: Criterion = Criterion.D,
    d: int | None = None,
    opts: SolverOptions | None = None,
) -> tuple[MomentSequence, float]:
    """Lift concentrated on the zero set of p*; returns (y_r, L_{y_r}(p*))."""
    d = y_star.order // 2 if d is None else d
    prog = christoffel_program(y_star, X, cfg, basis, criterion, d)
    sol = _run(prog, opts, "Christoffel recovery problem")
    if sol.status is Status.INFEASIBLE:
        raise NoAtomsExtracted(f"no measure on the zero set of p* ({sol.message})")
    coeffs = _pstar_coefficients(y_star, X.n, basis, criterion, d, prog.nvars)
    return MomentSequence(X.n, 2 * (d + cfg.r), sol.z), float(coeffs @ sol.z)


# ---------------------------------------------------------------------------
# rank test and extraction


def numerical_rank(M: np.ndarray, rank_tol: float) -> int:
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] <= 0:
        return 0
    return int(np.sum(sv >= rank_tol * sv[0]))


def rank_flat(y_r: MomentSequence, v: int, rank_tol: float = 1e-6, t: int | None = None) -> tuple[bool, int, int]:
    """(rank M_t == rank M_{t-v}, rank M_t, rank M_{t-v}) with t = order // 2 by default."""
    t = y_r.order // 2 if t is None else t
    if t - v < 0:
        raise DegreeOverflow(f"cannot compare M_{t} with M_{t - v}")
    high = numerical_rank(moment_matrix(y_r, t), rank_tol)
    low = numerical_rank(moment_matrix(y_r, t - v), rank_tol)
    return high == low, high, low


def _shift_matrix(y: MomentSequence, k: int, i: int) -> np.ndarray:
    """[y_{a + b + e_i}] for |a|, |b| <= k."""
    e = [0] * y.n
    e[i] = 1
    return np.asarray(_localizing(y, Polynomial(y.n, {tuple(e): 1.0}), k))


def _localizing(y: MomentSequence, g: Polynomial, k: int) -> np.ndarray:
    from .moments import localizing_matrix

    return localizing_matrix(y, g, k)


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Indices sorting points lexicographically by (x1, x2, ...), robust to rounding."""
    pts = np.round(np.asarray(points, dtype=float), 6) + 0.0
    return np.lexsort(pts.T[::-1]) if len(pts) else np.zeros(0, dtype=int)


def _merge(points: np.ndarray, tol: float = MERGE_TOL) -> np.ndarray:
    kept: list[np.ndarray] = []
    for p in points:
        if all(np.max(np.abs(p - q)) >= tol for q in kept):
            kept.append(p)
    return np.array(kept).reshape(-1, points.shape[1])


def extract_atoms(
    y_r: MomentSequence, rank_tol: float = 1e-6, seed: int = 0, k: int | None = None
) -> np.ndarray:
    """Support points of the atomic measure behind a flat moment sequence.

    Whitens M_k(y) = U S U^T (numerical rank l) and diagonalizes the shifted
    Hankel matrices S^{-1/2} U^T [y_{a+b+e_i}] U S^{-1/2}, which share an
    orthogonal eigenbasis when y is flat; a seeded random combination picks
    that basis. k defaults to order // 2 - 1.
    """
    k = y_r.order // 2 - 1 if k is None else k
    if k < 0:
        raise DegreeOverflow("need moments of order >= 2 for extraction")
    H0 = moment_matrix(y_r, k)
    lam, U = np.linalg.eigh((H0 + H0.T) / 2)
    lam, U = lam[::-1], U[:, ::-1]
    if lam[0] <= 0:
        raise NoAtomsExtracted("moment matrix is zero")
    ell = int(np.sum(lam >= rank_tol * lam[0]))
    W = U[:, :ell] / np.sqrt(lam[:ell])
    mult = [W.T @ _shift_matrix(y_r, k, i) @ W for i in range(y_r.n)]
    mult = [(Mi + Mi.T) / 2 for Mi in mult]
    rng = np.random.default_rng(seed)
    coef = rng.random(y_r.n)
    coef /= coef.sum()
    _, Q = np.linalg.eigh(sum(c * Mi for c, Mi in zip(coef, mult)))
    pts = np.empty((ell, y_r.n))
    resid = 0.0
    scale = max(1.0, max(float(np.abs(Mi).max()) for Mi in mult))
    for i, Mi in enumerate(mult):
        D = Q.T @ Mi @ Q
        pts[:, i] = np.diag(D)
        resid = max(resid, float(np.abs(D - np.diag(np.diag(D))).max()) / scale)
    if resid > CLUSTER_TOL:
        raise ExtractionUnstable(
            f"multiplication matrices do not commute (residual {resid:.2e}); try a larger r"
        )
    pts = _merge(pts)
    return pts[canonical_order(pts)]


def compute_weights(points, y_star: MomentSequence, d: int | None = None) -> Design:
    """Least-squares weights matching the moments of y* up to order 2d."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if y_star.n == 1 else pts[None, :]
    if pts.shape[0] < 1:
        raise NoAtomsExtracted("no points to weight")
    order = y_star.order if d is None else 2 * d
    target = y_star.truncate(order).values
    V = eval_monomial_matrix(pts, order).T  # (s(order), l)
    sv = np.linalg.svd(V, compute_uv=False)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if cond > VANDERMONDE_COND:
        raise IllConditionedVandermonde(f"moment-matching system has condition {cond:.2e}")
    w, *_ = np.linalg.lstsq(V, target, rcond=None)
    if np.any(w < -1e-9):
        raise ExtractionUnstable(f"weight {w.min():.3e} is negative; the support is not consistent with y*")
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    resid = float(np.max(np.abs(V @ w - target)))
    return Design(pts, w, resid)


# ---------------------------------------------------------------------------
# driver with r-escalation


@dataclass
class RecoveryAttempt:
    r: int
    flat: bool
    ranks: tuple[int, int]
    error: str | None = None
    objective: float | None = None


@dataclass
class RecoveryResult:
    design: Design | None
    lifted: MomentSequence | None
    flat: bool
    r: int
    method: RecoveryMethod
    attempts: list[RecoveryAttempt] = field(default_factory=list)

    @property
    def degraded(self) -> bool:
        """Atoms were found but their moments miss y*; typically a strict subset of the support."""
        return self.design is not None and not self.design.residual <= ROUNDTRIP_TOL

    @property
    def ranks(self) -> tuple[int, int] | None:
        for a in reversed(self.attempts):
            if a.r == self.r:
                return a.ranks
        return None


def recover(
    y_star: MomentSequence,
    X: SemiAlgebraicSet,
    cfg: RecoveryConfig,
    basis: RegressionBasis | None = None,
    criterion: Criterion = Criterion.D,
    d: int | None = None,
    r_cap: int = R_CAP,
    opts: SolverOptions | None = None,
) -> RecoveryResult:
    """Lift, test flatness, extract and weight; raise r until flat or r > r_cap.

    The best attempt (flat, else the last one) is returned; design is None
    when no attempt produced atoms.
    """
    d = y_star.order // 2 if d is None else d
    v = X.max_half_degree
    attempts: list[RecoveryAttempt] = []
    best: RecoveryResult | None = None
    for r in range(cfg.r, max(cfg.r, r_cap) + 1):
        rc = cfg.with_r(r)
        objective = None
        try:
            if rc.method is RecoveryMethod.NIE:
                lifted = nie_lift(y_star, X, rc, d, opts)
            else:
                lifted, objective = christoffel_recover(y_star, X, rc, basis, criterion, d, opts)
        except (SolverFailure, DegreeOverflow, MatchConstraintInfeasible, NoAtomsExtracted) as exc:
            attempts.append(RecoveryAttempt(r, False, (0, 0), f"{type(exc).__name__}: {exc}"))
            continue
        flat, hi, lo = rank_flat(lifted, max(v, 1), rc.rank_tol)
        attempt = RecoveryAttempt(r, flat, (hi, lo), objective=objective)
        attempts.append(attempt)
        design = None
        if flat:
            try:
                k = d + r - max(v, 1)
                pts = extract_atoms(lifted, rc.rank_tol, rc.seed, k)
                try:
                    design = compute_weights(pts, y_star, d)
                except IllConditionedVandermonde:
                    # more atoms than order-2d moments can separate; the lift fixes them
                    design = compute_weights(pts, lifted, k)
                    V = eval_monomial_matrix(design.points, 2 * d).T
                    design.residual = float(np.max(np.abs(V @ design.weights - y_star.truncate(2 * d).values)))
                design.ranks, design.method, design.r = (hi, lo), rc.method.value, r
            except (ExtractionUnstable, NoAtomsExtracted, IllConditionedVandermonde) as exc:
                attempt.error = f"{type(exc).__name__}: {exc}"
        result = RecoveryResult(design, lifted, flat, r, rc.method, attempts)
        if design is not None:
            return result
        best = result
    if best is None:
        return RecoveryResult(None, None, False, cfg.r, cfg.method, attempts)
    best.attempts = attempts
    return best


# ---------------------------------------------------------------------------
# local polish of a recovered design


def monomial_jacobian(points, d: int) -> np.ndarray:
    """(l, s(d), n) array of partial derivatives of v_d at each point."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[1]
    exps = enumerate_monomials(n, d).exponents
    out = np.zeros((pts.shape[0], exps.shape[0], n))
    for k in range(n):
        lower = exps.copy()
        lower[:, k] -= 1
        ok = lower[:, k] >= 0
        vals = np.prod(pts[:, None, :] ** np.maximum(lower, 0)[None, :, :], axis=2)
        out[:, :, k] = np.where(ok, vals * exps[:, k], 0.0)
    return out


def _poly_gradient(g: Polynomial, x: np.ndarray) -> np.ndarray:
    J = monomial_jacobian(x[None, :], g.degree)[0]
    return g.coefficient_vector(g.degree) @ J


def _constant_and_kernel(M: np.ndarray, criterion: Criterion):
    """(trace(M^q) or lambda_min, kernel K) so that p* = constant - F^T K F."""
    M = (M + M.T) / 2
    if criterion is Criterion.E:
        cert = least_eigen(M)
        return cert.eigenvalue, np.outer(cert.u, cert.u)
    inv = np.linalg.inv(M)
    if criterion is Criterion.D:
        return float(M.shape[0]), inv
    return float(np.trace(inv)), inv @ inv


def polish_design(
    design: Design,
    X: SemiAlgebraicSet,
    y_star: MomentSequence,
    basis: RegressionBasis | None = None,
    criterion: Criterion = Criterion.D,
    d: int | None = None,
    max_drift: float = POLISH_DRIFT,
    fixed_moments=(),
    active_tol: float = 1e-6,
) -> Design:
    """Sharpen a recovered design by Newton steps on its optimality conditions.

    Interior-point output is accurate to roughly the solver tolerance and p*
    amplifies that error. The conditions solved here are those of the
    equivalence theorem at each atom: p*(x_i) = 0 and grad p*(x_i) =
    sum_j mu_ij grad g_j(x_i) over the constraints active at x_i (which stay
    active), plus any fixed moments with their multipliers in p*. The result
    is kept only if it is a better solution of that system, its weights are
    nonnegative, its atoms lie in X and its moments stay within
    ``max_drift`` of y*; otherwise the input comes back unchanged. E-designs
    with a repeated least eigenvalue are not polished.
    """
    from scipy.optimize import least_squares

    criterion = Criterion.parse(criterion)
    d = y_star.order // 2 if d is None else d
    n, ell = X.n, len(design)
    basis = basis or RegressionBasis.identity(n, d)
    A = basis.matrix_A
    if ell == 0:
        return design
    try:
        M0 = information_matrix(design.moments(2 * d), basis, d)
        if criterion is Criterion.E and least_eigen(M0).ambiguous:
            return design
        _constant_and_kernel(M0, criterion)
    except np.linalg.LinAlgError:
        return design
    paired = {j for _, j in X.equality_pairs()}
    polys = [g for j, g in enumerate(X.inequalities) if j not in paired]
    gvals = np.array([g.evaluate_many(design.points) for g in polys]).T  # (l, m)
    scale = np.array([max(1.0, np.abs(list(g.terms.values())).max()) for g in polys])
    active = [tuple(np.flatnonzero(np.abs(gvals[i]) <= active_tol * scale)) for i in range(ell)]
    n_mu = sum(len(a) for a in active)
    fixed = [(Polynomial(n, {tuple(a): 1.0}), float(b)) for a, b in fixed_moments]
    n_nu = len(fixed)

    def unpack(theta):
        pts = theta[: ell * n].reshape(ell, n)
        w = theta[ell * n: ell * n + ell]
        mu = theta[ell * n + ell: ell * n + ell + n_mu]
        nu = theta[ell * n + ell + n_mu:]
        return pts, w, mu, nu

    def residual(theta):
        pts, w, mu, nu = unpack(theta)
        F = eval_monomial_matrix(pts, d) @ A.T
        M = (F * w[:, None]).T @ F
        try:
            const, K = _constant_and_kernel(M, criterion)
        except np.linalg.LinAlgError:
            return np.full(ell * (n + 1) + n_mu + n_nu + 1, 1e6)
        J = monomial_jacobian(pts, d)
        KF = F @ K
        pvals = const - np.einsum("ij,ij->i", KF, F)
        grads = -2.0 * np.einsum("ip,ps,isk->ik", KF, A, J)
        for (mono, b), v in zip(fixed, nu):
            pvals = pvals + v * (mono.evaluate_many(pts) - b)
            grads = grads + v * np.array([_poly_gradient(mono, x) for x in pts])
        out = [pvals]
        k = 0
        for i in range(ell):
            g_i = grads[i].copy()
            for j in active[i]:
                g_i -= mu[k] * _poly_gradient(polys[j], pts[i])
                out.append([polys[j](pts[i])])
                k += 1
            out.append(g_i)
        for mono, b in fixed:
            out.append([w @ mono.evaluate_many(pts) - b])
        out.append([w.sum() - 1.0])
        return np.concatenate([np.atleast_1d(np.asarray(o, dtype=float)) for o in out])

    # multipliers start from a least-squares fit at the recovered design
    theta0 = np.concatenate([design.points.ravel(), design.weights, np.zeros(n_mu + n_nu)])
    if n_mu + n_nu:
        base = residual(theta0)
        eps = 1e-7
        cols = []
        for c in range(ell * (n + 1), theta0.shape[0]):
            t = theta0.copy()
            t[c] += eps
            cols.append((residual(t) - base) / eps)
        step, *_ = np.linalg.lstsq(np.array(cols).T, -base, rcond=None)
        theta0[ell * (n + 1):] += step
    r0 = float(np.linalg.norm(residual(theta0)))
    try:
        res = least_squares(residual, theta0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200 * theta0.size)
    except (ValueError, np.linalg.LinAlgError):
        return design
    pts, w, _, _ = unpack(res.x)
    if not np.all(np.isfinite(res.x)) or not np.linalg.norm(res.fun) < r0 or np.any(w < -1e-12):
        return design
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    if not np.all(membership_many(X, pts, 1e-10)):
        return design
    target = y_star.truncate(2 * d).values
    V = eval_monomial_matrix(pts, 2 * d).T
    drift = float(np.max(np.abs(V @ w - target)))
    if drift > max_drift:
        return design
    order = canonical_order(pts)
    return Design(pts[order], w[order], drift, design.ranks, design.method, design.r, True)
