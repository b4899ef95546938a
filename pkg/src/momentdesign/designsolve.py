"""Moment relaxations of the approximate optimal design problem."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, ConicSolution, LMIBlock, SolverOptions, Status, solve
from .criteria import Criterion, information_matrix, multiplier_scale, phi
from .errors import DegreeOverflow, DimensionMismatch, RankDeficientBasis, UnsupportedCriterion
from .moments import (
    MomentSequence,
    atomic_moments,
    basis_matrices,
    localizing_operator,
    moment_operator,
)
from .polybasis import MultiIndex, RegressionBasis, basis_size, enumerate_monomials
from .semialg import SemiAlgebraicSet, sample_points
from .errors import SamplingExhausted


# p* amplifies errors in y* by roughly cond(M)^2, so the certification
# tolerances need a tighter gap than the generic solver default.
DESIGN_GAP_TOL = 1e-11


def design_options(**overrides) -> SolverOptions:
    return SolverOptions(**{"gap_tol": DESIGN_GAP_TOL, **overrides})


@dataclass(frozen=True)
class RelaxationConfig:
    d: int
    delta: int = 0
    criterion: Criterion = Criterion.D
    basis: RegressionBasis | None = None
    fixed_moments: tuple[tuple[MultiIndex, float], ...] = ()

    def __post_init__(self):
        if self.d < 0:
            raise ValueError(f"regression degree must be >= 0, got {self.d}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        object.__setattr__(self, "criterion", Criterion.parse(self.criterion))
        fixed = []
        for alpha, value in self.fixed_moments:
            alpha = tuple(int(a) for a in alpha)
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in fixed moment {alpha}")
            if sum(alpha) == 0:
                raise ValueError("y_0 = 1 is built in and cannot be fixed")
            if sum(alpha) > 2 * self.d:
                raise DegreeOverflow(f"fixed moment {alpha} has degree above 2d = {2 * self.d}")
            fixed.append((alpha, float(value)))
        object.__setattr__(self, "fixed_moments", tuple(fixed))

    @property
    def order(self) -> int:
        return 2 * (self.d + self.delta)

    def regression(self, n: int) -> RegressionBasis:
        return self.basis if self.basis is not None else RegressionBasis.identity(n, self.d)


@dataclass(frozen=True)
class _Layout:
    n: int
    order: int
    ny: int
    p: int
    criterion: Criterion
    moment_block: int
    localizing_blocks: tuple[int, ...]
    criterion_block: int | None  # index of the Schur / shifted block (A, E)
    aux: slice
    fixed: tuple[tuple[MultiIndex, float], ...]


@dataclass
class SolveResult:
    status: Status
    y_star: MomentSequence | None
    y_lifted: MomentSequence | None
    rho_delta: float
    criterion: Criterion
    d: int
    delta: int
    basis: RegressionBasis
    fixed_moments: tuple = ()
    duals: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def information(self) -> np.ndarray:
        return information_matrix(self.y_star, self.basis, self.d)


def _check_basis(n: int, cfg: RelaxationConfig) -> RegressionBasis:
    basis = cfg.regression(n)
    if basis.columns != basis_size(n, cfg.d):
        raise DimensionMismatch(
            f"regression matrix has {basis.columns} columns, expected s(d) = {basis_size(n, cfg.d)}"
        )
    if not basis.full_row_rank():
        raise RankDeficientBasis("regression matrix must have full row rank")
    return basis


def _info_operator(n: int, d: int, order: int, A: np.ndarray) -> np.ndarray:
    # y -> A M_d(y) A^T as an (s(order), p, p) array.
    B = basis_matrices(n, d)
    op = np.zeros((basis_size(n, order), A.shape[0], A.shape[0]))
    op[: B.shape[0]] = np.einsum("pi,aij,qj->apq", A, B, A)
    return op


def _assemble(X: SemiAlgebraicSet, cfg: RelaxationConfig):
    n = X.n
    basis = _check_basis(n, cfg)
    order = cfg.order
    k = cfg.d + cfg.delta
    ny = basis_size(n, order)
    p = basis.p
    crit = cfg.criterion

    naux = {Criterion.D: 0, Criterion.A: p * (p + 1) // 2, Criterion.E: 1}[crit]
    N = ny + naux

    def pad(op):
        out = np.zeros((N,) + op.shape[1:])
        out[:ny] = op
        return out

    blocks = []
    blocks.append(LMIBlock(np.zeros((basis_size(n, k),) * 2), pad(moment_operator(n, k, order)), "moment"))
    loc_idx = []
    for j, (g, vj) in enumerate(zip(X.inequalities, X.half_degrees)):
        kj = k - vj
        if kj < 0:
            raise DegreeOverflow(
                f"constraint {j} has degree {g.degree}; need d + delta >= {vj}"
            )
        op = localizing_operator(n, g, kj, order)
        loc_idx.append(len(blocks))
        blocks.append(LMIBlock(np.zeros((op.shape[1],) * 2), pad(op), f"localizing[{j}]"))

    info = pad(_info_operator(n, cfg.d, order, basis.matrix_A))
    c = np.zeros(N)
    logdet = None
    crit_block = None
    if crit is Criterion.D:
        logdet = LMIBlock(np.zeros((p, p)), info, "information")
    elif crit is Criterion.A:
        const = np.zeros((2 * p, 2 * p))
        const[:p, p:] = np.eye(p)
        const[p:, :p] = np.eye(p)
        lin = np.zeros((N, 2 * p, 2 * p))
        lin[:, :p, :p] = info
        col = ny
        for i in range(p):
            for j in range(i, p):
                lin[col, p + i, p + j] = 1.0
                lin[col, p + j, p + i] = 1.0
                if i == j:
                    c[col] = 1.0
                col += 1
        crit_block = len(blocks)
        blocks.append(LMIBlock(const, lin, "schur"))
    elif crit is Criterion.E:
        lin = info.copy()
        lin[ny] = -np.eye(p)
        c[ny] = -1.0
        crit_block = len(blocks)
        blocks.append(LMIBlock(np.zeros((p, p)), lin, "shifted"))
    else:  # pragma: no cover - Criterion is closed
        raise UnsupportedCriterion(str(crit))

    index = enumerate_monomials(n, order).index
    rows = [np.eye(N)[0]]
    rhs = [1.0]
    for alpha, value in cfg.fixed_moments:
        if len(alpha) != n:
            raise DimensionMismatch(f"fixed moment {alpha} does not have {n} exponents")
        rows.append(np.eye(N)[index[alpha]])
        rhs.append(value)

    names = [f"y{list(a)}" for a in enumerate_monomials(n, order).order]
    if crit is Criterion.A:
        names += [f"Z[{i},{j}]" for i in range(p) for j in range(i, p)]
    elif crit is Criterion.E:
        names.append("t")
    prog = ConicProgram(
        c, tuple(blocks), np.array(rows), np.array(rhs),
        logdet=logdet, logdet_weight=1.0 if logdet is not None else 0.0, var_names=tuple(names),
        z_ref=_reference_point(X, crit, basis, cfg.d, order, k, N),
    )
    layout = _Layout(
        n, order, ny, p, crit, 0, tuple(loc_idx), crit_block, slice(ny, N), cfg.fixed_moments
    )
    return prog, layout, basis


def _reference_point(X, crit, basis, d, order, k, N):
    # Moments of an empirical measure on X: an interior point of the moment
    # blocks that the solver uses to balance them. None when X is too thin.
    count = max(200, 4 * basis_size(X.n, k))
    try:
        pts = sample_points(X, count, seed=12345, max_draws=400_000)
    except SamplingExhausted:
        return None
    y = atomic_moments(pts, np.full(len(pts), 1.0 / len(pts)), order).values
    z = np.zeros(N)
    z[: y.shape[0]] = y
    M = information_matrix(MomentSequence(X.n, order, y).truncate(2 * d), basis, d)
    lam = np.linalg.eigvalsh(M)
    if lam[0] <= 0:
        return z
    if crit is Criterion.A:
        Z = 2.0 * np.linalg.inv(M)
        iu = np.triu_indices(M.shape[0])
        z[y.shape[0]:] = Z[iu]
    elif crit is Criterion.E:
        z[y.shape[0]] = 0.5 * lam[0]
    return z


def build_relaxation(X: SemiAlgebraicSet, cfg: RelaxationConfig) -> ConicProgram:
    """Conic program over y of length s(2(d + delta)) for criterion ``cfg.criterion``.

    Blocks: M_{d+delta}(y), then M_{d+delta-v_j}(g_j y) for every constraint,
    then the criterion block (Schur complement for A, M - tI for E; D uses
    the log-det term on A M_d(y) A^T instead). Equalities: y_0 = 1 followed
    by one row per fixed moment.
    """
    return _assemble(X, cfg)[0]


def _extract_duals(sol: ConicSolution, layout: _Layout, prog: ConicProgram) -> dict:
    p = layout.p
    if layout.criterion is Criterion.D:
        info_dual = sol.logdet_dual
    elif layout.criterion is Criterion.A:
        info_dual = sol.duals[layout.criterion_block][:p, :p]
    else:
        info_dual = sol.duals[layout.criterion_block]
    fixed_nu = [
        {"exponents": list(alpha), "multiplier": float(nu)}
        for (alpha, _), nu in zip(layout.fixed, sol.eq_duals[1:])
    ]
    return {
        "moment": sol.duals[layout.moment_block],
        "localizing": [sol.duals[i] for i in layout.localizing_blocks],
        "information": np.asarray(info_dual),
        "nu": float(sol.eq_duals[0]),
        "fixed": fixed_nu,
    }


def solve_design(
    X: SemiAlgebraicSet, cfg: RelaxationConfig, opts: SolverOptions | None = None
) -> SolveResult:
    """Solve the relaxation of order ``cfg.delta`` and package y*, rho and duals."""
    opts = opts or design_options()
    prog, layout, basis = _assemble(X, cfg)
    start = time.perf_counter()
    sol = solve(prog, opts)
    elapsed = time.perf_counter() - start
    diag = {
        "status": sol.status.value,
        "message": sol.message,
        "iterations": sol.iterations,
        "gap": sol.gap,
        "primal_objective": sol.primal_objective,
        "dual_objective": sol.dual_objective,
        "residuals": sol.residuals,
        "reduced_blocks": list(sol.reduced_blocks),
        "tolerances": {"feasibility": opts.feas_tol, "relative_gap": opts.gap_tol},
        "seconds": elapsed,
        "variables": prog.nvars,
        "block_sizes": [b.size for b in prog.blocks],
    }
    if sol.status in (Status.INFEASIBLE, Status.UNBOUNDED) or not np.all(np.isfinite(sol.z)):
        return SolveResult(
            sol.status, None, None, float("nan"), cfg.criterion, cfg.d, cfg.delta, basis,
            cfg.fixed_moments, {}, diag,
        )
    y_lifted = MomentSequence(X.n, layout.order, sol.z[: layout.ny])
    y_star = y_lifted.truncate(2 * cfg.d)
    M = information_matrix(y_star, basis, cfg.d)
    rho = phi(M, cfg.criterion)
    duals = _extract_duals(sol, layout, prog)
    try:
        # Euler identity: c* phi(M) = nu_0 + sum of nu_a b_a over fixed moments
        total = duals["nu"] + sum(e["multiplier"] * b for e, (_, b) in zip(duals["fixed"], cfg.fixed_moments))
        duals["lambda_star"] = total / multiplier_scale(M, cfg.criterion)
    except ValueError:
        duals["lambda_star"] = float("nan")
    return SolveResult(
        sol.status, y_star, y_lifted, rho, cfg.criterion, cfg.d, cfg.delta, basis,
        cfg.fixed_moments, duals, diag,
    )


@dataclass
class SweepEntry:
    delta: int
    rho: float
    y_star: MomentSequence | None
    status: str
    error: str | None = None


def hierarchy_sweep(
    X: SemiAlgebraicSet, cfg: RelaxationConfig, deltas, opts: SolverOptions | None = None
) -> list[SweepEntry]:
    """Solve the relaxations for increasing delta; failures are recorded inline."""
    deltas = list(deltas)
    if any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta list must be strictly increasing")
    out = []
    for delta in deltas:
        try:
            res = solve_design(X, _replace_delta(cfg, delta), opts)
        except Exception as exc:  # noqa: BLE001 - reported per entry
            out.append(SweepEntry(delta, float("nan"), None, "error", f"{type(exc).__name__}: {exc}"))
            continue
        out.append(SweepEntry(delta, res.rho_delta, res.y_star, res.status.value))
    return out


def _replace_delta(cfg: RelaxationConfig, delta: int) -> RelaxationConfig:
    return RelaxationConfig(cfg.d, delta, cfg.criterion, cfg.basis, cfg.fixed_moments)
