"""Dense primal-dual interior-point solver for small linear/log-det SDPs.

Problems have the form

    minimize    c . z  -  tau * logdet L(z)
    subject to  S_k(z) = F_k0 + sum_i z_i F_ki  >= 0   (PSD or elementwise)
                A z = b

with every map affine in the free vector z. Equalities are eliminated by a
null-space parametrization. A phase-I problem locates a strictly feasible
point; when none exists the feasible set is confined to a face of the cone
and the blocks are reduced onto that face before the main run, an HKM
primal-dual method with Mehrotra predictor-corrector steps.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg as sla

log = logging.getLogger(__name__)


# Relative dual eigenvalue that marks a face direction during facial reduction.
FACE_TOL = 1e-2


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"
    NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass(frozen=True)
class LMIBlock:
    """Affine symmetric-matrix map z -> const + sum_i z_i lin[i].

    With ``diagonal`` set, const has shape (s,) and lin shape (N, s) and the
    block means elementwise nonnegativity.
    """

    const: np.ndarray
    lin: np.ndarray
    name: str = ""
    diagonal: bool = False

    def __post_init__(self):
        const = np.asarray(self.const, dtype=float)
        lin = np.asarray(self.lin, dtype=float)
        if self.diagonal:
            const = const.reshape(-1)
            lin = lin.reshape(lin.shape[0], const.shape[0])
        else:
            if const.ndim != 2 or const.shape[0] != const.shape[1]:
                raise ValueError(f"block {self.name!r}: constant term must be square")
            if not np.allclose(const, const.T) or not np.allclose(lin, np.transpose(lin, (0, 2, 1))):
                raise ValueError(f"block {self.name!r} is not symmetric-valued")
        if const.shape[0] < 1:
            raise ValueError(f"block {self.name!r} has size 0")
        object.__setattr__(self, "const", const)
        object.__setattr__(self, "lin", lin)

    @property
    def size(self) -> int:
        return self.const.shape[0]

    @property
    def nvars(self) -> int:
        return self.lin.shape[0]

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.diagonal:
            return self.const + z @ self.lin
        return self.const + np.tensordot(z, self.lin, axes=1)

    def adjoint(self, Lam) -> np.ndarray:
        """Vector (<F_i, Lam>)_i."""
        if self.diagonal:
            return self.lin @ np.asarray(Lam).reshape(-1)
        return np.einsum("ijk,jk->i", self.lin, Lam)


@dataclass(frozen=True)
class ConicProgram:
    c: np.ndarray
    blocks: tuple[LMIBlock, ...]
    A: np.ndarray
    b: np.ndarray
    logdet: LMIBlock | None = None
    logdet_weight: float = 0.0
    var_names: tuple[str, ...] | None = None
    z_ref: np.ndarray | None = None  # optional interior hint, used for scaling

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        N = c.shape[0]
        if N < 1:
            raise ValueError("program needs at least one variable")
        A = np.asarray(self.A, dtype=float).reshape(-1, N)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b disagree in row count")
        for blk in self.blocks:
            if blk.nvars != N:
                raise ValueError(f"block {blk.name!r} has {blk.nvars} variables, program has {N}")
        if self.logdet is not None and self.logdet.nvars != N:
            raise ValueError("log-det block variable count mismatch")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def nvars(self) -> int:
        return self.c.shape[0]

    def objective(self, z) -> float:
        val = float(self.c @ z)
        if self.logdet is not None and self.logdet_weight:
            sign, ld = np.linalg.slogdet(self.logdet(z))
            val -= self.logdet_weight * (ld if sign > 0 else -np.inf)
        return val


@dataclass
class SolverOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    step_fraction: float = 0.98
    seed: int = 0
    mu: float = 20.0


@dataclass
class ConicSolution:
    status: Status
    z: np.ndarray
    duals: list[np.ndarray]
    eq_duals: np.ndarray
    logdet_dual: np.ndarray | None
    gap: float
    primal_objective: float
    dual_objective: float
    iterations: int
    residuals: dict = field(default_factory=dict)
    reduced_blocks: list[str] = field(default_factory=list)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


# ----------------------------------------------------------------------------
# internal representation on the reduced variable w (z = z0 + N w)


@dataclass
class _Blk:
    const: np.ndarray
    lin: np.ndarray  # (Nw, s, s) or (Nw, s)
    diagonal: bool
    weight_is_t: bool = False  # log-det objective block (weight t*tau)
    origin: int = -1  # index into program blocks (-1 for log-det, -2 for auxiliary)
    V: np.ndarray | None = None  # original = V reduced V^T (scaling and face)
    on_face: bool = False

    @property
    def size(self) -> int:
        return self.const.shape[0]


class _Infeasible(Exception):
    pass


def _nullspace_param(A: np.ndarray, b: np.ndarray, tol: float):
    """Return (z0, N, residual) with {z : Az = b} = z0 + range(N)."""
    N = A.shape[1]
    if A.shape[0] == 0:
        return np.zeros(N), np.eye(N), 0.0
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    z0 = Vt[:rank].T @ ((U[:, :rank].T @ b) / s[:rank])
    res = float(np.max(np.abs(A @ z0 - b), initial=0.0))
    return z0, Vt[rank:].T.copy(), res


def _transform(blk_const, blk_lin, diagonal, z0, Nmat):
    if diagonal:
        const = blk_const + z0 @ blk_lin
        lin = Nmat.T @ blk_lin
    else:
        const = blk_const + np.tensordot(z0, blk_lin, axes=1)
        lin = np.tensordot(Nmat.T, blk_lin, axes=1)
    return const, lin


def _max_step(M, dM, diagonal, cap=1.0):
    """Largest a <= cap with M + a dM still positive (M positive definite)."""
    if diagonal:
        neg = dM < 0
        if not neg.any():
            return cap
        return min(cap, float(np.min(-M[neg] / dM[neg])))
    try:
        Lc = np.linalg.cholesky(M)
        Li = sla.solve_triangular(Lc, np.eye(M.shape[0]), lower=True)
    except np.linalg.LinAlgError:
        # Lost definiteness to rounding; clamp the spectrum.
        lam, Q = np.linalg.eigh(M)
        lam = np.maximum(lam, 1e-15 * max(lam[-1], 1e-300))
        Li = (Q / np.sqrt(lam)).T
    ev = np.linalg.eigvalsh(Li @ dM @ Li.T)
    if ev[0] >= 0:
        return cap
    return min(cap, float(-1.0 / ev[0]))


class _PDState:
    """Slacks, inverses and duals of all blocks at one primal-dual iterate."""

    def __init__(self, blocks, w, X):
        self.Z, self.Zinv = [], []
        for blk in blocks:
            if blk.diagonal:
                z = blk.const + w @ blk.lin
                if np.any(z <= 0):
                    raise np.linalg.LinAlgError("slack left the orthant")
                self.Z.append(z)
                self.Zinv.append(1.0 / z)
            else:
                Z = blk.const + np.tensordot(w, blk.lin, axes=1)
                Z = (Z + Z.T) / 2
                c = sla.cho_factor(Z, lower=True)
                inv = sla.cho_solve(c, np.eye(Z.shape[0]))
                self.Z.append(Z)
                self.Zinv.append((inv + inv.T) / 2)
        self.X = X


def _adjoint(blk, D):
    if blk.diagonal:
        return blk.lin @ D
    return np.einsum("ijk,jk->i", blk.lin, D)


def _primal_dual(c, blocks, tau, w, opts, obj_fn, stop=None):
    """Mehrotra predictor-corrector with the HKM direction.

    The program is min c.w - tau logdet L(w) with Z_k(w) >= 0; w starts
    strictly feasible and every later step keeps it so. Dual matrices X_k
    start at Z_k^{-1} (W at L^{-1}) and may be infeasible until convergence.
    For the log-det block the centring target is X L = I rather than mu I.
    Returns (w, duals, iterations, converged).
    """
    weight = [tau if b.weight_is_t else 1.0 for b in blocks]
    bar = [not b.weight_is_t for b in blocks]
    m = sum(b.size for b, is_bar in zip(blocks, bar) if is_bar)
    st = _PDState(blocks, w, None)
    X = [zi.copy() for zi in st.Zinv]
    st.X = X
    nw = w.shape[0]
    converged = False
    stalled, best_inf = 0, np.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        if stop is not None and stop(w):
            break
        Fx = [_adjoint(b, x) for b, x in zip(blocks, X)]
        rd = c - sum(wt * f for wt, f in zip(weight, Fx))
        mu = sum(float(np.sum(z * x)) for z, x, ib in zip(st.Z, X, bar) if ib) / max(m, 1)
        pobj = obj_fn(w)
        scale = 1.0 + float(np.max(np.abs(c), initial=0.0))
        for wt, f in zip(weight, Fx):
            scale = max(scale, wt * float(np.max(np.abs(f), initial=0.0)))
        gap = m * mu
        ld_gap = 0.0
        for b, z, x, ib in zip(blocks, st.Z, X, bar):
            if not ib:
                # tau (<L, W> - p - logdet(L W)) >= 0, zero iff W = L^{-1}
                p = z.shape[0]
                ld_gap += tau * (float(np.sum(z * x)) - p - np.linalg.slogdet(z @ x)[1])
        rel_gap = (gap + ld_gap) / max(1.0, abs(pobj))
        rel_inf = float(np.max(np.abs(rd), initial=0.0)) / scale
        log.debug("it %d: rel_gap %.2e rel_inf %.2e mu %.2e", it, rel_gap, rel_inf, mu)
        if rel_gap <= opts.gap_tol / 4 and rel_inf <= opts.feas_tol:
            converged = True
            break
        if rel_gap <= opts.gap_tol / 4:
            # Gap closed; dual residual at its rounding floor stops improving.
            stalled = stalled + 1 if rel_inf > 0.5 * best_inf else 0
            best_inf = min(best_inf, rel_inf)
            if stalled >= 5:
                converged = best_inf <= 100 * opts.feas_tol
                break
        # Schur complement matrix
        H = np.zeros((nw, nw))
        T = []
        for b, x, zi, wt in zip(blocks, X, st.Zinv, weight):
            if b.diagonal:
                H += wt * (b.lin * (x * zi)) @ b.lin.T
                T.append(None)
            else:
                Ti = np.einsum("ab,ibc,cd->iad", x, b.lin, zi)
                H += wt * np.einsum("iad,jda->ij", Ti, b.lin)
                T.append(Ti)
        H = (H + H.T) / 2
        try:
            cf = sla.cho_factor(H, lower=True)
            lin_solve = lambda rhs: sla.cho_solve(cf, rhs)  # noqa: E731
        except np.linalg.LinAlgError:
            lu = sla.lu_factor(H + 1e-14 * np.trace(H) / nw * np.eye(nw))
            lin_solve = lambda rhs: sla.lu_solve(lu, rhs)  # noqa: E731

        def direction(sigma, corr):
            rhs = -c.copy()
            for k, (b, zi, wt, ib) in enumerate(zip(blocks, st.Zinv, weight, bar)):
                target = sigma * mu * zi if ib else zi
                if corr is not None:
                    dXa, dZa = corr[0][k], corr[1][k]
                    if b.diagonal:
                        target = target - dXa * dZa * zi
                    else:
                        target = target - dXa @ dZa @ zi
                rhs += wt * _adjoint(b, target)
            dw = lin_solve(rhs)
            for _ in range(3):  # iterative refinement; H is badly conditioned near the end
                dw = dw + lin_solve(rhs - H @ dw)
            dZ, dX = [], []
            for k, (b, x, zi, ib) in enumerate(zip(blocks, X, st.Zinv, bar)):
                target = sigma * mu * zi if ib else zi
                if b.diagonal:
                    dz = dw @ b.lin
                    dx = target - x - x * dz * zi
                    if corr is not None:
                        dx = dx - corr[0][k] * corr[1][k] * zi
                else:
                    dz = np.tensordot(dw, b.lin, axes=1)
                    G = x @ dz @ zi
                    if corr is not None:
                        G = G + corr[0][k] @ corr[1][k] @ zi
                    dx = target - x - (G + G.T) / 2
                dZ.append(dz)
                dX.append(dx)
            return dw, dZ, dX

        def steps(dZ, dX):
            ap = ad = 1.0 / opts.step_fraction
            for b, z, x, dz, dx in zip(blocks, st.Z, X, dZ, dX):
                ap = _max_step(z, dz, b.diagonal, ap)
                ad = _max_step(x, dx, b.diagonal, ad)
            return min(1.0, opts.step_fraction * ap), min(1.0, opts.step_fraction * ad)

        dw_a, dZ_a, dX_a = direction(0.0, None)
        if not np.all(np.isfinite(dw_a)):
            break
        ap, ad = steps(dZ_a, dX_a)
        mu_aff = sum(
            float(np.sum((z + ap * dz) * (x + ad * dx)))
            for z, x, dz, dx, ib in zip(st.Z, X, dZ_a, dX_a, bar) if ib
        ) / max(m, 1)
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        if rel_gap < 0.1 * rel_inf:
            # the gap is ahead of dual feasibility: stay near the central path
            sigma = max(sigma, 0.5)
        dw, dZ, dX = direction(sigma, (dX_a, dZ_a))
        if not np.all(np.isfinite(dw)):
            break
        ap, ad = steps(dZ, dX)
        X_new = []
        for b, x, dx in zip(blocks, X, dX):
            xn = x + ad * dx
            X_new.append(xn if b.diagonal else (xn + xn.T) / 2)
        for _ in range(30):
            try:
                st_new = _PDState(blocks, w + ap * dw, X_new)
                break
            except np.linalg.LinAlgError:
                ap /= 2  # rounding put the slack on the boundary
        else:
            break  # no usable primal step left at this precision
        w, X, st = w + ap * dw, X_new, st_new
        if max(ap, ad) < 1e-10:
            break
    return w, X, it, converged


def solve(prog: ConicProgram, opts: SolverOptions | None = None) -> ConicSolution:
    """Solve ``prog``; never raises for solver-side failures (see status)."""
    opts = opts or SolverOptions()
    sol = _guarded(prog, opts)
    if sol.status in (Status.MAX_ITER, Status.NUMERICAL_TROUBLE) and prog.z_ref is not None:
        # The interior hint occasionally scales a block badly; retry unscaled.
        log.debug("retrying without z_ref after %s", sol.status.value)
        retry = _guarded(replace(prog, z_ref=None), opts)
        if retry.ok:
            return retry
    return sol


def _guarded(prog: ConicProgram, opts: SolverOptions) -> ConicSolution:
    try:
        return _solve(prog, opts)
    except _Infeasible as exc:
        return _failed(prog, Status.INFEASIBLE, str(exc))
    except OverflowError as exc:
        return _failed(prog, Status.UNBOUNDED, str(exc))
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        return _failed(prog, Status.NUMERICAL_TROUBLE, str(exc))


def _failed(prog, status, msg):
    z = np.full(prog.nvars, np.nan)
    return ConicSolution(
        status, z, [], np.zeros(prog.A.shape[0]), None, np.inf, np.nan, np.nan, 0, message=msg
    )


def _initial_blocks(prog: ConicProgram, z0, Nmat) -> list[_Blk]:
    blocks = []
    for k, blk in enumerate(prog.blocks):
        const, lin = _transform(blk.const, blk.lin, blk.diagonal, z0, Nmat)
        blocks.append(_Blk(const, lin, blk.diagonal, origin=k, V=None))
    if prog.logdet is not None and prog.logdet_weight > 0:
        const, lin = _transform(prog.logdet.const, prog.logdet.lin, False, z0, Nmat)
        blocks.append(_Blk(const, lin, False, weight_is_t=True, origin=-1))
    return blocks


def _precondition(blocks: list[_Blk], w_ref) -> None:
    """Congruence-scale each matrix block so that it equals I at w_ref.

    The optimum usually sits where blocks are singular; balanced blocks keep
    the small slack eigenvalues at the 1/t level instead of far below it.
    """
    for blk in blocks:
        if blk.diagonal:
            continue
        S = blk.const + np.tensordot(w_ref, blk.lin, axes=1)
        S = (S + S.T) / 2
        lam, Q = np.linalg.eigh(S)
        if lam[0] <= 1e-10 * max(lam[-1], 1.0):
            continue  # not interior here (e.g. an equality-type block)
        P = (Q / np.sqrt(lam)) @ Q.T
        blk.const = P @ blk.const @ P
        blk.lin = np.einsum("ab,ibc,cd->iad", P, blk.lin, P)
        blk.V = P


def _min_eig(blk: _Blk, w) -> float:
    if blk.diagonal:
        return float(np.min(blk.const + w @ blk.lin))
    S = blk.const + np.tensordot(w, blk.lin, axes=1)
    return float(np.linalg.eigvalsh((S + S.T) / 2)[0])


def _phase_one(blocks: list[_Blk], nw: int, opts: SolverOptions, scale: float, w0=None):
    """Maximize s subject to block_k(w) - s I >= 0 and a loose box on w.

    Returns (w, s, duals, iterations); duals are the final dual iterates
    per block (used to find the minimal face when s* is ~0).
    """
    w0 = np.zeros(nw) if w0 is None else w0
    m0 = min(_min_eig(b, w0) for b in blocks)
    if m0 >= 1e-3 * max(1.0, scale):
        return w0, m0, [None] * len(blocks), 0
    s0 = m0 - 1.0
    box = 1e6 * max(1.0, scale)
    aug = []
    for b in blocks:
        if b.diagonal:
            lin = np.vstack([b.lin, -np.ones((1, b.size))])
        else:
            lin = np.concatenate([b.lin, -np.eye(b.size)[None]], axis=0)
        aug.append(_Blk(b.const, lin, b.diagonal, origin=b.origin))
    # box on w and a cap s <= 1 + |s0| keep the phase-I problem bounded
    cap = 1.0 + abs(s0)
    box_lin = np.zeros((nw + 1, 2 * nw + 1))
    box_lin[:nw, :nw] = -np.eye(nw)
    box_lin[:nw, nw : 2 * nw] = np.eye(nw)
    box_lin[nw, 2 * nw] = -1.0
    box_const = np.concatenate([np.full(2 * nw, box), [cap]])
    aug.append(_Blk(box_const, box_lin, True, origin=-2))
    c = np.zeros(nw + 1)
    c[-1] = -1.0
    x0 = np.concatenate([w0, [s0]])
    x, duals, iters, _ = _primal_dual(
        c, aug, 0.0, x0, SolverOptions(max_iter=400, gap_tol=1e-15, feas_tol=1e-12),
        lambda x: -x[-1],
    )
    return x[:-1], float(x[-1]), duals[:-1], iters


def _solve(prog: ConicProgram, opts: SolverOptions) -> ConicSolution:
    eq_tol = 1e-11
    z0, Nmat, res = _nullspace_param(prog.A, prog.b, eq_tol)
    if res > opts.feas_tol * max(1.0, np.max(np.abs(prog.b), initial=0.0)):
        raise _Infeasible(f"equality constraints inconsistent (residual {res:.2e})")
    blocks = _initial_blocks(prog, z0, Nmat)
    w_start = None
    if prog.z_ref is not None and Nmat.shape[1] > 0:
        w_start = Nmat.T @ (np.asarray(prog.z_ref, dtype=float) - z0)
        _precondition(blocks, w_start)
    scale = max(
        [1.0]
        + [float(np.max(np.abs(b.const))) for b in blocks]
    )
    fr_rows: list[tuple[int, np.ndarray]] = []  # (program block index, U) face constraints
    reduced: list[str] = []
    iters = 0
    for _round in range(20):
        nw = Nmat.shape[1]
        if nw == 0:
            w = np.zeros(0)
            if not all(_min_eig(b, w) >= -opts.feas_tol for b in blocks):
                raise _Infeasible("fixed point violates a cone constraint")
            break
        ws = w_start if w_start is not None and w_start.shape[0] == nw else np.zeros(nw)
        w, s, duals, it = _phase_one(blocks, nw, opts, scale, ws)
        iters += it
        if s >= 1e-9 * scale:
            break
        if s < -1e-6 * scale:
            raise _Infeasible(f"no feasible point (phase-I value {s:.3e})")
        # Feasible set lies on a proper face: read it off the phase-I duals.
        total = sum(float(np.sum(np.abs(D))) for D in duals) or 1.0
        new_rows_A, new_rows_b = [], []
        changed = False
        for blk, D in zip(blocks, duals):
            if blk.diagonal:
                lam = D / total
                hit = lam > FACE_TOL
                if not hit.any():
                    continue
                if blk.weight_is_t:
                    raise _Infeasible("log-det argument is singular on the feasible set")
                new_rows_A.append(blk.lin[:, hit].T)
                new_rows_b.append(-blk.const[hit])
                fr_rows.append((blk.origin, np.flatnonzero(hit)))
                keep = ~hit
                blk.const, blk.lin = blk.const[keep], blk.lin[:, keep]
                changed = True
                continue
            lam, Q = np.linalg.eigh(D / total)
            hit = lam > FACE_TOL
            if not hit.any():
                continue
            if blk.weight_is_t:
                raise _Infeasible("log-det argument is singular on the feasible set")
            U, Vk = Q[:, hit], Q[:, ~hit]
            # S(w) U = 0 for every feasible w
            rows = np.einsum("iab,bk->aki", blk.lin, U).reshape(-1, nw)
            rhs = -(blk.const @ U).reshape(-1)
            new_rows_A.append(rows)
            new_rows_b.append(rhs)
            full_U = U if blk.V is None else blk.V @ U
            fr_rows.append((blk.origin, full_U))
            blk.V = Vk if blk.V is None else blk.V @ Vk
            blk.on_face = True
            blk.const = Vk.T @ blk.const @ Vk
            blk.lin = np.einsum("ab,ibc,cd->iad", Vk.T, blk.lin, Vk)
            changed = True
        if not changed:
            raise FloatingPointError("phase-I value ~0 but no face identified")
        Aw = np.vstack(new_rows_A)
        bw = np.concatenate(new_rows_b)
        w0, N2, res = _nullspace_param(Aw, bw, 1e-9)
        if res > 1e-6 * scale:
            raise _Infeasible(f"face constraints inconsistent (residual {res:.2e})")
        z0 = z0 + Nmat @ w0
        Nmat = Nmat @ N2
        new_blocks = []
        for blk in blocks:
            if blk.size == 0:
                reduced.append(_block_name(prog, blk.origin) + " (eliminated)")
                continue
            const, lin = _transform(blk.const, blk.lin, blk.diagonal, w0, N2)
            blk.const, blk.lin = const, lin
            new_blocks.append(blk)
        for blk in new_blocks:
            if blk.on_face:
                name = _block_name(prog, blk.origin)
                if name not in reduced:
                    reduced.append(name)
        blocks = new_blocks
        if not blocks:
            w = np.zeros(Nmat.shape[1])
            break
    else:
        raise FloatingPointError("facial reduction did not terminate")

    nw = Nmat.shape[1]
    c_w = Nmat.T @ prog.c
    tau = prog.logdet_weight if prog.logdet is not None else 0.0

    def obj_w(w):
        z = z0 + Nmat @ w
        return prog.objective(z)

    converged = True
    block_duals = None
    if nw > 0 and blocks:
        w, block_duals, it, converged = _primal_dual(c_w, blocks, tau, w, opts, obj_w)
        iters += it
    elif nw > 0:
        # No cone constraints left: only a linear objective over an affine set.
        if np.max(np.abs(c_w)) > 1e-12:
            raise OverflowError("linear objective unbounded over affine feasible set")
        w = np.zeros(nw)
    z = z0 + Nmat @ w if nw > 0 else z0
    return _finish(prog, z, blocks, block_duals, tau, fr_rows, reduced, iters, converged, opts)


def _block_name(prog, origin):
    if origin == -1:
        return "logdet"
    blk = prog.blocks[origin]
    return blk.name or f"block{origin}"


def _finish(prog, z, blocks, block_duals, tau, fr_rows, reduced, iters, converged, opts):
    # Dual matrices in the original block spaces.
    duals = []
    for k, blk in enumerate(prog.blocks):
        s = blk.size
        duals.append(np.zeros(s) if blk.diagonal else np.zeros((s, s)))
    W = None
    for i, blk in enumerate(blocks):
        if block_duals is None:
            if blk.origin == -1:
                continue  # filled in below from L(z)
            D = np.zeros_like(blk.const)
        else:
            D = block_duals[i]
        if blk.origin == -1:
            W = D if blk.V is None else blk.V @ D @ blk.V.T
            continue
        if blk.diagonal:
            if blk.V is None and D.shape[0] == duals[blk.origin].shape[0]:
                duals[blk.origin] = D
            else:
                idx = _kept_diag_indices(prog.blocks[blk.origin].size, fr_rows, blk.origin)
                duals[blk.origin][idx] = D
        else:
            duals[blk.origin] = D if blk.V is None else blk.V @ D @ blk.V.T
    if prog.logdet is not None and tau > 0 and W is None:
        W = np.linalg.inv(prog.logdet(z))

    # Stationarity residual; multipliers of equalities (and face rows) by least squares.
    r = prog.c.copy()
    if W is not None:
        r -= tau * prog.logdet.adjoint(W)
    for blk, D in zip(prog.blocks, duals):
        r -= blk.adjoint(D)
    cols = [prog.A.T]
    face_parts = []
    for origin, U in fr_rows:
        blk = prog.blocks[origin]
        if blk.diagonal:
            part = blk.lin[:, U]
            face_parts.append((origin, U, part.shape[1]))
            cols.append(part)
        else:
            s, k = blk.size, U.shape[1]
            # d/dX of <F_i, sym(X U^T)> for X in R^{s x k}
            part = np.einsum("iab,bk->iak", blk.lin, U).reshape(prog.nvars, s * k)
            face_parts.append((origin, U, s * k))
            cols.append(part)
    K = np.hstack(cols)
    mult, *_ = np.linalg.lstsq(K, -r, rcond=None)
    base = [D.copy() for D in duals]

    def face_duals(mult):
        out = [D.copy() for D in base]
        off = prog.A.shape[0]
        for origin, U, cnt in face_parts:
            X = mult[off : off + cnt]
            off += cnt
            blk = prog.blocks[origin]
            if blk.diagonal:
                out[origin][U] -= X
            else:
                Xm = X.reshape(blk.size, U.shape[1])
                out[origin] = out[origin] - (Xm @ U.T + U @ Xm.T) / 2
        return out

    duals = face_duals(mult)
    if face_parts:
        mult = _feasible_face_multipliers(K, mult, face_duals, duals)
        duals = face_duals(mult)
    nu = mult[: prog.A.shape[0]]
    stat = r + K @ mult
    stat_res = float(np.max(np.abs(stat), initial=0.0))
    # Scale of the terms that cancel in the stationarity equation.
    term_scale = max(1.0, float(np.max(np.abs(prog.c), initial=0.0)))
    for blk, D in zip(prog.blocks, duals):
        term_scale = max(term_scale, float(np.max(np.abs(blk.adjoint(D)), initial=0.0)))
    if W is not None:
        term_scale = max(term_scale, tau * float(np.max(np.abs(prog.logdet.adjoint(W)))))
    rel_stat = stat_res / term_scale

    primal = prog.objective(z)
    dual = -float(nu @ prog.b)
    for blk, D in zip(prog.blocks, duals):
        dual -= float(np.sum(blk.const * D))
    comp = []
    min_eigs = []
    for blk, D in zip(prog.blocks, duals):
        S = blk(z)
        min_eigs.append(float(S.min()) if blk.diagonal else float(np.linalg.eigvalsh(S)[0]))
        comp.append(float(np.sum(S * D)))
    gap = float(sum(comp))
    if W is not None:
        L = prog.logdet(z)
        sign, ldW = np.linalg.slogdet(W)
        p = W.shape[0]
        dual += tau * (p + ldW - float(np.sum(prog.logdet.const * W)))
        sign2, ldLW = np.linalg.slogdet(L @ W)
        gap += tau * (float(np.sum(L * W)) - p - ldLW)
    rel_gap = abs(gap) / max(1.0, abs(primal))
    eq_res = float(np.max(np.abs(prog.A @ z - prog.b), initial=0.0))
    residuals = {
        "equality": eq_res,
        "min_block_eigenvalue": min(min_eigs, default=0.0),
        "block_min_eigenvalues": min_eigs,
        "stationarity": stat_res,
        "relative_stationarity": rel_stat,
        "objective_gap": primal - dual,
        "complementarity": comp,
        "relative_gap": rel_gap,
        "dual_min_eigenvalues": [
            float(D.min()) if D.ndim == 1 else float(np.linalg.eigvalsh(D)[0]) for D in duals
        ],
    }
    ok = (
        converged
        and eq_res <= opts.feas_tol * max(1.0, float(np.max(np.abs(prog.b), initial=0.0)))
        and residuals["min_block_eigenvalue"] >= -opts.feas_tol
        and rel_gap <= opts.gap_tol
        and rel_stat <= 1e-6
        and all(abs(cv) <= 1e-6 for cv in comp)
    )
    if ok:
        status, msg = Status.OPTIMAL, ""
    elif not converged:
        status, msg = Status.MAX_ITER, "iteration limit reached"
    else:
        status, msg = Status.NUMERICAL_TROUBLE, "KKT residuals above tolerance"
    return ConicSolution(
        status, z, duals, nu, W, float(gap), primal, dual, iters, residuals, reduced, msg
    )


def _feasible_face_multipliers(K, mult, face_duals, duals):
    """Move face multipliers along null(K) so that scalar dual entries are nonnegative.

    A pair of opposite inequalities {g >= 0, -g >= 0} eliminated by facial
    reduction leaves a free direction in the multipliers; least squares splits
    it evenly and leaves one dual negative. Stationarity is unchanged.
    """
    def scalar_entries(ds):
        vals = []
        for D in ds:
            if D.ndim == 1:
                vals.extend(D)
            elif D.shape[0] == 1:
                vals.append(D[0, 0])
        return np.array(vals)

    def matrix_entries(ds):
        return np.concatenate([D.ravel() for D in ds if D.ndim == 2 and D.shape[0] > 1] or [np.zeros(0)])

    base = scalar_entries(duals)
    if base.size == 0 or base.min() >= 0:
        return mult
    _, sv, Vt = np.linalg.svd(K)
    rank = int(np.sum(sv > 1e-10 * max(sv.max(initial=0.0), 1.0)))
    N = Vt[rank:].T
    if N.shape[1] == 0:
        return mult
    # affine maps t -> entries
    cols_s, cols_m = [], []
    m0 = matrix_entries(duals)
    for k in range(N.shape[1]):
        ds = face_duals(mult + N[:, k])
        cols_s.append(scalar_entries(ds) - base)
        cols_m.append(matrix_entries(ds) - m0)
    Es, Em = np.array(cols_s).T, np.array(cols_m).T
    from scipy.optimize import linprog

    nt = N.shape[1]
    # maximize s subject to base + Es t >= s, Em t = 0, s <= 0
    cost = np.zeros(nt + 1)
    cost[-1] = -1.0
    A_ub = np.hstack([-Es, np.ones((Es.shape[0], 1))])
    A_eq = np.hstack([Em, np.zeros((Em.shape[0], 1))]) if Em.size else None
    bounds = [(-1e8, 1e8)] * nt + [(None, 0.0)]
    sol = linprog(cost, A_ub=A_ub, b_ub=base, A_eq=A_eq, b_eq=np.zeros(Em.shape[0]) if Em.size else None,
                  bounds=bounds, method="highs")
    if sol.status != 0 or sol.x[-1] <= base.min():
        return mult
    # smallest total dual mass at that level, so the shift stays bounded
    level = sol.x[-1]
    sol2 = linprog(Es.sum(axis=0), A_ub=-Es, b_ub=base - level, A_eq=Em if Em.size else None,
                   b_eq=np.zeros(Em.shape[0]) if Em.size else None, bounds=[(-1e8, 1e8)] * nt, method="highs")
    t = sol2.x if sol2.status == 0 else sol.x[:nt]
    return mult + N @ t


def _kept_diag_indices(size, fr_rows, origin):
    removed = np.zeros(size, dtype=bool)
    for o, U in fr_rows:
        if o == origin:
            # indices are relative to the block at the time of reduction
            remaining = np.flatnonzero(~removed)
            removed[remaining[U]] = True
    return np.flatnonzero(~removed)


def solve_or_raise(prog: ConicProgram, opts: SolverOptions | None = None) -> ConicSolution:
    from .errors import SolverFailure

    sol = solve(prog, opts)
    if not sol.ok:
        raise SolverFailure(f"solver status {sol.status.value}: {sol.message}", sol)
    return sol


# ----------------------------------------------------------------------------
# SDPA sparse text format export


def to_sdpa(prog: ConicProgram) -> str:
    """Render the linear part of ``prog`` in SDPA sparse format.

    SDPA solves min c.x s.t. sum x_i F_i - F_0 >= 0; equalities become two
    opposing diagonal blocks. A log-det term has no SDPA representation and is
    dropped (noted in a comment line).
    """
    lines = []
    if prog.logdet is not None and prog.logdet_weight:
        lines.append('"log-det objective term omitted"')
    else:
        lines.append('"exported by momentdesign"')
    blocks = list(prog.blocks)
    if prog.A.shape[0]:
        lin = np.vstack([prog.A, -prog.A]).T  # (N, 2m)
        blocks.append(
            LMIBlock(np.concatenate([-prog.b, prog.b]), lin, name="equalities", diagonal=True)
        )
    sizes = [(-b.size if b.diagonal else b.size) for b in blocks]
    lines.append(str(prog.nvars))
    lines.append(str(len(blocks)))
    lines.append(" ".join(str(s) for s in sizes))
    lines.append(" ".join(repr(float(v)) for v in prog.c))

    def emit(mat_index, blk_no, M, diagonal):
        if diagonal:
            for i in np.flatnonzero(M):
                lines.append(f"{mat_index} {blk_no} {i + 1} {i + 1} {M[i]!r}")
        else:
            iu, ju = np.nonzero(np.triu(M))
            for i, j in zip(iu, ju):
                lines.append(f"{mat_index} {blk_no} {i + 1} {j + 1} {M[i, j]!r}")

    for bno, blk in enumerate(blocks, start=1):
        emit(0, bno, -blk.const, blk.diagonal)
        for i in range(prog.nvars):
            emit(i + 1, bno, blk.lin[i], blk.diagonal)
    return "\n".join(lines) + "\n"
