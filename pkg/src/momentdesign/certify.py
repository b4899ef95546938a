"""Numeric checks of the equivalence theorem for a solved design problem."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .criteria import Criterion, dual_polynomial, information_matrix, least_eigen, phi
from .errors import CertificateResidualTooLarge, SamplingExhausted, SingularMatrix, UnsupportedDimension
from .moments import MomentSequence
from .polybasis import RegressionBasis, eval_monomial_matrix
from .recovery import Design
from .semialg import SemiAlgebraicSet, box_bounds, membership_many, sample_points

TOL_NEG = 1e-6
TOL_RIESZ = 1e-6
TOL_ATOM = 1e-5
SOS_TOL = 1e-5
REFINE_STARTS = 20


@dataclass
class CertificateReport:
    criterion: str
    lambda_star: float
    phi_value: float
    min_pstar_on_samples: float
    argmin: list[float]
    riesz_pstar: float
    atom_values: list[float]
    max_christoffel_at_atoms: float
    sample_count: int
    tol_neg: float = TOL_NEG
    tol_riesz: float = TOL_RIESZ
    tol_atom: float = TOL_ATOM
    evidence: str = "samples"
    moments_source: str = "solver"
    warnings: list[str] = field(default_factory=list)

    @property
    def nonnegative(self) -> bool:
        return self.min_pstar_on_samples >= -self.tol_neg

    @property
    def riesz_ok(self) -> bool:
        return abs(self.riesz_pstar) <= self.tol_riesz

    @property
    def atoms_ok(self) -> bool:
        return not self.atom_values or max(abs(v) for v in self.atom_values) <= self.tol_atom

    @property
    def passed(self) -> bool:
        return self.nonnegative and self.riesz_ok and self.atoms_ok

    def to_json(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out

    @classmethod
    def from_json(cls, data: dict) -> "CertificateReport":
        data = {k: v for k, v in data.items() if k != "passed"}
        return cls(**data)


class GapPolynomial:
    """p*(x) including the multiplier terms of any fixed moments.

    With moments y_a = b_a imposed, the equivalence function becomes
    trace(M^q) + sum_a nu_a (x^a - b_a) - F(x)^T K F(x), which reduces to the
    usual p* when nothing is fixed.
    """

    def __init__(self, y_star: MomentSequence, basis: RegressionBasis, criterion: Criterion, d: int,
                 fixed: tuple = (), multipliers=None):
        self.n, self.d = y_star.n, d
        self.criterion = Criterion.parse(criterion)
        self.M = information_matrix(y_star.truncate(2 * d), basis, d)
        self.core = dual_polynomial(self.M, self.criterion, basis, y_star.n, d)
        self.fixed = tuple((tuple(a), float(b)) for a, b in fixed)
        nu = np.zeros(len(self.fixed)) if multipliers is None else np.asarray(multipliers, dtype=float)
        if nu.shape != (len(self.fixed),):
            raise ValueError("one multiplier per fixed moment is required")
        self.nu = nu

    def _fixed_term(self, pts: np.ndarray) -> np.ndarray:
        out = np.zeros(pts.shape[0])
        for (alpha, b), nu in zip(self.fixed, self.nu):
            out += nu * (np.prod(pts ** np.array(alpha), axis=1) - b)
        return out

    def __call__(self, points) -> np.ndarray:
        pts = _as_points(points, self.n)
        return self.core(pts) + self._fixed_term(pts)

    def christoffel(self, points) -> np.ndarray:
        return self.core.christoffel(_as_points(points, self.n))

    def coefficients(self) -> np.ndarray:
        from .polybasis import enumerate_monomials

        c = self.core.coefficients()
        index = enumerate_monomials(self.n, 2 * self.d).index
        for (alpha, b), nu in zip(self.fixed, self.nu):
            c[index[alpha]] += nu
            c[0] -= nu * b
        return c

    def riesz(self, y: MomentSequence) -> float:
        return float(self.coefficients() @ y.truncate(2 * self.d).values)


def _as_points(points, n: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if n == 1 else pts[None, :]
    return pts


def gap_polynomial(solve_result, y: MomentSequence | None = None) -> GapPolynomial:
    """p* for a SolveResult (or for y in its place), with fixed-moment multipliers from its duals."""
    fixed = solve_result.fixed_moments
    nus = None
    if fixed:
        entries = solve_result.duals.get("fixed", [])
        nus = [e["multiplier"] for e in entries] if len(entries) == len(fixed) else None
    return GapPolynomial(
        solve_result.y_star if y is None else y, solve_result.basis, solve_result.criterion, solve_result.d, fixed, nus
    )


def _refine(pstar, X: SemiAlgebraicSet, starts: np.ndarray) -> tuple[float, np.ndarray]:
    cons = [{"type": "ineq", "fun": (lambda x, g=g: g(x))} for g in X.inequalities]
    lo, hi = box_bounds(X)
    best_val, best_x = np.inf, None
    for x0 in starts:
        try:
            res = minimize(
                lambda x: float(pstar(x[None, :])[0]), x0, method="SLSQP",
                bounds=[(lo, hi)] * X.n, constraints=cons, options={"maxiter": 200, "ftol": 1e-14},
            )
        except (ValueError, np.linalg.LinAlgError):
            continue
        x = res.x
        if not membership_many(X, x[None, :], 1e-9)[0]:
            continue
        val = float(pstar(x[None, :])[0])
        if val < best_val:
            best_val, best_x = val, x
    return best_val, best_x


def check_design(
    y_star: MomentSequence,
    design: Design | None,
    X: SemiAlgebraicSet,
    basis: RegressionBasis | None = None,
    criterion: Criterion = Criterion.D,
    samples: int = 2000,
    seed: int = 0,
    d: int | None = None,
    pstar: GapPolynomial | None = None,
    tol_neg: float = TOL_NEG,
    tol_riesz: float = TOL_RIESZ,
    tol_atom: float = TOL_ATOM,
) -> CertificateReport:
    """Evaluate p* on samples of X, at the atoms, and against y*.

    The minimum over samples is tightened by a local constrained descent from
    the most negative samples and from jittered copies of the atoms. Failures
    are recorded in the report, never raised.
    """
    criterion = Criterion.parse(criterion)
    d = y_star.order // 2 if d is None else d
    basis = basis or RegressionBasis.identity(X.n, d)
    if pstar is None:
        try:
            pstar = GapPolynomial(y_star, basis, criterion, d)
        except SingularMatrix as exc:
            return _singular_report(y_star, basis, criterion, d, X.n, str(exc), tol_neg, tol_riesz, tol_atom)
    warnings = []
    if criterion is Criterion.E:
        cert = least_eigen(pstar.M)
        if cert.ambiguous:
            warnings.append(f"least eigenvalue has multiplicity {cert.multiplicity}; p* uses one eigenvector")
    try:
        pts = sample_points(X, samples, seed)
        evidence = "samples"
    except SamplingExhausted:
        pts = np.zeros((0, X.n))
        evidence = "atoms"
        warnings.append("design space could not be sampled; nonnegativity checked at atoms only")
    atoms = design.points if design is not None and len(design) else np.zeros((0, X.n))
    rng = np.random.default_rng(seed)
    jitter = (atoms[:, None, :] + 1e-3 * rng.standard_normal((len(atoms), 4, X.n))).reshape(-1, X.n)
    jitter = jitter[membership_many(X, jitter, 0.0)] if len(jitter) else jitter
    cand = np.vstack([pts, atoms, jitter])
    vals = pstar(cand) if len(cand) else np.zeros(0)
    if len(vals):
        i = int(np.argmin(vals))
        min_val, argmin = float(vals[i]), cand[i]
        starts = cand[np.argsort(vals)[:REFINE_STARTS]]
        if len(pts):
            ref_val, ref_x = _refine(pstar, X, np.vstack([starts, jitter]))
            if ref_x is not None and ref_val < min_val:
                min_val, argmin = ref_val, ref_x
                evidence = "samples+local"
            elif evidence == "samples":
                evidence = "samples+local"
    else:
        min_val, argmin = float("nan"), np.full(X.n, np.nan)
    atom_values = pstar(atoms).tolist() if len(atoms) else []
    chris = float(np.max(pstar.christoffel(atoms))) if len(atoms) else float("nan")
    M = pstar.M
    phi_value = phi(M, criterion)
    lam = phi_value  # Euler identity: lambda* = <grad phi(M), M> = phi(M)
    return CertificateReport(
        criterion.name, float(lam), float(phi_value), float(min_val), [float(v) for v in argmin],
        pstar.riesz(y_star), [float(v) for v in atom_values], chris, int(len(pts)),
        tol_neg, tol_riesz, tol_atom, evidence, warnings,
    )


def _singular_report(y, basis, criterion, d, n, message, tol_neg=TOL_NEG, tol_riesz=TOL_RIESZ,
                     tol_atom=TOL_ATOM) -> CertificateReport:
    # No gap polynomial exists without a nonsingular information matrix.
    M = information_matrix(y.truncate(2 * d), basis, d)
    nan = float("nan")
    return CertificateReport(
        Criterion.parse(criterion).name, nan, phi(M, Criterion.parse(criterion)), nan, [nan] * n, nan, [],
        nan, 0, tol_neg, tol_riesz, tol_atom, "none",
        warnings=[f"information matrix is not positive definite: {message}"],
    )


def certify_solution(solve_result, design: Design | None, X: SemiAlgebraicSet, samples: int = 2000,
                     seed: int = 0) -> CertificateReport:
    """check_design with the gap polynomial (fixed-moment terms included) of a SolveResult.

    A polished design is certified through its own moments, which carry the
    exact atomic structure; otherwise y* from the solver is used.
    """
    y = solve_result.y_star
    if design is not None and design.polished:
        y = design.moments(2 * solve_result.d)
    try:
        pstar = gap_polynomial(solve_result, y)
    except SingularMatrix as exc:
        return _singular_report(y, solve_result.basis, solve_result.criterion, solve_result.d, X.n, str(exc))
    report = check_design(
        y, design, X, solve_result.basis, solve_result.criterion, samples, seed, solve_result.d, pstar,
    )
    report.moments_source = "polished design" if y is not solve_result.y_star else "solver"
    lam = solve_result.duals.get("lambda_star")
    if lam is not None and np.isfinite(lam):
        report.lambda_star = float(lam)
    return report


# ---------------------------------------------------------------------------
# SOS certificate from the solver duals


@dataclass
class SOSCertificate:
    grams: list[np.ndarray]  # Q_0 (moment block), then one per constraint
    degrees: list[int]  # half-degree of the monomial vector paired with each Gram
    scale: float
    residual: float
    min_eigenvalues: list[float]
    free: list[int] = field(default_factory=list)  # blocks of an equality pair (sign-free)
    kernel_mismatch: float = 0.0

    @property
    def psd(self) -> bool:
        return all(v >= -1e-8 for i, v in enumerate(self.min_eigenvalues) if i not in self.free)

    def to_json(self) -> dict:
        return {
            "grams": [G.tolist() for G in self.grams],
            "degrees": self.degrees,
            "scale": self.scale,
            "residual": self.residual,
            "min_eigenvalues": self.min_eigenvalues,
            "free": self.free,
            "kernel_mismatch": self.kernel_mismatch,
            "psd": self.psd,
        }


def sos_certificate(solve_result, X: SemiAlgebraicSet, points: int = 50, seed: int = 0,
                    tol: float = SOS_TOL, raise_on_failure: bool = True) -> SOSCertificate:
    """Gram matrices Q_0, Q_j with p* = v^T Q_0 v + sum_j g_j v^T Q_j v.

    The left side is p* written with the solver's own dual quantities:
    nu_0 + sum_a nu_a x^a - F(x)^T W F(x), where W is the dual of the
    information block and equals M^{q-1} at exact optimality (their relative
    distance is reported as ``kernel_mismatch``). The solver objective has
    gradient exactly M^{q-1}, so the multiplier scale c* is 1. The identity
    is checked at seeded random points of the bounding box. Blocks of an
    encoded equality carry a sign-free multiplier and are not required PSD.
    """
    duals = solve_result.duals
    if "moment" not in duals or "information" not in duals:
        raise CertificateResidualTooLarge("no dual matrices available", residual=float("inf"))
    k = solve_result.d + solve_result.delta
    grams = [np.asarray(duals["moment"], dtype=float)]
    degrees = [k]
    for Q, vj in zip(duals["localizing"], X.half_degrees):
        grams.append(np.asarray(Q, dtype=float))
        degrees.append(k - vj)
    free = sorted(1 + j for pair in X.equality_pairs() for j in pair)
    scale = 1.0
    W = np.asarray(duals["information"], dtype=float)
    pstar = gap_polynomial(solve_result)
    K = pstar.core.kernel
    mismatch = float(np.linalg.norm(W - K) / max(np.linalg.norm(K), 1e-300))
    rng = np.random.default_rng(seed)
    lo, hi = box_bounds(X)
    pts = rng.uniform(lo, hi, size=(points, X.n))
    F = eval_monomial_matrix(pts, solve_result.d) @ solve_result.basis.matrix_A.T
    lhs = np.full(points, float(duals["nu"]))
    for entry in duals.get("fixed", []):
        lhs += entry["multiplier"] * np.prod(pts ** np.array(entry["exponents"]), axis=1)
    chris = np.einsum("ij,jk,ik->i", F, W, F)
    lhs = lhs - chris
    V0 = eval_monomial_matrix(pts, degrees[0])
    terms = [np.einsum("ij,jk,ik->i", V0, scale * grams[0], V0)]
    for g, Q, kj in zip(X.inequalities, grams[1:], degrees[1:]):
        V = eval_monomial_matrix(pts, kj)
        terms.append(g.evaluate_many(pts) * np.einsum("ij,jk,ik->i", V, scale * Q, V))
    rhs = np.sum(terms, axis=0)
    mag = np.maximum(1.0, np.max(np.abs(np.vstack(terms + [lhs, chris])), axis=0))
    residual = float(np.max(np.abs(lhs - rhs) / mag))
    mins = [float(np.linalg.eigvalsh((G + G.T) / 2)[0]) if G.size else 0.0 for G in grams]
    cert = SOSCertificate([scale * G for G in grams], degrees, scale, residual, mins, free, mismatch)
    if not (cert.psd and residual <= tol):
        target = _dual_target(solve_result, X.n, 2 * k, W)
        refit = _refit_grams(target, X, degrees, free)
        if refit is not None:
            rhs = np.zeros(points)
            for j, (Q, kj) in enumerate(zip(refit, degrees)):
                V = eval_monomial_matrix(pts, kj)
                gv = 1.0 if j == 0 else X.inequalities[j - 1].evaluate_many(pts)
                rhs += gv * np.einsum("ij,jk,ik->i", V, Q, V)
            res2 = float(np.max(np.abs(lhs - rhs) / mag))
            mins2 = [float(np.linalg.eigvalsh(Q)[0]) for Q in refit]
            cand = SOSCertificate(refit, degrees, scale, res2, mins2, free, mismatch)
            if (cand.psd, -res2) > (cert.psd, -residual):
                cert = cand
                residual = res2
    if raise_on_failure and residual > tol:
        raise CertificateResidualTooLarge(
            f"Gram identity residual {residual:.2e} exceeds {tol:.0e}", residual=residual
        )
    return cert


def _dual_target(solve_result, n: int, order: int, W: np.ndarray) -> np.ndarray:
    """Coefficients (degree ``order``) of nu_0 + sum nu_a x^a - F^T W F."""
    from .moments import basis_matrices
    from .polybasis import basis_size, enumerate_monomials

    d = solve_result.d
    A = solve_result.basis.matrix_A
    t = np.zeros(basis_size(n, order))
    B = basis_matrices(n, d)
    t[: B.shape[0]] -= np.einsum("aij,ij->a", B, A.T @ W @ A)
    t[0] += float(solve_result.duals["nu"])
    index = enumerate_monomials(n, order).index
    for entry in solve_result.duals.get("fixed", []):
        t[index[tuple(entry["exponents"])]] += entry["multiplier"]
    return t


def _refit_grams(target: np.ndarray, X: SemiAlgebraicSet, degrees: list[int], free: list[int],
                 max_vars: int = 1500) -> list[np.ndarray] | None:
    """Gram matrices matching ``target`` exactly, PSD except for sign-free blocks.

    A small SDP over the Gram entries (minimum total trace); used when the
    solver duals sit on a reduced face or miss the identity.
    """
    from .conic import ConicProgram, LMIBlock, SolverOptions, Status, solve
    from .moments import localizing_operator, moment_operator
    from .polybasis import Polynomial

    n = X.n
    order = 2 * degrees[0]
    polys = [Polynomial.constant(n, 1.0)] + list(X.inequalities)
    ops = []
    for j, (g, kj) in enumerate(zip(polys, degrees)):
        ops.append(moment_operator(n, kj, order) if j == 0 else localizing_operator(n, g, kj, order))
    sizes = [op.shape[1] for op in ops]
    nv = sum(s * (s + 1) // 2 for s in sizes)
    if nv > max_vars:
        return None
    A = np.zeros((target.shape[0], nv))
    c = np.zeros(nv)
    blocks = []
    col = 0
    slots = []
    for j, (op, s) in enumerate(zip(ops, sizes)):
        lin = np.zeros((nv, s, s))
        iu = np.triu_indices(s)
        for a, b in zip(*iu):
            A[:, col] = op[:, a, b] * (1.0 if a == b else 2.0)
            lin[col, a, b] = lin[col, b, a] = 1.0
            if a == b and j not in free:
                c[col] = 1.0
            col += 1
        slots.append((col - len(iu[0]), iu, s))
        if j not in free:
            blocks.append(LMIBlock(np.zeros((s, s)), lin, f"gram[{j}]"))
    sol = solve(ConicProgram(c, tuple(blocks), A, target), SolverOptions(gap_tol=1e-10))
    if sol.status is not Status.OPTIMAL or not np.all(np.isfinite(sol.z)):
        return None
    out = []
    for start, iu, s in slots:
        Q = np.zeros((s, s))
        Q[iu] = sol.z[start:start + len(iu[0])]
        out.append(Q + np.triu(Q, 1).T)
    return out


# ---------------------------------------------------------------------------
# level sets for plotting


@dataclass
class LevelSetGrid:
    points: np.ndarray  # (N, n)
    pstar: np.ndarray
    inside: np.ndarray
    resolution: int

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(self.n)] + ["pstar", "inside"])
        for x, v, ok in zip(self.points, self.pstar, self.inside):
            w.writerow([repr(float(c)) for c in x] + [repr(float(v)), int(bool(ok))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LevelSetGrid":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        n = len(header) - 2
        arr = np.array([[float(c) for c in r] for r in body]).reshape(-1, n + 2)
        res = int(round(len(arr) ** (1.0 / n))) if len(arr) else 0
        return cls(arr[:, :n], arr[:, n], arr[:, n + 1].astype(bool), res)


def levelset_grid(pstar, X: SemiAlgebraicSet, resolution: int = 100, tol: float = 1e-8) -> LevelSetGrid:
    """p* on a regular grid over [-R, R]^n with membership flags (n <= 3)."""
    if X.n > 3:
        raise UnsupportedDimension(f"level-set grids support n <= 3, got n = {X.n}")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    lo, hi = box_bounds(X)
    axis = np.linspace(lo, hi, resolution)
    mesh = np.meshgrid(*([axis] * X.n), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return LevelSetGrid(pts, pstar(pts), membership_many(X, pts, tol), resolution)


def report_json(report: CertificateReport) -> str:
    return json.dumps(report.to_json(), indent=2)
