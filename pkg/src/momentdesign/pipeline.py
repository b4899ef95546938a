"""Stage functions behind the service: solve, recover, certify, level sets, full pipeline.

Every stage takes a Problem or a Result and returns a Result carrying the
sections computed so far, so stages can be re-run independently on files.
"""

from __future__ import annotations

import time

import numpy as np

from .certify import certify_solution, gap_polynomial, levelset_grid, sos_certificate
from .conic import SolverOptions, Status
from .designsolve import RelaxationConfig, SolveResult, build_relaxation, solve_design
from .errors import MomentDesignError
from .moments import MomentSequence
from .polybasis import Polynomial, RegressionBasis
from .presets import PRESET_NAMES, preset, reference_design, univariate_reference
from .recovery import Design, RecoveryConfig, RecoveryResult, polish_design, recover
from .schemas import (
    CertificateSection,
    DesignModel,
    ErrorInfo,
    LevelsetSection,
    Problem,
    RecoverySection,
    Result,
    SolveSection,
)
from .semialg import SemiAlgebraicSet, validate_archimedean

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_FLAT = 2
EXIT_NOT_CERTIFIED = 3

CHECK_POINT_TOL = 5e-3
CHECK_WEIGHT_TOL = 5e-3


class StageError(MomentDesignError):
    """Input or solver problem reported to the caller with a location."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


# ---------------------------------------------------------------------------
# problem -> module objects


def problem_from_preset(name: str, **overrides) -> Problem:
    from .presets import PRESET_DEFAULTS

    if name not in PRESET_NAMES:
        raise StageError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}", "design_space.preset")
    dflt = PRESET_DEFAULTS.get(name, {"d": 1, "delta": 1, "r": 1})
    data = {
        "design_space": {"preset": name},
        "regression": {"d": dflt["d"]},
        "delta": dflt["delta"],
        "recovery": {"r": dflt["r"]},
    }
    if "objective" in dflt:
        data["recovery"]["objective"] = dflt["objective"]
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    return Problem.model_validate(data)


def design_space(problem: Problem) -> SemiAlgebraicSet:
    space = problem.design_space
    if hasattr(space, "preset"):
        try:
            return preset(space.preset)
        except KeyError as exc:
            raise StageError(str(exc.args[0]), "design_space.preset") from None
    polys = []
    for j, terms in enumerate(space.inequalities):
        try:
            polys.append(Polynomial.from_json(space.n, [t.model_dump() for t in terms]))
        except ValueError as exc:
            raise StageError(str(exc), f"design_space.inequalities[{j}]") from None
    try:
        X = SemiAlgebraicSet(space.n, tuple(polys), space.ball_radius, name=space.name)
        return validate_archimedean(X, space.radius_hint)
    except (ValueError, MomentDesignError) as exc:
        raise StageError(str(exc), "design_space") from None


def relaxation_config(problem: Problem, X: SemiAlgebraicSet) -> RelaxationConfig:
    basis = None
    if problem.regression.basis_matrix is not None:
        try:
            basis = RegressionBasis(np.array(problem.regression.basis_matrix, dtype=float))
        except (ValueError, MomentDesignError) as exc:
            raise StageError(str(exc), "regression.basis_matrix") from None
    fixed = []
    for k, fm in enumerate(problem.fixed_moments):
        if len(fm.exponents) != X.n:
            raise StageError(f"exponents {fm.exponents} do not have {X.n} entries", f"fixed_moments[{k}]")
        fixed.append((tuple(fm.exponents), fm.value))
    try:
        return RelaxationConfig(problem.regression.d, problem.delta, problem.criterion, basis, tuple(fixed))
    except (ValueError, MomentDesignError) as exc:
        raise StageError(str(exc), "regression") from None


def solver_options(problem: Problem) -> SolverOptions:
    s = problem.solver
    return SolverOptions(feas_tol=s.feas_tol, gap_tol=s.gap_tol, max_iter=s.max_iter, seed=problem.seed)


def recovery_config(problem: Problem, n: int) -> RecoveryConfig:
    rc = problem.recovery
    f_r = None
    if rc.objective is not None:
        for k, term in enumerate(rc.objective):
            if len(term.exponents) != n or any(e < 0 for e in term.exponents):
                raise StageError(f"objective term {term.exponents} is not a monomial in {n} variables",
                                 f"recovery.objective.{k}.exponents")
        f_r = Polynomial.from_json(n, [t.model_dump() for t in rc.objective])
    return RecoveryConfig(rc.r, rc.method, f_r, rc.rank_tol, rc.random_objective, problem.seed)


# ---------------------------------------------------------------------------
# module objects <-> result sections


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def solve_section(res: SolveResult) -> SolveSection:
    return SolveSection(
        status=res.status.value,
        rho_delta=None if not np.isfinite(res.rho_delta) else float(res.rho_delta),
        y_star=res.y_star.to_json() if res.y_star is not None else None,
        y_lifted=res.y_lifted.to_json() if res.y_lifted is not None else None,
        duals=_jsonable(res.duals),
        diagnostics=_jsonable(res.diagnostics),
    )


def solve_result_from_section(sec: SolveSection, problem: Problem, X: SemiAlgebraicSet) -> SolveResult:
    cfg = relaxation_config(problem, X)
    duals = dict(sec.duals)
    for key in ("moment", "information"):
        if key in duals:
            duals[key] = np.array(duals[key], dtype=float)
    if "localizing" in duals:
        duals["localizing"] = [np.array(Q, dtype=float) for Q in duals["localizing"]]
    y_star = MomentSequence.from_json(sec.y_star.model_dump()) if sec.y_star else None
    y_lifted = MomentSequence.from_json(sec.y_lifted.model_dump()) if sec.y_lifted else None
    return SolveResult(
        Status(sec.status), y_star, y_lifted,
        float("nan") if sec.rho_delta is None else sec.rho_delta,
        cfg.criterion, cfg.d, cfg.delta, cfg.regression(X.n), cfg.fixed_moments, duals, dict(sec.diagnostics),
    )


def recovery_section(rr: RecoveryResult, design: Design | None, check: dict | None = None) -> RecoverySection:
    return RecoverySection(
        design=DesignModel(**design.to_json()) if design is not None else None,
        flat=rr.flat,
        degraded=rr.degraded,
        r=rr.r,
        ranks=list(rr.ranks) if rr.ranks is not None else None,
        method=rr.method.value,
        attempts=[
            {"r": a.r, "flat": a.flat, "ranks": list(a.ranks), "error": a.error, "objective": a.objective}
            for a in rr.attempts
        ],
        check=check,
    )


def design_from_section(sec: RecoverySection | None) -> Design | None:
    if sec is None or sec.design is None:
        return None
    return Design.from_json(sec.design.model_dump())


# ---------------------------------------------------------------------------
# reference comparison


def check_against_reference(design: Design | None, problem: Problem) -> dict:
    """Diff a design against the published table for its preset (or the analytic interval design)."""
    space = problem.design_space
    name = getattr(space, "preset", None)
    d = problem.regression.d
    if name is None or problem.criterion != "D" or problem.fixed_moments:
        return {"available": False, "reason": "no reference for this problem"}
    if name == "interval":
        pts = univariate_reference(d)[:, None]
        ref = (pts, np.full(len(pts), 1.0 / len(pts)))
        source = "roots of (1 - t^2) P_d'(t), equal weights"
    else:
        ref = reference_design(name, d)
        source = "published table"
    if ref is None:
        return {"available": False, "reason": f"no reference for {name} at d = {d}"}
    ref_pts, ref_w = ref
    out = {
        "available": True,
        "source": source,
        "expected_atoms": int(len(ref_pts)),
        "found_atoms": 0 if design is None else len(design),
        "point_tol": CHECK_POINT_TOL,
        "weight_tol": CHECK_WEIGHT_TOL,
    }
    if design is None or len(design) != len(ref_pts):
        out.update(passed=False, max_point_error=None, max_weight_error=None)
        return out
    # one-to-one nearest matching; designs here have at most a few dozen atoms
    from scipy.optimize import linear_sum_assignment

    cost = np.max(np.abs(ref_pts[:, None, :] - design.points[None, :, :]), axis=2)
    rows, cols = linear_sum_assignment(cost)
    perr = float(cost[rows, cols].max())
    werr = float(np.max(np.abs(ref_w[rows] - design.weights[cols])))
    out.update(
        passed=perr <= CHECK_POINT_TOL and werr <= CHECK_WEIGHT_TOL,
        max_point_error=perr,
        max_weight_error=werr,
    )
    return out


# ---------------------------------------------------------------------------
# stages


def _as_result(obj: Problem | Result) -> Result:
    if isinstance(obj, Result):
        return obj.model_copy(deep=True)
    return Result(problem=obj)


def stage_solve(obj: Problem | Result) -> Result:
    out = _as_result(obj)
    problem = out.problem
    X = design_space(problem)
    cfg = relaxation_config(problem, X)
    start = time.perf_counter()
    try:
        res = solve_design(X, cfg, solver_options(problem))
    except MomentDesignError as exc:
        raise StageError(str(exc), "solve") from None
    out.timing["solve"] = time.perf_counter() - start
    out.solve = solve_section(res)
    out.recovery = out.certificate = out.levelset = None
    return out


def _require_solve(out: Result) -> tuple[SemiAlgebraicSet, SolveResult]:
    X = design_space(out.problem)
    res = solve_result_from_section(out.solve, out.problem, X)
    if res.y_star is None:
        raise StageError(f"solve ended with status {res.status.value}; nothing to recover", "solve.status")
    return X, res


def stage_recover(obj: Problem | Result, check: bool = False) -> Result:
    out = _as_result(obj)
    if out.solve is None:
        out = stage_solve(out)
    X, res = _require_solve(out)
    problem = out.problem
    start = time.perf_counter()
    rr = recover(
        res.y_star, X, recovery_config(problem, X.n), res.basis, res.criterion, res.d,
        r_cap=problem.recovery.r_cap,
    )
    design = rr.design
    if design is not None and problem.recovery.polish:
        design = polish_design(design, X, res.y_star, res.basis, res.criterion, res.d, fixed_moments=res.fixed_moments)
    out.timing["recover"] = time.perf_counter() - start
    out.recovery = recovery_section(rr, design, check_against_reference(design, problem) if check else None)
    out.certificate = out.levelset = None
    return out


def stage_certify(obj: Problem | Result) -> Result:
    out = _as_result(obj)
    if out.recovery is None:
        out = stage_recover(out)
    X, res = _require_solve(out)
    problem = out.problem
    start = time.perf_counter()
    design = design_from_section(out.recovery)
    report = certify_solution(res, design, X, problem.certify.samples, problem.seed)
    sos, sos_error = None, None
    if problem.certify.sos:
        try:
            sos = sos_certificate(res, X, seed=problem.seed, raise_on_failure=False).to_json()
        except MomentDesignError as exc:
            sos_error = f"{type(exc).__name__}: {exc}"
    out.timing["certify"] = time.perf_counter() - start
    out.certificate = CertificateSection(report=_jsonable(report.to_json()), sos=_jsonable(sos), sos_error=sos_error)
    return out


def stage_levelset(obj: Problem | Result, resolution: int | None = None) -> tuple[Result, str]:
    out = _as_result(obj)
    if out.solve is None:
        out = stage_solve(out)
    X, res = _require_solve(out)
    problem = out.problem
    resolution = resolution or problem.certify.resolution
    design = design_from_section(out.recovery)
    y = design.moments(2 * res.d) if design is not None and design.polished else None
    try:
        grid = levelset_grid(gap_polynomial(res, y), X, resolution)
    except MomentDesignError as exc:
        raise StageError(str(exc), "levelset") from None
    inside = grid.pstar[grid.inside]
    out.levelset = LevelsetSection(
        path=problem.output.levelset,
        resolution=resolution,
        nodes=int(len(grid.pstar)),
        inside=int(grid.inside.sum()),
        min_pstar_inside=float(inside.min()) if len(inside) else None,
    )
    return out, grid.to_csv()


def exit_code(out: Result) -> int:
    if out.error is not None:
        return EXIT_ERROR
    if out.solve is None or out.solve.status != Status.OPTIMAL.value:
        return EXIT_ERROR
    if out.recovery is None or out.recovery.design is None:
        return EXIT_NOT_FLAT
    if out.certificate is None or not out.certificate.report.get("passed", False):
        return EXIT_NOT_CERTIFIED
    check = out.recovery.check
    if check and check.get("available") and not check.get("passed"):
        return EXIT_NOT_CERTIFIED
    return EXIT_OK


def run_pipeline(obj: Problem | Result, check: bool = False) -> Result:
    """solve -> recover (r-escalation, polish) -> certify, with an exit code.

    Exit codes: 0 certified, 1 input or solver error, 2 no flat lift up to
    the r cap, 3 atoms found but certification (or --check) failed.
    """
    problem = obj.problem if isinstance(obj, Result) else obj
    out = Result(problem=problem)
    start = time.perf_counter()
    try:
        out = stage_solve(out)
        if out.solve.status == Status.OPTIMAL.value:
            out = stage_recover(out, check=check)
            if out.recovery.design is not None:
                out = stage_certify(out)
    except StageError as exc:
        out.error = ErrorInfo(type=type(exc).__name__, message=str(exc), location=exc.location)
    except MomentDesignError as exc:
        out.error = ErrorInfo(type=type(exc).__name__, message=str(exc), location=None)
    out.timing["total"] = time.perf_counter() - start
    out.exit_code = exit_code(out)
    return out


def dump_sdp(problem: Problem) -> str:
    from .conic import to_sdpa

    X = design_space(problem)
    return to_sdpa(build_relaxation(X, relaxation_config(problem, X)))
