"""Command-line client for the design service.

By default requests go to an in-process instance of the service; pass --url
(or set MOMENTDESIGN_URL) to talk to a running server instead.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from pydantic import ValidationError

from .pipeline import EXIT_ERROR, EXIT_NOT_FLAT, EXIT_OK, StageError, exit_code, problem_from_preset
from .presets import PRESET_NAMES
from .schemas import LevelsetResponse, Problem, Result

STAGES = ("solve", "recover", "certify", "levelset", "pipeline")


def _client(url: str | None):
    if url:
        import httpx

        return httpx.Client(base_url=url, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _error(kind: str, message: str, location: str | None = None) -> int:
    print(json.dumps({"error": {"type": kind, "message": message, "location": location}}), file=sys.stderr)
    return EXIT_ERROR


def _location(err: ValidationError, path: str) -> str:
    first = err.errors()[0]
    parts = list(first["loc"])
    # drop union tags such as design_space.inline
    parts = [p for i, p in enumerate(parts) if not (i and parts[i - 1] == "design_space" and p in ("inline", "preset"))]
    loc = ".".join(str(p) for p in parts)
    return f"{path}:{loc}" if loc else path


def load_payload(path: str) -> Problem | Result:
    """Parse a problem file, or a result file emitted by an earlier stage."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict) and "problem" in data:
        return Result.model_validate(data)
    return Problem.model_validate(data)


def _build_payload(args) -> Problem | Result:
    if args.problem:
        payload = load_payload(args.problem)
    else:
        overrides = {}
        if args.criterion:
            overrides["criterion"] = args.criterion
        if args.delta is not None:
            overrides["delta"] = args.delta
        payload = problem_from_preset(args.preset, **overrides)
        if args.d is not None or args.r is not None:
            data = payload.model_dump()
            if args.d is not None:
                data["regression"]["d"] = args.d
            if args.r is not None:
                data["recovery"]["r"] = args.r
            payload = Problem.model_validate(data)
    if args.seed is not None:
        problem = payload.problem if isinstance(payload, Result) else payload
        problem = problem.model_copy(update={"seed": args.seed})
        if isinstance(payload, Result):
            payload = Result(problem=problem)
        else:
            payload = problem
    return payload


def _post(client, route: str, body: dict):
    resp = client.post(route, json=body)
    data = resp.json()
    if resp.status_code != 200:
        err = data.get("error") if isinstance(data, dict) else None
        if err is None:
            detail = data.get("detail", data) if isinstance(data, dict) else data
            err = {"type": "ValidationError", "message": json.dumps(detail)[:2000], "location": route}
        raise StageError(err["message"], err.get("location"))
    return data


def _summary(stage: str, result: Result) -> str:
    lines = [f"stage: {stage}"]
    if result.solve is not None:
        rho = result.solve.rho_delta
        lines.append(f"solve: {result.solve.status}" + (f", rho_delta = {rho:.8g}" if rho is not None else ""))
    if result.recovery is not None:
        rec = result.recovery
        ranks = tuple(rec.ranks) if rec.ranks else None
        if rec.design is None:
            lines.append(f"recovery: no atoms (flat = {rec.flat}, ranks = {ranks}, r = {rec.r})")
        else:
            lines.append(
                f"recovery: {len(rec.design.points)} atoms, ranks = {ranks}, r = {rec.r}, "
                f"residual = {rec.design.residual:.2e}" + (", degraded" if rec.degraded else "")
            )
            for x, w in zip(rec.design.points, rec.design.weights):
                lines.append("  " + "  ".join(f"{c:+.6f}" for c in x) + f"   w = {w:.6f}")
        if rec.check:
            chk = rec.check
            if chk.get("available"):
                lines.append(
                    f"check: {'pass' if chk['passed'] else 'FAIL'} against {chk['source']} "
                    f"(atoms {chk['found_atoms']}/{chk['expected_atoms']}, "
                    f"point err {chk['max_point_error']}, weight err {chk['max_weight_error']})"
                )
            else:
                lines.append(f"check: {chk.get('reason')}")
    if result.certificate is not None:
        rep = result.certificate.report
        lines.append(
            f"certificate: {'passed' if rep['passed'] else 'FAILED'}; min p* = {rep['min_pstar_on_samples']:.2e} "
            f"over {rep['sample_count']} samples, L(p*) = {rep['riesz_pstar']:.2e}, lambda* = {rep['lambda_star']:.8g}"
        )
    if result.levelset is not None:
        lines.append(f"levelset: {result.levelset.nodes} nodes, {result.levelset.inside} inside")
    if result.error is not None:
        lines.append(f"error: {result.error.type}: {result.error.message} at {result.error.location}")
    return "\n".join(lines)


def _stage_exit(stage: str, result: Result) -> int:
    if stage in ("pipeline", "certify"):
        return exit_code(result)
    if stage == "solve":
        return EXIT_OK if result.solve is not None and result.solve.status == "Optimal" else EXIT_ERROR
    if stage == "recover":
        return EXIT_OK if result.recovery is not None and result.recovery.design is not None else EXIT_NOT_FLAT
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # Usage errors are input errors: exit 1, not argparse's 2 (which means "not flat" here).
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.exit(_error("UsageError", message, "argv"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="momentdesign",
        description="Approximate D/A/E-optimal designs on semi-algebraic sets via moment relaxations.",
    )
    parser.add_argument("stage", choices=STAGES)
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--problem", metavar="PATH", help="problem file, or a result file from an earlier stage")
    src.add_argument("--preset", metavar="NAME", help="worked example design space: " + ", ".join(PRESET_NAMES))
    parser.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current)")
    parser.add_argument("--check", action="store_true", help="diff the design against the reference table")
    parser.add_argument("--dump-sdp", action="store_true", help="also write the relaxation in SDPA sparse format")
    parser.add_argument("--seed", type=int, metavar="N")
    parser.add_argument("--criterion", metavar="D|A|E", help="optimality criterion (with --preset)")
    parser.add_argument("-d", type=int, metavar="D", help="regression degree (with --preset)")
    parser.add_argument("--delta", type=int, help="relaxation order increment (with --preset)")
    parser.add_argument("-r", type=int, metavar="R", help="initial lifting order (with --preset)")
    parser.add_argument("--resolution", type=int, help="level-set grid points per axis")
    parser.add_argument("--url", default=os.environ.get("MOMENTDESIGN_URL"), help="base URL of a running service")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        payload = _build_payload(args)
    except FileNotFoundError as exc:
        return _error("FileNotFoundError", str(exc), args.problem)
    except json.JSONDecodeError as exc:
        return _error("JSONDecodeError", exc.msg, f"{args.problem}:{exc.lineno}:{exc.colno}")
    except ValidationError as exc:
        first = exc.errors()[0]
        return _error("ValidationError", first["msg"], _location(exc, args.problem or args.preset))
    except StageError as exc:
        return _error("StageError", str(exc), exc.location)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = payload.problem if isinstance(payload, Result) else payload
    body = payload.model_dump(mode="json")
    client = _client(args.url)
    try:
        if args.dump_sdp:
            sdp = _post(client, "/sdp", problem.model_dump(mode="json"))
            (out_dir / problem.output.sdp).write_text(sdp["text"])
        csv_text = None
        if args.stage == "solve":
            data = _post(client, "/solve", body)
        elif args.stage == "certify":
            data = _post(client, "/certify", body)
        elif args.stage == "levelset":
            resp = LevelsetResponse.model_validate(
                _post(client, "/levelset", {"payload": body, "resolution": args.resolution})
            )
            data, csv_text = resp.result.model_dump(mode="json"), resp.csv
        else:
            data = _post(client, f"/{args.stage}", {"payload": body, "check": args.check})
    except StageError as exc:
        return _error("StageError", str(exc), exc.location)
    finally:
        close = getattr(client, "close", None)
        if close is not None:
            close()

    result = Result.model_validate(data)
    if csv_text is not None:
        (out_dir / problem.output.levelset).write_text(csv_text)
    code = _stage_exit(args.stage, result)
    result.exit_code = code
    (out_dir / problem.output.result).write_text(result.model_dump_json(indent=2))
    print(_summary(args.stage, result))
    if result.error is not None:
        print(json.dumps({"error": result.error.model_dump()}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
