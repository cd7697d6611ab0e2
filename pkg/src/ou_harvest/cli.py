"""Command-line surface: JSON config parsing and the evaluate / simulate /
sign / sweep / validate commands, emitting JSON reports or CSV tables meant
for downstream plotting.

Everything a command prints is a pure function of (config, flags): there
are no timestamps, and parallel replication workers only change wall time,
never bytes.  Exit codes: 0 ok, 2 config error, 3 numerical
non-convergence, 4 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

from . import __version__
from .functionals import FunctionalContext, psi, rho
from .numerics import NonConvergenceError, QuadratureSpec, RngStream
from .ou_model import Boundary, Corridor, OUParams, StepCapExceededError
from .renewal import (
    INDEXING_NOTE,
    InsufficientCyclesError,
    expected_ratio,
    level_reset_policy,
    pool_runs,
    renewal_theorem_check,
    simulate_renewal,
)
from .sign_analysis import (
    LimitCase,
    gamma_closed_form,
    proposition_report,
    surrogate_A,
    surrogate_B,
    surrogate_B_printed,
)
from .validation import ValidationData, run_all

__all__ = [
    "ConfigError",
    "RunConfig",
    "SweepSpec",
    "cmd_evaluate",
    "cmd_sign",
    "cmd_simulate",
    "cmd_sweep",
    "cmd_validate",
    "main",
    "parse_config",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_VALIDATION = 4

_SWEEPABLE = ("theta", "eta", "x0", "a", "b")


class ConfigError(ValueError):
    """A configuration document or sweep specification violates the schema
    or a model precondition."""


@dataclass(frozen=True)
class RunConfig:
    a: float
    b: float
    eta: float
    x0: float
    theta: float
    seed: int
    horizon: float
    h: float = 1e-4
    quad_abs_tol: float = 1e-10
    replications: int = 1
    bridge_correction: bool = False
    output_path: str | None = None
    output_format: str = "json"


_REQUIRED_KEYS = ("a", "b", "eta", "x0", "theta", "seed", "horizon")
_OPTIONAL_KEYS = ("h", "quad_abs_tol", "replications", "bridge_correction",
                  "output_path", "output_format")
_ALL_KEYS = _REQUIRED_KEYS + _OPTIONAL_KEYS


def _require_real(doc, key):
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}={value!r} must be a real number")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{key}={value!r} must be finite")
    return value


def _require_int(doc, key, lo, hi):
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}={value!r} must be an integer")
    if not lo <= value <= hi:
        raise ConfigError(f"{key}={value} must be in [{lo}, {hi}]")
    return value


def parse_config(source):
    """Parse and fully validate a JSON config document.

    The schema is rigid: the seven required keys, the six optional ones,
    nothing else.  Every model precondition is re-checked here so errors
    name the offending fields instead of surfacing later as library
    exceptions.
    """
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config must be a JSON object, got {type(doc).__name__}")
    unknown = sorted(set(doc) - set(_ALL_KEYS))
    if unknown:
        raise ConfigError(
            f"unknown config key(s): {', '.join(unknown)} "
            f"(allowed: {', '.join(_ALL_KEYS)})"
        )
    missing = sorted(set(_REQUIRED_KEYS) - set(doc))
    if missing:
        raise ConfigError(f"missing required config key(s): {', '.join(missing)}")

    a = _require_real(doc, "a")
    b = _require_real(doc, "b")
    eta = _require_real(doc, "eta")
    x0 = _require_real(doc, "x0")
    theta = _require_real(doc, "theta")
    horizon = _require_real(doc, "horizon")
    seed = _require_int(doc, "seed", 0, 2**64 - 1)

    if not b > 0.0:
        raise ConfigError(f"b={b} must be > 0 (beta = sqrt(2 b) must be real)")
    if not a < 0.0:
        raise ConfigError(f"a={a} must be < 0 (consumption regime)")
    if eta < 0.0:
        raise ConfigError(f"eta={eta} must be >= 0")
    if not eta < x0:
        raise ConfigError(f"eta={eta} must be < x0={x0}")
    if not x0 < theta:
        raise ConfigError(f"x0={x0} must be < theta={theta}")
    if not eta < theta:
        raise ConfigError(f"eta={eta} must be < theta={theta}")
    if not horizon > 0.0:
        raise ConfigError(f"horizon={horizon} must be > 0")

    h = _require_real(doc, "h") if "h" in doc else 1e-4
    if not h > 0.0:
        raise ConfigError(f"h={h} must be > 0")
    quad_abs_tol = _require_real(doc, "quad_abs_tol") if "quad_abs_tol" in doc else 1e-10
    if not quad_abs_tol > 0.0:
        raise ConfigError(f"quad_abs_tol={quad_abs_tol} must be > 0")
    replications = _require_int(doc, "replications", 1, 10**6) if "replications" in doc else 1
    bridge = doc.get("bridge_correction", False)
    if not isinstance(bridge, bool):
        raise ConfigError(f"bridge_correction={bridge!r} must be a boolean")
    output_path = doc.get("output_path")
    if output_path is not None and not isinstance(output_path, str):
        raise ConfigError(f"output_path={output_path!r} must be a string or null")
    output_format = doc.get("output_format", "json")
    if output_format not in ("csv", "json"):
        raise ConfigError(f"output_format={output_format!r} must be 'csv' or 'json'")

    return RunConfig(
        a=a, b=b, eta=eta, x0=x0, theta=theta, seed=seed, horizon=horizon,
        h=h, quad_abs_tol=quad_abs_tol, replications=replications,
        bridge_correction=bridge, output_path=output_path,
        output_format=output_format,
    )


@dataclass(frozen=True)
class SweepSpec:
    swept_parameter: str
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        if self.swept_parameter not in _SWEEPABLE:
            raise ConfigError(
                f"swept parameter {self.swept_parameter!r} must be one of {_SWEEPABLE}"
            )
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigError(f"sweep bounds must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise ConfigError(f"sweep lo={self.lo} must be < hi={self.hi}")
        if not isinstance(self.steps, int) or self.steps < 2:
            raise ConfigError(f"sweep steps={self.steps} must be an integer >= 2")


# ---------------------------------------------------------------------------
# Shared construction and rendering helpers
# ---------------------------------------------------------------------------

def _model_pieces(config):
    params = OUParams(config.a, config.b)
    corridor = Corridor(config.eta, config.x0, config.theta)
    quad = QuadratureSpec(abs_tol=config.quad_abs_tol)
    ctx = FunctionalContext(params, config.eta, config.theta, quad)
    return params, corridor, ctx


def _config_echo(config):
    return asdict(config)


def _report(config, results, diagnostics=None):
    return {
        "version": __version__,
        "config": _config_echo(config),
        "results": results,
        "diagnostics": diagnostics or {},
    }


def _fmt(value):
    return format(float(value), ".17g")


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _flat_csv(results):
    """Render a flat mapping as a two-line CSV (header + one data row)."""
    header = list(results)
    row = [
        _fmt(v) if isinstance(v, float) else v
        for v in (results[k] for k in header)
    ]
    return _csv_text(header, [row])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_evaluate(config):
    """Closed-form summary at the configured reset level: scale constants,
    drift equilibrium, rho, psi, and the level-reset harvest ratio."""
    _, corridor, ctx = _model_pieces(config)
    policy = level_reset_policy(config.eta, config.theta, config.x0)
    rho_x0 = rho(ctx, config.x0)
    psi_x0 = psi(ctx, config.x0)
    expected_reward = policy.q_theta + (policy.q_eta - policy.q_theta) * rho_x0
    results = {
        "alpha": ctx.alpha,
        "beta": ctx.beta,
        "drift_equilibrium": -config.a / config.b,
        "rho_x0": rho_x0,
        "psi_x0": psi_x0,
        "expected_reward": expected_reward,
        "expected_cycle_time": psi_x0,
        "ratio": expected_ratio(ctx, config.x0, policy),
    }
    return _report(config, results)


def _one_replication(config, params, corridor, policy, rep, step_cap):
    stream = RngStream(config.seed, stream_id=rep)
    return simulate_renewal(
        params, corridor, policy, config.horizon, config.h, stream,
        bridge_correction=config.bridge_correction, step_cap=step_cap,
    )


def cmd_simulate(config, workers=1, step_cap=None):
    """Run the configured number of independent renewal replications and
    compare the pooled time average against the closed-form ratio.

    Replication r draws from stream (seed, stream_id=r); results are
    assembled by replication index, so the worker count cannot change the
    output.  Returns (report, cycle_rows) where cycle_rows back the CSV
    export of per-cycle records.

    A step-cap abort re-raises StepCapExceededError with the report built
    from the replications that did finish attached as .partial_report, so
    the caller can flush partial results before exiting.
    """
    from .ou_model import DEFAULT_STEP_CAP

    params, corridor, ctx = _model_pieces(config)
    policy = level_reset_policy(config.eta, config.theta, config.x0)
    analytic = expected_ratio(ctx, config.x0, policy)
    cap = DEFAULT_STEP_CAP if step_cap is None else step_cap

    reps = range(config.replications)
    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                runs = list(pool.map(
                    lambda rep: _one_replication(config, params, corridor, policy, rep, cap),
                    reps,
                ))
        else:
            runs = [_one_replication(config, params, corridor, policy, rep, cap)
                    for rep in reps]
    except StepCapExceededError as exc:
        exc.partial_report = _report(
            config,
            {"analytic": {"ratio": analytic}, "replications": [], "pooled": None},
            diagnostics={"aborted": str(exc), "notes": [INDEXING_NOTE]},
        )
        raise

    per_rep = []
    for rep, run in enumerate(runs):
        lower = sum(1 for r in run.cycle_records if r.boundary is Boundary.LOWER)
        per_rep.append({
            "replication": rep,
            "n_cycles": run.n_cycles,
            "lower_cycles": lower,
            "upper_cycles": run.n_cycles - lower,
            "total_reward": run.total_reward,
            "time_average": run.time_average,
            "mean_cycle_duration": (
                sum(r.duration for r in run.cycle_records) / run.n_cycles
                if run.n_cycles else None
            ),
        })

    pooled = pool_runs(runs)
    pooled_result = {
        "n_cycles": pooled.n_cycles,
        "total_time": pooled.horizon,
        "insufficient_cycles": False,
    }
    try:
        chk = renewal_theorem_check(pooled, analytic)
        pooled_result.update({
            "time_average": chk.time_average,
            "analytic_ratio": chk.analytic_ratio,
            "difference": chk.difference,
            "std_error": chk.std_error,
            "within_three_se": chk.within_three_se,
        })
    except InsufficientCyclesError as exc:
        pooled_result.update({
            "insufficient_cycles": True,
            "reason": str(exc),
            "time_average": None,
            "analytic_ratio": analytic,
            "difference": None,
            "std_error": None,
            "within_three_se": None,
        })

    report = _report(
        config,
        {"analytic": {
            "rho_x0": rho(ctx, config.x0),
            "psi_x0": psi(ctx, config.x0),
            "ratio": analytic,
        },
         "replications": per_rep,
         "pooled": pooled_result},
        diagnostics={"notes": [INDEXING_NOTE]},
    )
    cycle_rows = [
        (rep, i, record.boundary.value, record.duration, record.reward)
        for rep, run in enumerate(runs)
        for i, record in enumerate(run.cycle_records)
    ]
    return report, cycle_rows


def _verdict_dict(verdict):
    return {
        "case": verdict.case.value,
        "surrogate": verdict.surrogate_value,
        "gamma_closed_form": _none_if_nan(verdict.gamma_closed_form),
        "gamma_numeric_limit": _none_if_nan(verdict.gamma_numeric_limit),
        "signs_agree": verdict.signs_agree,
        "in_positivity_region": verdict.in_positivity_region,
        "flags": list(verdict.flags),
    }


def _none_if_nan(value):
    return None if isinstance(value, float) and math.isnan(value) else value


def cmd_sign(config):
    """Sign verdicts for both boundary limits, including the audit value of
    the uncorrected upper-case surrogate."""
    _, _, ctx = _model_pieces(config)
    verdict_a, verdict_b = proposition_report(ctx)
    results = {
        "case_a": _verdict_dict(verdict_a),
        "case_b": _verdict_dict(verdict_b),
    }
    diagnostics = {"surrogate_b_printed_form": surrogate_B_printed(ctx)}
    return _report(config, results, diagnostics)


_SWEEP_HEADER = (
    "swept_parameter", "value", "rho_x0", "psi_x0", "ratio",
    "surrogate_a", "surrogate_b", "gamma_a", "gamma_b",
    "in_positivity_region_a", "skip_reason",
)


def cmd_sweep(config, spec):
    """One row per grid point of the swept parameter.  Points that violate
    the corridor or parameter preconditions become rows with a recorded
    skip reason and empty numerics; a grid with no valid points is an
    error."""
    values = [spec.lo + (spec.hi - spec.lo) * i / (spec.steps - 1) for i in range(spec.steps)]
    rows = []
    n_valid = 0
    for value in values:
        patched = replace(config, **{spec.swept_parameter: value})
        try:
            if not patched.b > 0.0:
                raise ConfigError(f"b={patched.b} must be > 0")
            if not patched.a < 0.0:
                raise ConfigError(f"a={patched.a} must be < 0")
            if patched.eta < 0.0:
                raise ConfigError(f"eta={patched.eta} must be >= 0")
            if not (patched.eta < patched.x0 < patched.theta):
                raise ConfigError(
                    f"corridor violated: need eta={patched.eta} < x0={patched.x0} "
                    f"< theta={patched.theta}"
                )
            _, _, ctx = _model_pieces(patched)
            policy = level_reset_policy(patched.eta, patched.theta, patched.x0)
            row = (
                spec.swept_parameter, _fmt(value),
                _fmt(rho(ctx, patched.x0)), _fmt(psi(ctx, patched.x0)),
                _fmt(expected_ratio(ctx, patched.x0, policy)),
                _fmt(surrogate_A(ctx)), _fmt(surrogate_B(ctx)),
                _fmt(gamma_closed_form(ctx, LimitCase.A_LOWER)),
                _fmt(gamma_closed_form(ctx, LimitCase.B_UPPER)),
                str(patched.eta >= -patched.a / patched.b).lower(),
                "",
            )
            n_valid += 1
        except (ConfigError, ValueError) as exc:
            row = (spec.swept_parameter, _fmt(value), "", "", "", "", "", "", "", "",
                   str(exc))
        rows.append(row)
    if n_valid == 0:
        raise ConfigError(
            f"sweep of {spec.swept_parameter} over [{spec.lo}, {spec.hi}] "
            "produced no valid grid points"
        )
    return _csv_text(_SWEEP_HEADER, rows)


def cmd_validate(config, paths=100_000, renewal_cycles=10_000.0,
                 renewal_replications=4, grid_points=20, psi_denominator="pdf",
                 moment_draws=1_000_000):
    """Run the full cross-validation suite at the configured parameters.

    The sample-size knobs default to desk scale; smaller values give a fast
    smoke test with correspondingly wider statistical bands.  With
    psi_denominator='cdf' the exit-time checks run against the deliberately
    corrupted integrand and are expected to fail.
    """
    params, corridor, _ = _model_pieces(config)
    data = ValidationData(
        params, corridor, config.seed,
        quad=QuadratureSpec(abs_tol=config.quad_abs_tol),
        fp_paths=paths, moment_draws=moment_draws,
        renewal_cycles=renewal_cycles,
        renewal_replications=renewal_replications,
        h=config.h, bridge_correction=config.bridge_correction,
        grid_points=grid_points,
    )
    checks = run_all(data, psi_denominator=psi_denominator)
    results = {
        "checks": [
            {
                "name": c.name,
                "passed": c.passed,
                "measured": {k: _none_if_nan(v) for k, v in c.measured.items()},
                "tolerance": c.tolerance,
                "detail": c.detail,
            }
            for c in checks
        ],
        "all_passed": all(c.passed for c in checks),
    }
    diagnostics = {
        "paths": paths,
        "renewal_cycles": renewal_cycles,
        "renewal_replications": renewal_replications,
        "grid_points": grid_points,
        "psi_denominator": psi_denominator,
    }
    return _report(config, results, diagnostics)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ou-harvest",
        description="Evaluate two-boundary harvesting policies on an "
                    "Ornstein-Uhlenbeck resource process.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("evaluate", "closed-form rho/psi/ratio at the reset level"),
        ("simulate", "renewal simulation vs the closed-form ratio"),
        ("sign", "boundary-limit sign verdicts"),
        ("sweep", "CSV curve of the key quantities along one parameter"),
        ("validate", "full Monte Carlo / analytic cross-check suite"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="override the config's output_format")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed")
        if name == "simulate":
            p.add_argument("--workers", type=int, default=1,
                           help="parallel replication workers (output-invariant)")
        if name == "sweep":
            p.add_argument("--sweep-param", required=True, choices=_SWEEPABLE)
            p.add_argument("--lo", type=float, required=True)
            p.add_argument("--hi", type=float, required=True)
            p.add_argument("--steps", type=int, required=True)
        if name == "validate":
            p.add_argument("--paths", type=int, default=100_000,
                           help="first-passage Monte Carlo paths")
            p.add_argument("--renewal-cycles", type=float, default=10_000.0,
                           help="renewal horizon in expected cycle lengths")
            p.add_argument("--grid-points", type=int, default=20,
                           help="boundary grid resolution for the sign checks")
            p.add_argument("--moment-draws", type=int, default=1_000_000,
                           help="draws for the moment-matching check")
            p.add_argument("--psi-denominator", choices=("pdf", "cdf"), default="pdf",
                           help="diagnostic hook: 'cdf' runs the corrupted "
                                "exit-time integrand")
    return parser


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_text(report):
    return json.dumps(report, indent=2) + "\n"


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        config = parse_config(source)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError(f"--seed {args.seed} is outside [0, 2^64)")
            config = replace(config, seed=args.seed)
        if args.out is not None:
            config = replace(config, output_path=args.out)
        if args.format is not None:
            config = replace(config, output_format=args.format)

        if args.command == "evaluate":
            report = cmd_evaluate(config)
            text = (_flat_csv(report["results"]) if config.output_format == "csv"
                    else _json_text(report))
            _emit(text, config.output_path)
            return EXIT_OK

        if args.command == "simulate":
            report, cycle_rows = cmd_simulate(config, workers=args.workers)
            if config.output_format == "csv":
                header = ("replication", "cycle", "boundary", "duration", "reward")
                rows = [
                    (rep, i, boundary, _fmt(duration), _fmt(reward))
                    for rep, i, boundary, duration, reward in cycle_rows
                ]
                if not config.output_path:
                    raise ConfigError("csv output for simulate needs --out for "
                                      "the cycle records")
                _emit(_csv_text(header, rows), config.output_path)
                sys.stdout.write(_json_text(report))
            else:
                _emit(_json_text(report), config.output_path)
            return EXIT_OK

        if args.command == "sign":
            report = cmd_sign(config)
            if config.output_format == "csv":
                rows = []
                for key in ("case_a", "case_b"):
                    v = dict(report["results"][key])
                    v["flags"] = ";".join(v["flags"])
                    rows.append(v)
                header = list(rows[0])
                text = _csv_text(header, [[r[k] for k in header] for r in rows])
            else:
                text = _json_text(report)
            _emit(text, config.output_path)
            return EXIT_OK

        if args.command == "sweep":
            spec = SweepSpec(args.sweep_param, args.lo, args.hi, args.steps)
            table = cmd_sweep(config, spec)
            # The sweep's native output is the CSV table; JSON rows only on
            # an explicit --format json.
            if args.format == "json":
                reader = csv.DictReader(io.StringIO(table))
                text = _json_text(_report(config, {"rows": list(reader)}))
            else:
                text = table
            _emit(text, config.output_path)
            return EXIT_OK

        if args.command == "validate":
            report = cmd_validate(
                config,
                paths=args.paths,
                renewal_cycles=args.renewal_cycles,
                grid_points=args.grid_points,
                psi_denominator=args.psi_denominator,
                moment_draws=args.moment_draws,
            )
            if config.output_format == "csv":
                header = ("name", "passed", "detail")
                rows = [(c["name"], c["passed"], c["detail"])
                        for c in report["results"]["checks"]]
                text = _csv_text(header, rows)
            else:
                text = _json_text(report)
            _emit(text, config.output_path)
            for check in report["results"]["checks"]:
                status = "PASS" if check["passed"] else "FAIL"
                print(f"{status} {check['name']}: {check['detail']}", file=sys.stderr)
            return EXIT_OK if report["results"]["all_passed"] else EXIT_VALIDATION

        raise AssertionError(f"unhandled command {args.command!r}")

    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, StepCapExceededError) as exc:
        partial = getattr(exc, "partial_report", None)
        if partial is not None:
            _emit(_json_text(partial), getattr(config, "output_path", None))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
