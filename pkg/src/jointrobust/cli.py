"""Command-line entry point: ``generate``, ``estimate`` and ``simulate``.

Exit codes: 0 success, 1 I/O failure, 2 usage or schema error, 3 an estimator failed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .data import load_dataset, validate_dataset, write_columns, write_dataset
from .errors import JointRobustError, ParseError, SchemaError, SizeError
from .estimators import (
    FEATURE_SETS,
    estimate_aipw,
    estimate_hajek,
    estimate_ipwra,
    estimate_or,
    fit_outcome_models_or,
)
from .jre import JreConfig, estimate_jre
from .propensity import bootstrap_propensity_ensemble, clip_scores, fit_propensity, write_ensemble
from .simulation import ESTIMATORS, DgpConfig, generate_dataset, run_monte_carlo, summarize_report

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_ESTIMATOR = 0, 1, 2, 3


def _t_value(text: str) -> float:
    try:
        t = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= t <= 1.0:
        raise argparse.ArgumentTypeError(f"t must lie in [0, 1], got {text}")
    return t


def _positive_int(minimum: int):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        if v < minimum:
            raise argparse.ArgumentTypeError(f"must be at least {minimum}, got {v}")
        return v

    return parse


def _non_negative_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"must be a finite non-negative number, got {text}")
    return v


def _epsilon(text: str) -> float:
    v = _non_negative_float(text)
    if v >= 0.5:
        raise argparse.ArgumentTypeError(f"epsilon must lie in [0, 0.5), got {text}")
    return v


def _list_of(parse):
    def inner(text: str):
        return [parse(tok.strip()) for tok in text.split(",") if tok.strip()]

    return inner


def _estimator_list(text: str) -> list[str]:
    names = [tok.strip().lower() for tok in text.split(",") if tok.strip()]
    bad = [n for n in names if n not in ESTIMATORS]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown estimator(s) {bad}; choose from {','.join(ESTIMATORS)}"
        )
    return list(dict.fromkeys(names))


def _add_jre_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--b-count", type=_positive_int(1), default=1000,
                   help="bootstrap propensity worlds (default 1000)")
    p.add_argument("--lambda", dest="lam", type=_non_negative_float, default=None,
                   help="absolute anchor strength; default is relative")
    p.add_argument("--relative-lambda", type=_non_negative_float, default=1e-6,
                   help="anchor strength as a multiple of the robust normal "
                        "matrix's mean diagonal, used when --lambda is absent")
    p.add_argument("--epsilon", type=_epsilon, default=0.01, help="score clip (default 0.01)")
    p.add_argument("--features", choices=FEATURE_SETS, default="linear",
                   help="outcome feature set; 'intercept' and 'quadratic' are diagnostics")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="jointrobust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    g = sub.add_parser("generate", help="simulate one dataset")
    g.add_argument("--n", type=_positive_int(10), default=1000)
    g.add_argument("--t", type=_t_value, default=0.0, help="misspecification level in [0, 1]")
    g.add_argument("--noise-sd", type=float, default=1.0)
    g.add_argument("--seed", type=_positive_int(0), default=0)
    g.add_argument("--out-path", required=True, help="observed CSV; truth goes to <stem>.truth.csv")
    subs["generate"] = g

    e = sub.add_parser("estimate", help="estimate the ATE on a CSV dataset")
    e.add_argument("--data-path", required=True)
    e.add_argument("--estimators", type=_estimator_list, default=list(ESTIMATORS))
    _add_jre_flags(e)
    e.add_argument("--seed", type=_positive_int(0), default=0)
    e.add_argument("--format", choices=("json", "csv", "markdown"), default="json")
    e.add_argument("--out-path", default=None, help="write estimates here as JSON lines")
    e.add_argument("--ensemble-out", default=None, help="dump the bootstrap score matrix as CSV")
    subs["estimate"] = e

    s = sub.add_parser("simulate", help="run the Monte Carlo benchmark grid")
    s.add_argument("--n-list", type=_list_of(_positive_int(10)), default=[100, 300, 500, 1000])
    s.add_argument("--t-list", type=_list_of(_t_value), default=[0.0, 0.5, 1.0])
    s.add_argument("--reps", type=_positive_int(2), default=200,
                   help="replications per cell (at least 2)")
    _add_jre_flags(s)
    s.add_argument("--noise-sd", type=float, default=1.0)
    s.add_argument("--estimators", type=_estimator_list, default=list(ESTIMATORS))
    s.add_argument("--seed", type=_positive_int(0), default=42)
    s.add_argument("--format", choices=("json", "csv", "markdown"), default="csv")
    s.add_argument("--out-path", default=None)
    s.add_argument("--workers", type=_positive_int(1), default=os.cpu_count() or 1)
    subs["simulate"] = s

    for p in subs.values():
        p.add_argument("--config", default=None,
                       help="JSON file of flag defaults (keys are flag names); flags win")
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config: {exc}")
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        if "lambda" in cfg:
            cfg["lam"] = cfg.pop("lambda")
        unknown = sorted(set(cfg) - known)
        if unknown:
            parser.error(f"unknown keys in --config: {', '.join(unknown)}")
        # route config values through the flag parsers so they get the same validation
        for dest, value in cfg.items():
            action = next(a for a in sp._actions if a.dest == dest)
            if action.type is not None and not isinstance(value, bool):
                text = ",".join(map(str, value)) if isinstance(value, list) else str(value)
                try:
                    value = action.type(text)
                except argparse.ArgumentTypeError as exc:
                    parser.error(f"--config {dest}: {exc}")
            sp.set_defaults(**{dest: value})
        args = parser.parse_args(argv)
    return args


def _manifest(args: argparse.Namespace, **resolved) -> dict:
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    return {
        "command": args.command,
        "flags": flags,
        "resolved": resolved,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _emit_manifest(manifest: dict, out_path: str | None = None) -> None:
    text = json.dumps(manifest, sort_keys=True)
    print(text, file=sys.stderr)
    if out_path:
        Path(str(out_path) + ".manifest.json").write_text(text + "\n", encoding="utf-8")


def cmd_generate(args) -> int:
    if not args.noise_sd > 0:
        print("error: --noise-sd must be positive", file=sys.stderr)
        return EXIT_USAGE
    sim = generate_dataset(DgpConfig(args.n, args.t, args.noise_sd, args.seed))
    out = Path(args.out_path)
    truth = out.with_name(out.stem + ".truth.csv")
    write_dataset(sim.observed, out)
    write_columns(truth, {"y1": sim.y1, "y0": sim.y0, "true_score": sim.true_scores})
    _emit_manifest(_manifest(args, truth_path=str(truth), true_tau=sim.true_tau), str(out))
    print(f"wrote {sim.observed.n} rows to {out} (truth: {truth})")
    return EXIT_OK


def _run_estimators(data, args):
    """Yield ``(name, ATEEstimate | None, error message | None)`` per requested estimator."""
    needs_scores = set(args.estimators) & {"hajek", "ipwra", "aipw"}
    scores = score_error = None
    if needs_scores:
        try:
            scores = clip_scores(fit_propensity(data).scores, args.epsilon)
        except (JointRobustError, ValueError, ArithmeticError) as exc:
            score_error = f"propensity fit failed: {exc}"
    for name in args.estimators:
        try:
            if name != "or" and name != "jre" and scores is None:
                raise RuntimeError(score_error)
            if name == "or":
                est = estimate_or(data, args.features, scores)
            elif name == "hajek":
                est = estimate_hajek(data, scores)
            elif name == "ipwra":
                est = estimate_ipwra(data, scores, args.features)[0]
            elif name == "aipw":
                est = estimate_aipw(data, scores, fit_outcome_models_or(data, args.features))
            else:
                ens = bootstrap_propensity_ensemble(
                    data, args.b_count, args.seed, epsilon=args.epsilon
                )
                if args.ensemble_out:
                    write_ensemble(ens, args.ensemble_out)
                cfg = JreConfig(
                    anchor_strength=args.lam,
                    relative_strength=args.relative_lambda,
                    epsilon=args.epsilon,
                    b_count=args.b_count,
                    seed=args.seed,
                    features=args.features,
                )
                est = estimate_jre(data, ens, cfg)
            yield name, est, None
        except OSError:
            raise
        except (JointRobustError, ValueError, ArithmeticError, RuntimeError) as exc:
            yield name, None, f"{type(exc).__name__}: {exc}"


def _table(rows: list[dict], fmt: str) -> str:
    cols = ["estimator", "tau_hat", "bias_treated", "bias_control", "error"]
    if fmt == "csv":
        lines = [",".join(cols)]
        for r in rows:
            lines.append(",".join("" if r.get(c) is None else str(r.get(c)) for c in cols))
        return "\n".join(lines)
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c)
            cells.append("" if v is None else (f"{v:.6f}" if isinstance(v, float) else str(v)))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def cmd_estimate(args) -> int:
    try:
        data = load_dataset(args.data_path)
    except (SchemaError, ParseError, SizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = validate_dataset(data)
    for issue in report.issues:
        print(f"warning: dataset check {issue}", file=sys.stderr)

    rows, failed = [], False
    for name, est, err in _run_estimators(data, args):
        if est is None:
            failed = True
            rows.append({"estimator": name, "error": err})
            print(f"error: {name}: {err}", file=sys.stderr)
        else:
            rows.append(est.to_dict())
    lines = [json.dumps(r, sort_keys=True) for r in rows]
    if args.format == "json":
        print("\n".join(lines))
    else:
        print(_table(rows, args.format))
    if args.out_path:
        Path(args.out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    resolved = {"n": data.n, "d": data.d, "issues": list(report.issues)}
    _emit_manifest(_manifest(args, **resolved), args.out_path)
    return EXIT_ESTIMATOR if failed else EXIT_OK


def cmd_simulate(args) -> int:
    if not args.noise_sd > 0:
        print("error: --noise-sd must be positive", file=sys.stderr)
        return EXIT_USAGE
    jre = JreConfig(
        anchor_strength=args.lam,
        relative_strength=args.relative_lambda,
        epsilon=args.epsilon,
        b_count=args.b_count,
        seed=args.seed,
        features=args.features,
    )
    report = run_monte_carlo(
        args.n_list,
        args.t_list,
        args.reps,
        args.b_count,
        jre,
        base_seed=args.seed,
        estimators=args.estimators,
        noise_sd=args.noise_sd,
        features=args.features,
        workers=args.workers,
    )
    if args.out_path:
        Path(args.out_path).write_text(summarize_report(report, args.format), encoding="utf-8")
        Path(str(args.out_path) + ".provenance.json").write_text(
            json.dumps(report.provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(summarize_report(report, "markdown"), end="")
    failures = sum(s.failures for c in report.cells for s in c.stats.values())
    _emit_manifest(_manifest(args, failures=failures, cells=len(report.cells)), args.out_path)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "estimate": cmd_estimate, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
