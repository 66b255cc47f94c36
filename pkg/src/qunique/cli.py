"""Command-line front end: ``qunique analyze|simulate|certify|parse-check|scan-c``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    METHODS,
    AnalysisConfig,
    default_certificate_cap,
    load_config_model,
    run_analysis,
    safe_cap,
)
from .certificates import check_certificate, load_certificate, scan_drift_constant
from .dsl import compile_state_function, parse_certificate, parse_expression, parse_model
from .errors import DSLSyntaxError, ModelDefinitionError, QUniqueError, UsageError
from .resolvent import write_trace_csv
from .simulate import DEFAULT_EPSILON, DEFAULT_MAX_JUMPS, simulate_path, uniqueness_verdict_simulation, write_path_csv
from .verdict import _jsonable

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("qunique")


def _param(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _caps(text):
    try:
        caps = tuple(int(c) for c in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"cap schedule must be integers, got {text!r}") from None
    if not caps:
        raise argparse.ArgumentTypeError("empty cap schedule")
    return caps


def _add_model_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="path to a .qm model file")
    src.add_argument("--zoo", help="name of a built-in model")
    p.add_argument("--param", action="append", type=_param, default=[], metavar="K=V",
                   help="override a model parameter (repeatable)")


def _add_output_args(p):
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qunique", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run several methods and reconcile a verdict")
    _add_model_args(a)
    a.add_argument("--method", action="append", choices=METHODS, help="method to run (repeatable)")
    a.add_argument("--lambda", dest="lambdas", action="append", type=float, help="lambda (repeatable)")
    a.add_argument("--cap-schedule", type=_caps, help="level caps, e.g. 25,50,100")
    a.add_argument("--trials", type=int, default=200)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--t-max", type=float, default=1.0)
    a.add_argument("--max-jumps", type=int, default=DEFAULT_MAX_JUMPS)
    a.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    a.add_argument("--cert", help="certificate sidecar file")
    a.add_argument("--phi", help="test function for lyapunov/corollary, e.g. '1 + level'")
    a.add_argument("--cert-cap", type=int, help="level cap for certificate checks")
    a.add_argument("--trace-dir", help="write per-method CSV traces into this directory")
    a.add_argument("--parallel", action="store_true", help="run methods concurrently")
    a.add_argument("--no-timestamp", action="store_true", help="omit the timestamp (byte-stable reports)")
    _add_output_args(a)

    s = sub.add_parser("simulate", help="Monte Carlo explosion estimate")
    _add_model_args(s)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--t-max", type=float, default=1.0)
    s.add_argument("--max-jumps", type=int, default=DEFAULT_MAX_JUMPS)
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--initial", type=_caps, help="initial state coordinates (default: origin)")
    s.add_argument("--path-csv", help="dump the first trial's path as CSV")
    _add_output_args(s)

    c = sub.add_parser("certify", help="check a certificate sidecar file")
    _add_model_args(c)
    c.add_argument("--cert", required=True)
    c.add_argument("--cap", type=int, help="level cap (default: largest window of the certificate)")
    _add_output_args(c)

    pc = sub.add_parser("parse-check", help="parse .qm or certificate files")
    pc.add_argument("files", nargs="+")
    pc.add_argument("--cert", action="store_true", help="treat the files as certificates")

    sc = sub.add_parser("scan-c", help="tightest drift constant for phi on a window")
    _add_model_args(sc)
    sc.add_argument("--phi", default="1 + level")
    sc.add_argument("--cap", type=int)
    _add_output_args(sc)
    return parser


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _config(args, methods) -> AnalysisConfig:
    return AnalysisConfig(
        model_path=args.model, zoo=args.zoo, params=tuple(args.param), methods=tuple(methods),
        lambdas=tuple(getattr(args, "lambdas", None) or (1.0,)),
        cap_schedule=getattr(args, "cap_schedule", None), trials=args.trials, seed=args.seed,
        t_max=args.t_max, max_jumps=args.max_jumps, epsilon=args.epsilon,
        cert_path=getattr(args, "cert", None), phi=getattr(args, "phi", None),
        cert_cap=getattr(args, "cert_cap", None), parallel=getattr(args, "parallel", False))


def _cmd_analyze(args) -> int:
    cfg = _config(args, args.method or ("resolvent", "embedded"))
    result = run_analysis(cfg, timestamp=not args.no_timestamp)
    if args.trace_dir:
        d = Path(args.trace_dir)
        d.mkdir(parents=True, exist_ok=True)
        for m in result.methods:
            if "trace" in m.evidence or "per_lambda" in m.evidence:
                write_trace_csv(d / f"{m.method}_trace.csv", m)
    _emit(result.to_json() if args.format == "json" else result.to_text(), args.out)
    failed = [m for m in result.methods if m.error]
    if failed and len(failed) == len(result.methods):
        kinds = {m.evidence.get("error_kind") for m in failed}
        return EXIT_MODEL if kinds == {"model-definition"} else EXIT_NUMERIC
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _config(args, ("simulate",))
    model = load_config_model(cfg)
    initial = args.initial or (0,) * model.dimension
    verdict = uniqueness_verdict_simulation(model, initial, args.t_max, args.trials, args.seed,
                                            args.epsilon, args.max_jumps)
    if args.path_csv:
        write_path_csv(args.path_csv, simulate_path(model, initial, args.seed, args.t_max, args.max_jumps))
    if args.format == "json":
        text = json.dumps(verdict.to_dict(), indent=2, sort_keys=True) + "\n"
    else:
        e = verdict.evidence
        lo, hi = e["wilson_95"]
        text = (f"model      {model.name}\n"
                f"flagged    {e['flagged']} / {e['trials']}  (fraction {e['fraction']:.4f}, "
                f"95% Wilson [{lo:.4f}, {hi:.4f}])\n"
                f"terminals  {e['terminals']}\n"
                f"verdict    {verdict.label.value}: {e['reason']}\n")
    _emit(text, args.out)
    return EXIT_OK


def _cmd_certify(args) -> int:
    cfg = _config(_with_defaults(args), ("lyapunov",))
    model = load_config_model(cfg)
    cert = load_certificate(args.cert, model)
    cap = args.cap
    if cap is None:
        cap = cert.window_family[-1] if cert.window_family else default_certificate_cap(model.dimension)
    report = check_certificate(model, cert, cap)
    doc = _jsonable(dict(report.to_dict(), model=model.name, certificate=cert.name, phi=cert.expression))
    if args.format == "json":
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        lines = [f"certificate {cert.name} ({report.kind.value}) on {model.name}, level <= {cap}",
                 f"verdict     {report.verdict.value}",
                 f"checked     {report.checked_states} states, {len(report.violations)} violations"]
        if report.growth_trace:
            lines.append(f"growth      {report.growth_trace}")
        for v in report.violations[:10]:
            lines.append(f"  {v.condition:<14} state {v.state}: {v.lhs:.6g} vs {v.rhs:.6g}")
        lines += [f"note        {n}" for n in report.notes]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def _cmd_parse_check(args) -> int:
    status = EXIT_OK
    for name in args.files:
        try:
            text = Path(name).read_text(encoding="utf-8")
        except OSError as exc:
            print(f"{name}: cannot read: {exc}", file=sys.stderr)
            status = max(status, EXIT_USAGE)
            continue
        try:
            if args.cert:
                spec = parse_certificate(text)
                print(f"{name}: ok (certificate {spec.name}, kind {spec.kind})")
            else:
                spec = parse_model(text)
                print(f"{name}: ok (model {spec.name}, dim {spec.dimension}, "
                      f"{len(spec.families)} families)")
        except DSLSyntaxError as exc:
            print(f"{name}: {exc}", file=sys.stderr)
            status = EXIT_MODEL
    return status


def _cmd_scan_c(args) -> int:
    cfg = _config(_with_defaults(args), ("lyapunov",))
    model = load_config_model(cfg)
    cap = safe_cap(model, args.cap if args.cap is not None else default_certificate_cap(model.dimension))
    params = model.params or {}
    phi = compile_state_function(parse_expression(args.phi, params), model.dimension, params)
    c = scan_drift_constant(model, phi, cap)
    if args.format == "json":
        text = json.dumps({"model": model.name, "phi": args.phi, "level_cap": cap, "c": c},
                          sort_keys=True) + "\n"
    else:
        text = f"c = {c!r}  (phi = {args.phi}, level <= {cap})\n" if c is not None else \
            f"no finite c: phi vanishes where its drift is positive (level <= {cap})\n"
    _emit(text, args.out)
    return EXIT_OK


def _with_defaults(args):
    for key, value in (("trials", 1), ("seed", 0), ("t_max", 1.0), ("max_jumps", 1),
                       ("epsilon", DEFAULT_EPSILON)):
        if not hasattr(args, key):
            setattr(args, key, value)
    return args


_COMMANDS = {"analyze": _cmd_analyze, "simulate": _cmd_simulate, "certify": _cmd_certify,
             "parse-check": _cmd_parse_check, "scan-c": _cmd_scan_c}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command not in ("parse-check",):
        _with_defaults(args)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelDefinitionError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except QUniqueError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
