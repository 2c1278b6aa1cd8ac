"""Command-line entry points.

Exit codes: 0 pass, 2 verdict failure, 3 invalid input, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from . import checkpoint
from . import norms as nm
from .analysis import CSV_SCHEMA, error_scaling_sweep, run_single
from .config import ConfigError, ExperimentConfig, load_config, with_overrides
from .profiles import parse_eps, build_quasi2d_datum, default_data, default_tensor_profile, sizedata_ratio
from .properties import FAULTS, SUITES, run_suite
from .solvers import NumericalAbort

EXIT_OK, EXIT_VERDICT, EXIT_INVALID, EXIT_ABORT = 0, 2, 3, 4
LARGENESS_BOUND = 0.25
STABILIZATION_TOL = 0.05
STABLE_BELOW = 1 / 16


def _header(cfg: ExperimentConfig, schema: str) -> str:
    return f"# schema: {schema}\n# config: {cfg.sweep.digest()}\n# seed: {cfg.seed}\n"


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return with_overrides(cfg, seed=args.seed, workers=getattr(args, "workers", None), out=args.out)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    report = error_scaling_sweep(cfg.sweep, progress=lambda e: print(f"finished eps={e:g}", file=sys.stderr))
    out = _out_dir(cfg)
    (out / "sweep.csv").write_text(report.to_csv())
    extra = {"refined": report.refined, "box": report.box}
    for name, rep in extra.items():
        if rep is not None:
            (out / f"sweep_{name}.csv").write_text(rep.to_csv())
    summary = report.summary()
    (out / "summary.txt").write_text(summary + "\n")
    print(summary)
    if not report.complete:
        return EXIT_ABORT
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_properties(args) -> int:
    cfg = _load(args)
    suite = args.suite or cfg.corpus.suite
    n = cfg.corpus.n_samples if args.n_samples is None else args.n_samples
    fault = args.fault if args.fault is not None else (cfg.corpus.fault or None)
    seed = cfg.seed
    try:
        rep = run_suite(suite, seed, n, fault)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    text = rep.table()
    print(text)
    if args.out:
        (_out_dir(cfg) / f"properties_{suite}.txt").write_text(_header(cfg, "quasi2d-properties/1") + text + "\n")
    if not rep.passed:
        for name in rep.violations:
            print(f"violated invariant: {name}", file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


def largeness_table(cfg: ExperimentConfig) -> list[tuple[float, float]]:
    lc = cfg.largeness
    grid = lc.grid()
    return [(e, sizedata_ratio(default_tensor_profile(grid, e, cfg.sweep.profile))) for e in lc.eps_list]


def cmd_largeness(args) -> int:
    cfg = _load(args)
    try:
        rows = largeness_table(cfg)
    except ValueError as exc:
        raise ConfigError(f"[largeness] {exc}") from None
    buf = io.StringIO()
    buf.write(_header(cfg, "quasi2d-largeness/1"))
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["eps", "ratio", "at_least_quarter", "change_from_previous"])
    ok = True
    prev = None
    for e, r in rows:
        change = "" if prev is None else repr(abs(r - prev[1]))
        # the verdict concerns the small-eps regime: eps <= 1/16 and halvings from there
        if e <= STABLE_BELOW:
            ok &= r >= LARGENESS_BOUND
            if prev is not None and prev[0] <= STABLE_BELOW:
                ok &= abs(r - prev[1]) < STABILIZATION_TOL
        wr.writerow([repr(e), repr(r), r >= LARGENESS_BOUND, change])
        prev = (e, r)
    text = buf.getvalue()
    print(text, end="")
    print(f"{'PASS' if ok else 'FAIL'} ratio >= {LARGENESS_BOUND} and stabilization < {STABILIZATION_TOL}")
    if args.out:
        (_out_dir(cfg) / "largeness.csv").write_text(text)
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_solve(args) -> int:
    cfg = _load(args)
    eps = args.eps
    sw = cfg.sweep
    data = default_data(sw.base_grid(), sw.tall_grid(eps), eps, sw.profile)
    out = _out_dir(cfg)
    checkpoint.save_field(out / "datum.q2d", build_quasi2d_datum(data), eps=eps, config=sw.digest(), seed=sw.seed)
    res = run_single(sw, eps)
    buf = io.StringIO()
    buf.write(_header(cfg, CSV_SCHEMA))
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["eps", "norm", "value", "slope_group"])
    for k in sorted(res.values):
        wr.writerow([repr(eps), k, repr(float(res.values[k])), ""])
    (out / "solve.csv").write_text(buf.getvalue())
    print(buf.getvalue(), end="")
    if res.error:
        print(res.error, file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


DEFAULT_NORMS = (("Hs", 0.5), ("Hs", -0.5), ("L2", 0.0), ("Linf", 0.0), ("LinfvL2h", 0.0),
                 ("L2vHsh", 0.5), ("L2h_Hsv", 0.5), ("weighted_x3_L2", 0.0))


def _parse_norm(text: str) -> tuple[str, float]:
    kind, _, s = text.partition(":")
    if kind not in nm.KINDS:
        raise ConfigError(f"--kind {text}: unknown norm; expected one of {nm.KINDS}")
    try:
        return kind, float(s) if s else 0.0
    except ValueError:
        raise ConfigError(f"--kind {text}: bad exponent") from None


def cmd_norms(args) -> int:
    try:
        obj = checkpoint.load(args.field)
    except (OSError, checkpoint.CheckpointError) as exc:
        raise ConfigError(f"--field: {exc}") from None
    specs = [_parse_norm(k) for k in args.kind] if args.kind else list(DEFAULT_NORMS)
    if isinstance(obj, checkpoint.Trajectory):
        samples = [(float(t), obj.state(i)) for i, t in enumerate(obj.times)]
    else:
        samples = [(0.0, obj)]
    buf = io.StringIO()
    buf.write("# schema: quasi2d-norms/1\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["time", "kind", "s", "value"])
    for t, f in samples:
        for kind, s in specs:
            try:
                val = nm.aniso_norm(f, nm.NormSpec(kind, s))
            except ValueError as exc:
                raise ConfigError(f"--kind {kind}:{s}: {exc}") from None
            wr.writerow([repr(t), kind, repr(s), repr(float(val))])
    print(buf.getvalue(), end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "norms.csv").write_text(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasi2d", description="Quasi-2D perturbation laboratory for 3D Navier-Stokes.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, workers=False):
        sp.add_argument("--config", help="configuration file")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", help="output directory")
        if workers:
            sp.add_argument("--workers", type=int, help="worker processes for sweep members")

    sp = sub.add_parser("sweep", help="run the eps sweep and write the report")
    common(sp, workers=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("properties", help="run an invariant suite on a seeded corpus")
    common(sp, workers=True)
    sp.add_argument("--suite", choices=SUITES)
    sp.add_argument("--n-samples", type=int)
    sp.add_argument("--fault", choices=FAULTS, help="inject a known defect (negative control)")
    sp.set_defaults(func=cmd_properties)

    sp = sub.add_parser("largeness", help="Besov largeness ratio of the tensor profiles")
    common(sp)
    sp.set_defaults(func=cmd_largeness)

    sp = sub.add_parser("solve", help="run the pipeline for one eps")
    common(sp, workers=True)
    sp.add_argument("--eps", type=parse_eps, required=True)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("norms", help="evaluate norms of a stored field or trajectory")
    sp.add_argument("--field", required=True, help="checkpoint file")
    sp.add_argument("--kind", action="append", help="norm as KIND or KIND:s (repeatable)")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_norms)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
