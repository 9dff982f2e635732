"""Command-line entry point: ``gs4d {catalog,eval,optimize,reach,simulate,calibrate}``.

Exit codes: 0 success, 2 input error, 3 budget or feasibility limit,
1 internal error.
"""

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import CATALOG_NAMES, build_catalog_format
from .config import load_config
from .constellation import moments
from .errors import Gs4dError, InputError
from .gmi import gmi_gh, gmi_mc, gauss_hermite_rule, sigma_from_snr_db, snr_for_target_gmi
from .io import constellation_to_csv, load_constellation
from .link import NliSurrogateParams, calibrate_surrogate, max_reach
from .optimize import OptimizerConfig, label_swap_search, optimize_awgn, optimize_model
from .ssfm import measure_snr_opt, run_transmission


def fmt(x):
    """Round-trip decimal text for CSV cells."""
    if isinstance(x, (int, np.integer, str)):
        return str(x)
    return repr(float(x))


def csv_text(header, rows):
    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def resolve_format(spec):
    """A constellation file path, or else a catalog name."""
    path = Path(spec)
    if path.is_file():
        return load_constellation(path)
    return build_catalog_format(spec)


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Output:
    """Collects the main output; writes it plus a manifest sidecar when ``--out`` is set."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.t0 = time.perf_counter()
        self.inputs = {}
        self.config = {}

    def add_input(self, spec):
        if Path(spec).is_file():
            self.inputs[str(spec)] = file_digest(spec)

    def emit(self, text, path=None):
        path = path or self.args.out
        if path is None:
            sys.stdout.write(text)
            return
        Path(path).write_text(text)
        manifest = {
            "command": self.command,
            "argv": [a for a in sys.argv[1:]],
            "config": self.config,
            "inputs": self.inputs,
            "seed": self.args.seed,
            "version": __version__,
            "output_sha256": hashlib.sha256(text.encode()).hexdigest(),
            "wall_time_s": time.perf_counter() - self.t0,
        }
        Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _run_config(args):
    return load_config(args.config)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def cmd_catalog(args):
    out = Output(args, "catalog")
    if args.name:
        c = build_catalog_format(args.name)
        out.emit(constellation_to_csv(c))
        return 0
    rows = []
    for name in CATALOG_NAMES:
        c = build_catalog_format(name)
        mom = moments(c)
        rows.append((name, c.bits, c.n_points, mom.kurt_excess, mom.cross4, c.min_distance() ** 2))
    header = ("format", "m", "M", "kurt_excess", "cross4", "dmin2")
    if args.json:
        out.emit(json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n")
    else:
        out.emit(csv_text(header, rows))
    return 0


def cmd_eval(args):
    out = Output(args, "eval")
    out.add_input(args.format)
    c = resolve_format(args.format)
    rule = gauss_hermite_rule(args.order)
    seed = 0 if args.seed is None else args.seed
    if args.target_ngmi is not None:
        snr = snr_for_target_gmi(c, args.target_ngmi * c.bits, rule)
        snrs = [snr]
    else:
        snrs = args.snr_db or [10.0]
    rows = []
    for snr in snrs:
        sigma = float(sigma_from_snr_db(snr))
        if args.method == "mc":
            g = gmi_mc(c, sigma, n=args.mc_samples, seed=seed)
        else:
            g = gmi_gh(c, sigma, rule)
        rows.append((snr, g.value, g.value / c.bits, g.std_err))
    header = ("snr_db", "gmi", "ngmi", "std_err")
    if args.json:
        out.emit(json.dumps({"format": c.name, "m": c.bits, "method": args.method,
                             "rows": [dict(zip(header, r)) for r in rows]}, indent=2) + "\n")
    else:
        out.emit(csv_text(header, rows))
    return 0


def cmd_optimize(args):
    out = Output(args, "optimize")
    run = _run_config(args)
    objective = args.objective
    cfg = OptimizerConfig(
        m=args.m,
        constraint=args.constraint,
        objective=objective,
        snr_db=args.snr_db,
        link=run.link.with_spans(args.spans) if args.spans else run.link,
        nli=_nli_params(args, run) if objective == "model" else None,
        restarts=args.restarts,
        max_iters=args.max_iters,
        step_init=args.step_init,
        conv_tol=args.conv_tol,
        seed=0 if args.seed is None else args.seed,
        quad_order=args.order,
    )
    if objective == "model":
        best, trace = optimize_model(cfg)
    else:
        best, trace = optimize_awgn(cfg)
    final_value = trace.history[-1]
    if args.label_search:
        sigma = float(sigma_from_snr_db(trace.snr_db))
        best = label_swap_search(best, sigma, gauss_hermite_rule(args.order), seed=cfg.seed)
        final_value = gmi_gh(best, sigma, gauss_hermite_rule(args.order)).value
    record = trace.to_dict()
    record["label_search"] = bool(args.label_search)
    record["final_gmi"] = final_value
    out.config = {"optimizer": record["config"], "link": run.snapshot()}
    text = constellation_to_csv(best)
    trace_text = json.dumps(record, indent=2, default=_json_default) + "\n"
    if args.out:
        out.emit(text)
        trace_path = args.trace or str(args.out) + ".trace.json"
        Path(trace_path).write_text(trace_text)
        print(f"final objective {final_value!r} bit/4D at {trace.snr_db!r} dB "
              f"(restart {trace.best_restart})")
    else:
        out.emit(trace_text if args.json else text)
        print(f"final objective {final_value!r} bit/4D", file=sys.stderr)
    return 0


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


def _nli_params(args, run):
    if getattr(args, "params", None):
        return NliSurrogateParams.load(args.params)
    return run.nli_params()


def cmd_reach(args):
    out = Output(args, "reach")
    run = _run_config(args)
    params = _nli_params(args, run)
    if args.params:
        out.add_input(args.params)
    out.config = {"link": run.snapshot(), "nli": params.to_dict()}
    rule = gauss_hermite_rule(args.order)
    rows, results = [], []
    for spec in args.formats:
        out.add_input(spec)
        c = resolve_format(spec)
        r = max_reach(c, run.link, params, rule, threshold_ngmi=args.threshold)
        rows.append((c.name, c.bits, r.n_spans, r.distance_km, r.snr_opt_db, r.gmi_at_reach,
                     r.gmi_at_reach / c.bits))
        results.append((c, r))
    header = ("format", "m", "n_spans", "distance_km", "snr_opt_db", "gmi", "ngmi")
    if args.json:
        out.emit(json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n")
    else:
        out.emit(csv_text(header, rows))
    for i, (ca, ra) in enumerate(results):
        for cb, rb in results[i + 1:]:
            if ca.bits == cb.bits:
                delta = 100.0 * (ra.distance_km - rb.distance_km) / rb.distance_km
                print(f"reach {ca.name} vs {cb.name}: {delta:+.2f}%", file=sys.stderr)
    return 0


def _sim_config(args, run):
    cfg = run.sim_config(
        seed=args.seed,
        step_m=args.step_m,
        n_symbols=args.n_symbols,
        nonlinearity_on=not args.no_nonlinearity,
        ase_on=not args.no_ase,
    )
    cfg.check_budget()
    return cfg


def cmd_simulate(args):
    out = Output(args, "simulate")
    run = _run_config(args)
    cfg = _sim_config(args, run)
    out.config = {"link": run.snapshot(), "nonlinearity_on": cfg.nonlinearity_on, "ase_on": cfg.ase_on}
    out.add_input(args.format)
    c = resolve_format(args.format)
    launches = args.launch_dbm or [cfg.launch_dbm]
    rows = []
    for p in launches:
        r = run_transmission(c, cfg.with_launch(p))
        rows.append((c.name, p, run.link.distance_km, r.eff_snr_db, r.gmi))
    header = ("format", "launch_dbm", "distance_km", "eff_snr_db", "gmi")
    if args.json:
        out.emit(json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n")
    else:
        out.emit(csv_text(header, rows))
    return 0


def cmd_calibrate(args):
    out = Output(args, "calibrate")
    run = _run_config(args)
    cfg = _sim_config(args, run)
    out.config = {"link": run.snapshot()}
    launches = args.launch_dbm or list(np.arange(-4.0, 10.0, 2.0))
    measurements, table = [], []
    for spec in args.formats:
        out.add_input(spec)
        c = resolve_format(spec)
        meas = measure_snr_opt(c, cfg, launches)
        measurements.append((c, meas.snr_opt_db))
        table.append({"format": c.name, "snr_opt_db": meas.snr_opt_db, "p_opt_dbm": meas.p_opt_dbm,
                      "launch_dbm": list(meas.launch_dbm), "eff_snr_db": list(meas.eff_snr_db)})
    params, resid = calibrate_surrogate(measurements, run.link, epsilon=args.epsilon)
    record = {
        "params": params.to_dict(),
        "residuals_db": {c.name: float(r) for (c, _), r in zip(measurements, resid)},
        "measurements": table,
    }
    out.emit(json.dumps(record, indent=2) + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="gs4d", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gs4d {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value link/simulation config file")
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--out", help="write the main output here (plus a .manifest.json)")
    common.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catalog", parents=[common], help="list catalog formats or export one")
    p.add_argument("name", nargs="?", help="export this format as constellation CSV")
    p.set_defaults(func=cmd_catalog)

    p = sub.add_parser("eval", parents=[common], help="GMI of a format versus SNR")
    p.add_argument("format", help="catalog name or constellation file")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--snr-db", type=_float_list, help="comma-separated SNR list (dB)")
    g.add_argument("--target-ngmi", type=float, help="find the SNR reaching this normalized GMI")
    p.add_argument("--method", choices=("gh", "mc"), default="gh")
    p.add_argument("--mc-samples", type=int, default=10**6)
    p.add_argument("--order", type=int, default=10, help="Gauss-Hermite order J")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("optimize", parents=[common], help="geometric shaping")
    p.add_argument("--m", type=int, required=True, help="bits per 4D symbol")
    p.add_argument("--constraint", choices=("none", "os", "cm"), default="none")
    p.add_argument("--objective", choices=("awgn", "model"), default="awgn")
    p.add_argument("--snr-db", type=float, help="AWGN SNR (default: 0.85m point of best catalog format)")
    p.add_argument("--spans", type=int, help="span count for the model objective")
    p.add_argument("--params", help="surrogate parameter JSON (from calibrate)")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-iters", type=int, default=300)
    p.add_argument("--step-init", type=float, default=0.05)
    p.add_argument("--conv-tol", type=float, default=1e-5)
    p.add_argument("--order", type=int, default=10)
    p.add_argument("--label-search", action="store_true", help="greedy label-swap post-pass")
    p.add_argument("--trace", help="trace JSON path (default <out>.trace.json)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("reach", parents=[common], help="maximum reach at the GMI threshold")
    p.add_argument("formats", nargs="+")
    p.add_argument("--params", help="surrogate parameter JSON (from calibrate)")
    p.add_argument("--threshold", type=float, default=0.85, help="normalized GMI threshold")
    p.add_argument("--order", type=int, default=10)
    p.set_defaults(func=cmd_reach)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "SSFM transmission"),
        ("calibrate", cmd_calibrate, "fit the NLI surrogate to SSFM launch sweeps"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        if name == "simulate":
            p.add_argument("format")
        else:
            p.add_argument("formats", nargs="+")
            p.add_argument("--epsilon", type=float, default=0.0)
        p.add_argument("--launch-dbm", type=_float_list, help="comma-separated launch powers")
        p.add_argument("--step-m", type=float)
        p.add_argument("--n-symbols", type=int)
        p.add_argument("--no-nonlinearity", action="store_true")
        p.add_argument("--no-ase", action="store_true")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Gs4dError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputError.exit_code
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
