"""Command-line entry point: ``netslab simulate | fit | evaluate | oracle``.

Exit codes: 0 ok, 2 bad input, 3 fit finished without converging,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .design import load_dataset
from .errors import ContractError, InputError, NumericalError
from .graph import read_networks
from .simgen import (
    Estimates,
    GroundTruth,
    MetricsReport,
    SimConfig,
    aggregate_metrics,
    compute_metrics,
    estimates_from_selection,
    simulate,
    write_simulation,
)
from .tuning import default_grid, max_workers, tune_s2
from .vbem import FitOptions, Hyperparameters, StructuredModel, fit_model, result_dict

logger = logging.getLogger("netslab")

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_NUMERICAL = 0, 2, 3, 4

SIM_KEYS = {
    "n_train": int, "n_test": int, "p": int, "K": int, "rho": float, "signal_ratio": float,
    "setting": str, "noise_variance": float, "seed": int, "edge_model": str,
}
HYPER_KEYS = {"s1": float, "s2": float, "ridge": float, "a": float, "b": float, "threshold": float}


def _merged(args, config, key, default=None):
    val = getattr(args, key, None)
    if val is None:
        val = config.get(key, default)
    return val


def _load_config(path):
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True))


def _sim_config(args, config):
    kw = {k: typ(v) for k, typ in SIM_KEYS.items() if (v := _merged(args, config, k)) is not None}
    return SimConfig(**kw)


def _hyper(args, config):
    kw = {k: typ(v) for k, typ in HYPER_KEYS.items() if (v := _merged(args, config, k)) is not None}
    return Hyperparameters(**kw)


def _options(args, config):
    kw = {}
    for key, typ in (("tol", float), ("max_iter", int)):
        v = _merged(args, config, key)
        if v is not None:
            kw[key] = typ(v)
    starts = _merged(args, config, "starts")
    if isinstance(starts, str):
        try:
            starts = [tuple(part.split(":")) for part in starts.split(",") if part.strip()]
        except ValueError as exc:
            raise InputError(f"bad --starts value {starts!r}") from exc
    if starts is not None:
        try:
            kw["starts"] = tuple((float(f), int(w)) for f, w in starts)
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad --starts value {starts!r}; expected FRACTION:WARMUP,...") from exc
    kw["standardize"] = bool(_merged(args, config, "standardize", False))
    return FitOptions(**kw)


def _parse_grid(spec, s1):
    if spec is None:
        return None
    if isinstance(spec, list):
        return [float(v) for v in spec]
    if str(spec).lower() == "default":
        return default_grid(s1)
    try:
        return [float(v) for v in str(spec).split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"bad --grid value {spec!r}") from exc


# ---------------------------------------------------------------------------
# fit


def run_fit(model, hyper, options, grid=None, jobs=1):
    """Single fit, or BIC tuning over ``grid``. Returns a JSON-ready dict."""
    t0 = time.perf_counter()
    table = None
    if grid:
        s2, tg, (state, sel) = tune_s2(model, grid, hyper, options, jobs=jobs)
        hyper = dataclasses.replace(hyper, s2=s2)
        table = tg.table()
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            state, sel = fit_model(model, hyper, options)
    wall = time.perf_counter() - t0
    logger.info("fit finished in %.2f s (%d sweeps, converged=%s)", wall, state.n_sweeps, state.converged)
    out = result_dict(state, sel)
    out["hyperparameters"] = dataclasses.asdict(hyper)
    out["registry"] = model.registry.to_dict()
    out["wall_time_s"] = wall
    if model.design.standardize:
        out["standardize"] = {
            "center": dict(zip(model.registry.gene_ids, model.design.center.tolist())),
            "scale": dict(zip(model.registry.gene_ids, model.design.scale.tolist())),
        }
    if table is not None:
        out["grid"] = table
    return out, sel


def _summary_text(result):
    reg = result["registry"]["slots"]
    lines = [
        f"s2 = {result['hyperparameters']['s2']:.6g}, sweeps = {result['n_sweeps']}, converged = {result['converged']}",
        f"selected networks ({len(result['selected_networks'])}): {', '.join(result['selected_networks'])}",
        f"selected main effects ({len(result['distinct_mains'])} distinct, {len(result['selected_mains'])} slots):",
    ]
    for j in result["selected_mains"]:
        lines.append(f"  {reg[j]['network']}:{reg[j]['genes'][0]}  eta={result['eta'][j]:.3f}  m={result['m'][j]:.4f}")
    lines.append(f"selected interactions ({len(result['distinct_interactions'])} distinct, {len(result['selected_interactions'])} slots):")
    for j in result["selected_interactions"]:
        a, b = reg[j]["genes"]
        lines.append(f"  {reg[j]['network']}:{a}x{b}  eta={result['eta'][j]:.3f}  m={result['m'][j]:.4f}")
    return "\n".join(lines) + "\n"


def cmd_fit(args):
    config = _load_config(args.config)
    hyper = _hyper(args, config)
    options = _options(args, config)
    x_path = _merged(args, config, "X")
    y_path = _merged(args, config, "y")
    net_path = _merged(args, config, "networks")
    if not (x_path and y_path and net_path):
        raise InputError("fit needs --X, --y and --networks")
    dataset = load_dataset(x_path, y_path)
    networks = read_networks(net_path)
    model = StructuredModel.build(dataset, networks, ridge=hyper.ridge, standardize=options.standardize)
    grid = _parse_grid(_merged(args, config, "grid"), hyper.s1)
    if grid is not None and args.s2 is not None:
        raise InputError("give either --s2 or --grid, not both")
    result, _ = run_fit(model, hyper, options, grid, jobs=max_workers(args.jobs))
    if not _merged(args, config, "emit_elbo_trace", True):
        result["elbo_trace"] = result["elbo_trace"][-1:]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, result)
    summary = _summary_text(result)
    out.with_suffix(".summary.txt").write_text(summary)
    print(summary, end="")
    return EXIT_OK if result["converged"] else EXIT_CONVERGENCE


# ---------------------------------------------------------------------------
# evaluate


def estimates_from_result(result):
    slots = result["registry"]["slots"]
    mains, inters = {}, {}
    for j in result["selected_mains"]:
        g = slots[j]["genes"][0]
        mains[g] = mains.get(g, 0.0) + result["m"][j]
    for j in result["selected_interactions"]:
        key = tuple(sorted(slots[j]["genes"]))
        inters[key] = inters.get(key, 0.0) + result["m"][j]
    transform = None
    if "standardize" in result:
        transform = (result["standardize"]["center"], result["standardize"]["scale"])
    return Estimates(mains, inters, list(result["selected_networks"]), transform)


def _append_metrics(path, row):
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(MetricsReport.FIELDS))
        if new:
            writer.writeheader()
        writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})


def _write_aggregate(rows, out):
    agg = aggregate_metrics(rows)
    with Path(out).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_replicates"] + list(MetricsReport.FIELDS))
        writer.writerow([len(rows)] + [agg[f]["cell"] for f in MetricsReport.FIELDS])
    return agg


def cmd_evaluate(args):
    if args.aggregate:
        path = Path(args.aggregate)
        if not path.exists():
            raise InputError(f"{path} does not exist")
        with path.open() as fh:
            rows = list(csv.DictReader(fh))
        out = args.summary or str(path.with_suffix(".summary.csv"))
        agg = _write_aggregate(rows, out)
        print(" ".join(f"{f}={agg[f]['cell']}" for f in MetricsReport.FIELDS))
        return EXIT_OK
    for name in ("truth", "result", "X_test", "y_test", "metrics"):
        if getattr(args, name) is None:
            raise InputError(f"evaluate needs --{name.replace('_', '-')} (or --aggregate)")
    truth = GroundTruth.from_dict(json.loads(Path(args.truth).read_text()))
    result = json.loads(Path(args.result).read_text())
    test = load_dataset(args.X_test, args.y_test)
    known = set(result["registry"]["network_ids"])
    genes = {g for s in result["registry"]["slots"] for g in s["genes"]}
    missing = [g for g in truth.main_coef if g not in genes] + [n for n in truth.important_networks if n not in known]
    if missing:
        raise InputError(f"truth and result registries disagree, e.g. {missing[:3]}")
    report = compute_metrics(estimates_from_result(result), truth, test)
    _append_metrics(args.metrics, report.row())
    print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in report.row().items()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _replicate(task):
    """simulate -> fit (BIC-tuned) -> evaluate, all in one worker."""
    cfg, outdir, grid, hyper, options, evaluate = task
    sim = simulate(cfg)
    write_simulation(sim, outdir)
    if not evaluate:
        return None
    model = StructuredModel.build(sim.train, sim.networks, ridge=hyper.ridge, standardize=options.standardize)
    result, sel = run_fit(model, hyper, options, grid)
    _write_json(Path(outdir) / "result.json", result)
    report = compute_metrics(estimates_from_selection(sel, model.registry, model.design), sim.truth, sim.test)
    return report.row()


def cmd_simulate(args):
    config = _load_config(args.config)
    cfg = _sim_config(args, config)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise InputError(f"output directory {out} is not writable: {exc}") from exc
    reps = args.replicates or 1
    if reps == 1 and not args.evaluate:
        sim = simulate(cfg)
        write_simulation(sim, out)
        print(f"wrote {out} (n={cfg.n_train}/{cfg.n_test}, p={cfg.p}, K={cfg.K}, setting {cfg.setting})")
        return EXIT_OK
    hyper = _hyper(args, config)
    options = _options(args, config)
    grid = _parse_grid(_merged(args, config, "grid", "default"), hyper.s1)
    tasks = [
        (dataclasses.replace(cfg, seed=cfg.seed + r), out / f"rep_{r:03d}", grid, hyper, options, args.evaluate)
        for r in range(reps)
    ]
    jobs = max_workers(args.jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_replicate, tasks))
    else:
        rows = [_replicate(t) for t in tasks]
    if args.evaluate:
        metrics = out / "metrics.csv"
        if metrics.exists():
            metrics.unlink()
        for row in rows:
            _append_metrics(metrics, row)
        agg = _write_aggregate(rows, out / "metrics.summary.csv")
        print(" ".join(f"{f}={agg[f]['cell']}" for f in MetricsReport.FIELDS))
    else:
        print(f"wrote {reps} replicates under {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle (debugging aid)


def cmd_oracle(args):
    from .oracle import enumerate_posterior

    hyper = _hyper(args, {})
    dataset = load_dataset(args.X, args.y)
    networks = read_networks(args.networks)
    model = StructuredModel.build(dataset, networks, ridge=hyper.ridge)
    tau, theta = args.tau, args.theta
    if tau is None or theta is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            state, _ = fit_model(model, hyper)
        tau = state.tau if tau is None else tau
        theta = state.theta if theta is None else theta
    res = enumerate_posterior(model, hyper, tau, theta)
    print(json.dumps({
        "tau": tau, "theta": theta, "log_marginal_likelihood": res.log_marginal_likelihood,
        "inclusion": res.inclusion.tolist(), "network_inclusion": res.network_inclusion.tolist(),
    }, indent=1))
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_hyper_flags(p):
    p.add_argument("--s1", type=float)
    p.add_argument("--s2", type=float)
    p.add_argument("--ridge", type=float, help="Laplacian ridge xi")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--starts", help="fit starts as FRACTION:WARMUP pairs, e.g. 0.03:0,0.001:3")
    p.add_argument("--standardize", action="store_true", default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="netslab", description="Network-structured Bayesian selection of gene-gene interactions.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{simulate,fit,evaluate}")

    p = sub.add_parser("simulate", help="generate simulated datasets")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--signal-ratio", dest="signal_ratio", type=float)
    p.add_argument("--setting", choices=["S1", "S2", "S3", "S4"])
    p.add_argument("--noise-variance", dest="noise_variance", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--edge-model", dest="edge_model", choices=["complete", "star"])
    p.add_argument("--replicates", type=int, help="write R replicates with seeds seed..seed+R-1")
    p.add_argument("--evaluate", action="store_true", help="also fit (BIC-tuned) and score every replicate")
    p.add_argument("--grid", help="s2 grid for --evaluate: comma list or 'default'")
    p.add_argument("--jobs", type=int, default=1)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the model to CSV data")
    p.add_argument("--X")
    p.add_argument("--y")
    p.add_argument("--networks")
    p.add_argument("--out", required=True, help="result JSON path")
    p.add_argument("--config")
    p.add_argument("--grid", help="tune s2 by BIC: comma list or 'default'")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-elbo-trace", dest="emit_elbo_trace", action="store_false", default=None)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("evaluate", help="score a fit against simulation truth")
    p.add_argument("--truth")
    p.add_argument("--result")
    p.add_argument("--X-test", dest="X_test")
    p.add_argument("--y-test", dest="y_test")
    p.add_argument("--metrics", help="CSV to append a metrics row to")
    p.add_argument("--aggregate", help="metrics CSV to summarize as mean (SD)")
    p.add_argument("--summary", help="output path for --aggregate")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle")
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "oracle"]
    p.add_argument("--X", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--networks", required=True)
    p.add_argument("--tau", type=float)
    p.add_argument("--theta", type=float)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        ctx = ", ".join(f"{k}={v}" for k, v in (("slot", exc.slot), ("network", exc.network), ("term", exc.term)) if v is not None)
        print(f"numerical error: {exc}" + (f" [{ctx}]" if ctx else ""), file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, ContractError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
