"""Command-line interface: ``dnsspp {simulate,fit,predict,evaluate,benchmark}``.

Settings resolve as flags > ``--config`` JSON file > defaults, and every
command writes ``manifest.json`` with the fully resolved settings.

Exit status: 0 success, 1 runtime or numerical failure, 2 usage error.
"""

import argparse
import csv
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .benchmark import DEFAULT_CONFIGS, format_table, run_benchmark, summarize
from .errors import DNSSPPError
from .metrics import IntensityGrid, expected_test_loglik, intensity_grid, rmse
from .simulation import write_dataset
from .training import FitConfig, FittedModel, fit
from .window import Window, load_events

log = logging.getLogger("dnsspp")

DEFAULTS = {
    "simulate": {"kind": "stationary", "seeds": 10, "truth_seed": 0, "out_dir": "data"},
    "fit": {"events": None, "window": None, "layers": [50], "tie": False, "epochs": 100,
            "lr": 1e-2, "tol": 1e-8, "max_iter": 100, "order": None, "seed": 0,
            "alpha_init": 1.0, "grad_mode": "frozen", "out_dir": "fit"},
    "predict": {"model": None, "resolution": 1000, "out_dir": "predict"},
    "evaluate": {"model": None, "events": None, "truth": None, "out_dir": "evaluate"},
    "benchmark": {"kinds": ["stationary", "nonstationary"], "configs": list(DEFAULT_CONFIGS),
                  "seeds": 10, "truth_seed": 0, "epochs": 100, "lr": 1e-2, "seed": 0,
                  "dry_run": False, "workers": 1, "out_dir": "benchmark"},
}


class UsageError(Exception):
    pass


def _layers(text):
    try:
        widths = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid layer spec {text!r}")
    if not widths or min(widths) < 1:
        raise argparse.ArgumentTypeError(f"layer widths must be positive integers: {text!r}")
    return widths


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="dnsspp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir", dest="out_dir", type=Path)

    s = sub.add_parser("simulate", help="write synthetic event sets and truth grids")
    common(s)
    s.add_argument("--kind", choices=["stationary", "nonstationary"])
    s.add_argument("--seeds", type=int, help="number of datasets")
    s.add_argument("--truth-seed", dest="truth_seed", type=int)

    f = sub.add_parser("fit", help="fit a model to an event file")
    common(f)
    f.add_argument("--events", type=Path)
    f.add_argument("--window", type=json.loads, help='e.g. "[[0,10]]"')
    f.add_argument("--layers", type=_layers, help="comma-separated widths, e.g. 50,30")
    f.add_argument("--tie", action="store_true", default=None,
                   help="tie both frequency sets (stationary layers)")
    f.add_argument("--epochs", type=int)
    f.add_argument("--lr", type=float)
    f.add_argument("--tol", type=float)
    f.add_argument("--max-iter", dest="max_iter", type=int)
    f.add_argument("--order", type=int, help="quadrature nodes per dimension")
    f.add_argument("--alpha-init", dest="alpha_init", type=float)
    f.add_argument("--grad-mode", dest="grad_mode", choices=["frozen", "finite_difference"])

    pr = sub.add_parser("predict", help="intensity mean/variance on a grid")
    common(pr)
    pr.add_argument("--model", type=Path)
    pr.add_argument("--resolution", type=int)

    e = sub.add_parser("evaluate", help="expected test log-likelihood and RMSE")
    common(e)
    e.add_argument("--model", type=Path)
    e.add_argument("--events", type=Path, help="test events CSV")
    e.add_argument("--truth", type=Path, help="truth grid CSV (enables RMSE)")

    b = sub.add_parser("benchmark", help="synthetic benchmark table")
    common(b)
    b.add_argument("--kinds", type=_csv_list)
    b.add_argument("--configs", type=_csv_list, help=f"subset of {list(DEFAULT_CONFIGS)}")
    b.add_argument("--seeds", type=int)
    b.add_argument("--truth-seed", dest="truth_seed", type=int)
    b.add_argument("--epochs", type=int)
    b.add_argument("--lr", type=float)
    b.add_argument("--dry-run", dest="dry_run", action="store_true", default=None,
                   help="one training seed, NSSPP only")
    b.add_argument("--workers", type=int)
    return p


def resolve(args):
    settings = dict(DEFAULTS[args.command])
    if args.config is not None:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(settings)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        settings.update(file_cfg)
    for key in settings:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    for key in ("out_dir", "events", "model", "truth"):
        if settings.get(key) is not None:
            settings[key] = str(settings[key])
    return settings


def _versions():
    return {"dnsspp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out_dir, command, settings, extra=None):
    doc = {"command": command, "settings": settings, "versions": _versions()}
    if extra:
        doc.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))


def _require(settings, *keys):
    missing = [k for k in keys if settings.get(k) is None]
    if missing:
        raise UsageError(f"missing required setting(s): {', '.join(missing)}")


def cmd_simulate(s):
    out = Path(s["out_dir"])
    manifest = write_dataset(out, s["kind"], range(int(s["seeds"])), s["truth_seed"])
    write_manifest(out, "simulate", s, manifest)
    return manifest


def cmd_fit(s):
    _require(s, "events", "window")
    if isinstance(s["layers"], str):
        s["layers"] = _layers(s["layers"])
    try:
        config = FitConfig(layers=s["layers"], tie=s["tie"], epochs=s["epochs"], lr=s["lr"],
                           tol=s["tol"], max_iter=s["max_iter"], order=s["order"],
                           seed=s["seed"], alpha_init=s["alpha_init"],
                           grad_mode=s["grad_mode"])
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    window = Window.from_list(s["window"])
    events = load_events(s["events"], window)
    out = Path(s["out_dir"])
    model = fit(events, config,
                callback=lambda ep, v: log.info("epoch %d log-marginal %.6f", ep, v))
    model.save(out / "model.json")
    with (out / "trace.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "log_marginal"])
        for i, v in enumerate(model.trace):
            w.writerow([i, repr(float(v))])
    write_manifest(out, "fit", s, {"n_events": events.n, "best_epoch": model.best_epoch,
                                   "log_marginal": model.log_marginal})
    return model


def cmd_predict(s):
    _require(s, "model")
    model = FittedModel.load(s["model"])
    grid = intensity_grid(model, s["resolution"])
    out = Path(s["out_dir"])
    grid.to_csv(out / "grid.csv")
    grid.to_json(out / "grid.json")
    write_manifest(out, "predict", s)
    return grid


def load_truth_grid(path):
    """Truth CSV (``x..., f, intensity``) or an IntensityGrid CSV (``x..., mean, variance``)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    body = np.array(rows[1:], dtype=np.float64)
    coord = [i for i, h in enumerate(header) if h.startswith("x")]
    col = header.index("intensity") if "intensity" in header else header.index("mean")
    axes = tuple(np.unique(body[:, i]) for i in coord)
    shape = tuple(len(a) for a in axes)
    vals = body[:, col].reshape(shape)
    return IntensityGrid(axes, vals, np.zeros(shape))


def cmd_evaluate(s):
    _require(s, "model", "events")
    t0 = time.perf_counter()
    model = FittedModel.load(s["model"])
    test = load_events(s["events"], model.window)
    metrics = {"L_test": expected_test_loglik(model, test),
               "constant_convention": "Gaussian prior normalizer and log N*! omitted"}
    if s.get("truth"):
        truth = load_truth_grid(s["truth"])
        metrics["RMSE"] = rmse(intensity_grid(model, truth.shape), truth)
    metrics["runtime_seconds"] = time.perf_counter() - t0
    metrics["config"] = s
    out = Path(s["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True))
    write_manifest(out, "evaluate", s)
    return metrics


def cmd_benchmark(s):
    names = list(s["configs"])
    unknown = [n for n in names if n not in DEFAULT_CONFIGS]
    if unknown:
        raise UsageError(f"unknown benchmark configuration(s): {unknown}")
    configs = {n: DEFAULT_CONFIGS[n] for n in names}
    train_seeds = None
    if s["dry_run"]:
        configs = {"NSSPP": DEFAULT_CONFIGS["NSSPP"]}
        train_seeds = [0]
    base = {"epochs": s["epochs"], "lr": s["lr"], "seed": s["seed"]}
    results = run_benchmark(s["kinds"], configs, int(s["seeds"]), s["truth_seed"], base,
                            train_seeds, int(s["workers"]))
    summary = summarize(results)
    out = Path(s["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    # report.md stays reproducible; timings go to report.json and stdout
    (out / "report.md").write_text(format_table(summary) + "\n")
    doc = {"summary": [{"kind": k, "model": n, **v} for (k, n), v in summary.items()],
           "runs": [r.__dict__ for r in results]}
    (out / "report.json").write_text(json.dumps(doc, indent=2))
    write_manifest(out, "benchmark", s)
    print(format_table(summary, runtime=True))
    return summary


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "benchmark": cmd_benchmark}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args)
        COMMANDS[args.command](settings)
    except (UsageError, argparse.ArgumentTypeError, json.JSONDecodeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"dnsspp: error: {exc}", file=sys.stderr)
        return 2
    except (DNSSPPError, ValueError, ArithmeticError, OSError) as exc:
        print(f"dnsspp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
