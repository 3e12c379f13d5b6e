"""Synthetic benchmark: fit on each dataset, score on the others, aggregate."""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .metrics import expected_test_loglik, intensity_grid, rmse
from .simulation import synth_dataset
from .training import FitConfig, fit

DEFAULT_CONFIGS = {
    "DNSSPP-[100,50]": {"layers": [100, 50]},
    "DNSSPP-[50,30]": {"layers": [50, 30]},
    "DNSSPP-[30,50,30]": {"layers": [30, 50, 30]},
    "NSSPP": {"layers": [50]},
    "DSSPP-[100,50]": {"layers": [100, 50], "tie": True},
    "DSSPP-[50,30]": {"layers": [50, 30], "tie": True},
    "DSSPP-[30,50,30]": {"layers": [30, 50, 30], "tie": True},
    "SSPP": {"layers": [50], "tie": True},
}


@dataclass
class RunResult:
    name: str
    kind: str
    train_seed: int
    L_test: float
    rmse: float
    runtime: float
    best_epoch: int


def load_datasets(kind, n_seeds, truth_seed=0):
    return [synth_dataset(kind, s, truth_seed) for s in range(n_seeds)]


def run_one(name, overrides, kind, datasets, train_idx, base=None):
    """Fit on ``datasets[train_idx]``; L_test is the mean over the other datasets."""
    params = dict(base or {})
    params.update(overrides)
    params["seed"] = params.get("seed", 0) + train_idx
    config = FitConfig(**params)
    events, truth = datasets[train_idx]
    t0 = time.perf_counter()
    model = fit(events, config)
    runtime = time.perf_counter() - t0
    tests = [d[0] for j, d in enumerate(datasets) if j != train_idx] or [events]
    L = float(np.mean([expected_test_loglik(model, t) for t in tests]))
    grid = intensity_grid(model, truth.shape)
    err = rmse(grid, truth.as_grid())
    return RunResult(name, kind, train_idx, L, err, runtime, model.best_epoch)


def run_benchmark(kinds=("stationary", "nonstationary"), configs=None, n_seeds=10,
                  truth_seed=0, base=None, train_seeds=None, workers=1):
    """Run every (kind, config, training dataset) combination.

    Returns a list of :class:`RunResult`; order is deterministic.
    """
    configs = DEFAULT_CONFIGS if configs is None else configs
    jobs = []
    for kind in kinds:
        datasets = load_datasets(kind, n_seeds, truth_seed)
        seeds = range(n_seeds) if train_seeds is None else train_seeds
        for name, overrides in configs.items():
            for i in seeds:
                jobs.append((name, overrides, kind, datasets, i, base))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda j: run_one(*j), jobs))
    return [run_one(*j) for j in jobs]


def summarize(results):
    """``{(kind, name): {L_mean, L_std, rmse_mean, rmse_std, runtime, n}}``."""
    table = {}
    for r in results:
        table.setdefault((r.kind, r.name), []).append(r)
    out = {}
    for key, rows in table.items():
        L = np.array([r.L_test for r in rows])
        E = np.array([r.rmse for r in rows])
        out[key] = {
            "L_mean": float(L.mean()), "L_std": float(L.std()),
            "rmse_mean": float(E.mean()), "rmse_std": float(E.std()),
            "runtime": float(np.mean([r.runtime for r in rows])), "n": len(rows),
        }
    return out


def format_table(summary, runtime=False):
    """Markdown table in ``mean(± std)`` cells; ``runtime`` adds wall-clock columns,
    which makes the table non-reproducible."""
    kinds = sorted({k for k, _ in summary})
    names = list(dict.fromkeys(n for _, n in summary))
    per = 3 if runtime else 2
    head = "| model | " + " | ".join(
        f"{k} L_test | {k} RMSE" + (f" | {k} runtime(s)" if runtime else "") for k in kinds) + " |"
    lines = [head, "|" + "---|" * (1 + per * len(kinds))]
    for name in names:
        cells = []
        for k in kinds:
            s = summary.get((k, name))
            if s is None:
                cells += [""] * per
                continue
            cells += [f"{s['L_mean']:.2f}(± {s['L_std']:.2f})",
                      f"{s['rmse_mean']:.3f}(± {s['rmse_std']:.3f})"]
            if runtime:
                cells.append(f"{s['runtime']:.2f}")
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines)
