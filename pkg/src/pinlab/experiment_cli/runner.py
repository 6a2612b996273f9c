"""Dispatch of experiment kinds, parallel over fixed sample-index chunks.

Cells are fixed by the config (chunk size and sample count), never by the
worker count, and results are gathered in cell order, so the numeric payload
does not depend on how many workers ran it.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

import pinlab
from pinlab import homogeneous, intersection, partition, polymer_sampler
from pinlab.disorder_env import DisorderSpec, beta2, environment_matrix, log_mgf, moment_gap, sample_environment
from pinlab.experiment_cli.config import ExperimentConfig, validate
from pinlab.renewal_kernel import KernelSpec, SlowlyVaryingSpec, build_kernel, doney_asymptote, renewal_mass


class ExperimentError(RuntimeError):
    pass


EXECUTION_ONLY = ("workers", "out_dir")


@dataclass
class ExperimentResult:
    config: dict
    config_hash: str
    kind: str
    rows: list
    summary: dict
    seeds: dict
    version: str
    plot: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def payload(self) -> dict:
        """Everything except timing and execution-only settings (workers, output
        location): equal across reruns of the same config."""
        d = self.to_dict()
        d.pop("wall_clock")
        run = {k: v for k, v in d["config"].get("run", {}).items() if k not in EXECUTION_ONLY}
        d["config"] = {**d["config"], "run": run}
        return d

    def to_dict(self) -> dict:
        return {"config": self.config, "config_hash": self.config_hash, "kind": self.kind, "rows": self.rows,
                "summary": self.summary, "seeds": self.seeds, "version": self.version, "plot": self.plot,
                "wall_clock": self.wall_clock}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        return cls(**d)


@lru_cache(maxsize=16)
def _kernel(spec: KernelSpec):
    return build_kernel(spec)


def kernel_for(model: dict):
    L = SlowlyVaryingSpec.from_dict(model["L"])
    return _kernel(KernelSpec(float(model["alpha"]), L, bool(model["recurrent"]), int(model["n_max"]),
                              float(model["tail_tolerance"])))


def _disorder(cfg: dict, family: str | None = None) -> DisorderSpec:
    return DisorderSpec(family or cfg["model"]["disorder"], cfg["run"]["seed_base"])


def _beta(cfg: dict, kernel, value=None) -> float:
    b = cfg["params"]["beta"] if value is None else value
    if cfg["params"]["beta_units"] == "beta2":
        b2 = beta2(_disorder(cfg), kernel)
        if not math.isfinite(b2):
            raise ExperimentError("beta_units='beta2' but beta_2 is infinite for this disorder")
        return float(b) * b2
    return float(b)


def _chunks(n: int, size: int) -> list:
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def _f(x):
    x = float(x)
    return x if math.isfinite(x) else (None if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def _mean_se(v):
    m, s = partition._mean_se(np.asarray(v))
    return float(m), float(s)


# --------------------------------------------------------------------------- cells

def _martingale_cell(cfg: dict, beta: float, lo: int, hi: int, N_max: int):
    kernel = kernel_for(cfg["model"])
    omegas = environment_matrix(_disorder(cfg), N_max, range(lo, hi))
    return partition.martingale_batch(kernel, cfg["model"]["disorder"], beta, omegas)


def _quenched_cell(cfg: dict, beta: float, h: float, N: int, lo: int, hi: int):
    kernel = kernel_for(cfg["model"])
    x, _ = partition.log_partition_batch(kernel, environment_matrix(_disorder(cfg), N, range(lo, hi)), beta, h, N,
                                         free=False)
    return x[:, N] / N


def _contact_cell(cfg: dict, beta: float, i: int):
    kernel = kernel_for(cfg["model"])
    p = cfg["params"]
    rep = polymer_sampler.contact_fraction_experiment(kernel, _disorder(cfg), beta, p["gamma"], p["N_grid"], 1,
                                                      p["threshold_c"], sample_indices=[i])
    return [v[0] for v in rep.values]


def _marginal_cell(cfg: dict, beta: float, i: int):
    kernel = kernel_for(cfg["model"])
    grid = sorted(cfg["params"]["N_grid"])
    env = sample_environment(_disorder(cfg), 2 * grid[-1], i)
    laws = {}
    for N in sorted(set(grid) | {2 * n for n in grid}):
        laws[N] = polymer_sampler.finite_marginal_law(kernel, env, beta, cfg["params"]["m"], N,
                                                      disorder=cfg["model"]["disorder"])
    return [polymer_sampler.total_variation(laws[N], laws[2 * N]) for N in grid]


def _oracle_cell(cfg: dict, t: int):
    p = cfg["params"]
    rng = np.random.default_rng([cfg["run"]["seed_base"], 7919, t])
    alphas = p["oracle_alphas"]
    alpha = float(alphas[t % len(alphas)])
    beta = float(rng.uniform(0.0, 1.0))
    h = float(rng.uniform(-1.0, 1.0))
    N_max = p["oracle_N_max"]
    kernel = _kernel(KernelSpec(alpha))
    env = sample_environment(_disorder(cfg), N_max, t)
    arr = partition.log_partition_arrays(kernel, env, beta, h)
    worst = 0.0
    for N in range(1, N_max + 1):
        lz, lzc = partition.brute_force_partition(kernel, env, beta, h, N)
        worst = max(worst, abs(lz - arr.log_Z[N]), abs(lzc - arr.log_Zc[N]))
    n_law = min(N_max, 10)
    law = polymer_sampler.contact_count_law(kernel, env, beta, h, n_law)
    bf = polymer_sampler.brute_force_count_law(kernel, env, beta, h, n_law)
    law_err = float(np.max(np.abs(law.q - bf)))
    return {"tuple": t, "alpha": alpha, "beta": beta, "h": h, "partition_err": worst, "count_law_err": law_err,
            "pass": bool(worst <= 1e-10 and law_err <= 1e-10)}


# --------------------------------------------------------------------------- kinds

def _kernel_diagnostics(cfg, kernel, pmap):
    grid = cfg["params"]["N_grid"] or [n for n in (10, 100, 1000, 10_000, 100_000) if n <= kernel.n_max]
    grid = [int(n) for n in grid if n <= kernel.n_max]
    u = renewal_mass(kernel, max(grid))
    rows = [{"n": n, "u_n": float(u[n]), "doney": doney_asymptote(kernel.alpha, kernel.effective_L, n),
             "ratio": float(u[n]) / doney_asymptote(kernel.alpha, kernel.effective_L, n),
             "tail_probability": float(kernel.survival[n])} for n in grid]
    summary = {"total_mass": kernel.total_mass, "defect": kernel.defect, "tail_mass": kernel.tail_mass,
               "tail_width": kernel.tail_width, "h_c": homogeneous.critical_point(kernel),
               "transient_intersection": intersection.is_transient(kernel.alpha, kernel.L)}
    if kernel.recurrent and summary["transient_intersection"]:
        d = intersection.intersection_data(kernel)
        summary.update(m=d.m, m_width=d.m_width, p_return=d.p_return)
    plot = {"x": "n", "series": [{"y": "ratio", "label": "u_n / asymptote"}], "xlog": True, "ylog": False,
            "title": "renewal mass against its asymptote"}
    return rows, summary, plot, {}


def _homogeneous_curve(cfg, kernel, pmap):
    curve = homogeneous.free_energy_curve(kernel, cfg["params"]["h_grid"])
    rows = [{"h": float(h), "F": float(F)} for h, F in zip(curve.h, curve.F)]
    try:
        curve.check()
        shape_ok = True
    except AssertionError:
        shape_ok = False
    summary = {"h_c": curve.h_c, "shape_ok": shape_ok,
               "max_residual": max((homogeneous.root_residual(kernel, h, F) for h, F in zip(curve.h, curve.F)
                                    if F > 0), default=0.0)}
    plot = {"x": "h", "series": [{"y": "F", "label": "F(h)"}], "xlog": False, "ylog": False,
            "title": "homogeneous free energy"}
    return rows, summary, plot, {}


def _exponent_fit(cfg, kernel, pmap):
    p = cfg["params"]
    window = tuple(p["window"])
    curve = homogeneous.exponent_curve(kernel, window, p["n_points"])
    fit = homogeneous.exponent_fit(curve, curve.h_c, window)
    rows = [{"u": float(h - curve.h_c), "h": float(h), "F": float(F)} for h, F in zip(curve.h, curve.F)]
    summary = {"slope": fit.slope, "stderr": fit.stderr, "intercept": fit.intercept, "n_points": fit.n_points,
               "predicted": max(1.0, 1.0 / kernel.alpha), "h_c": curve.h_c}
    plot = {"x": "u", "series": [{"y": "F", "label": "F", "points": True}], "xlog": True, "ylog": True,
            "fit": {"slope": fit.slope, "intercept": fit.intercept}, "title": "free energy near criticality",
            "xlabel": "h - h_c"}
    return rows, summary, plot, {}


def _beta2(cfg, kernel, pmap):
    families = cfg["params"]["families"] or [cfg["model"]["disorder"]]
    rows = []
    transient = intersection.is_transient(kernel.alpha, kernel.L)
    for fam in families:
        b2 = beta2(DisorderSpec(fam), kernel)
        row = {"family": fam, "beta2": _f(b2), "transient_intersection": transient}
        if transient:
            d = intersection.intersection_data(kernel)
            row.update(m=d.m, m_width=d.m_width, p_return=d.p_return)
            if math.isfinite(b2) and b2 > 0:
                row["identity_residual"] = abs(float(moment_gap(fam, b2)) + math.log(d.p_return))
        rows.append(row)
    return rows, {"alpha": kernel.alpha}, {}, {}


def _second_moment(cfg, kernel, pmap):
    p, r = cfg["params"], cfg["run"]
    beta = _beta(cfg, kernel)
    grid = sorted(int(n) for n in p["N_grid"])
    Nm = grid[-1]
    log_W = partition.log_second_moment_exact(kernel, cfg["model"]["disorder"], beta, Nm)
    cells = _chunks(r["n_samples"], r["chunk"])
    Z = np.concatenate(list(pmap(_martingale_cell, [(cfg, beta, lo, hi, Nm) for lo, hi in cells])))
    rows = []
    for n in grid:
        m1, s1 = _mean_se(Z[:, n])
        m2, s2 = _mean_se(Z[:, n] ** 2)
        rows.append({"N": n, "W_exact": float(np.exp(log_W[n])), "mc_mean": m1, "mc_mean_se": s1,
                     "mc_second": m2, "mc_second_se": s2})
    summary = {"beta": beta, "gap": float(moment_gap(cfg["model"]["disorder"], beta)),
               "W_limit": _f(partition.second_moment_limit(kernel, cfg["model"]["disorder"], beta))}
    if len(grid) >= 2:
        summary["last_ratio"] = float(np.exp(log_W[grid[-1]] - log_W[grid[-2]]))
    plot = {"x": "N", "series": [{"y": "W_exact", "label": "E[Z_N^2] exact"},
                                 {"y": "mc_second", "label": "Monte Carlo", "points": True}],
            "xlog": True, "ylog": True, "title": "second moment of the martingale"}
    return rows, summary, plot, {"sample_indices": [0, r["n_samples"]]}


def _martingale(cfg, kernel, pmap):
    p, r = cfg["params"], cfg["run"]
    beta = _beta(cfg, kernel)
    grid = sorted(int(n) for n in p["N_grid"])
    Nm = grid[-1]
    cells = _chunks(r["n_samples"], r["chunk"])
    Z = np.concatenate(list(pmap(_martingale_cell, [(cfg, beta, lo, hi, Nm) for lo, hi in cells])))
    rows = []
    for n in grid:
        m, s = _mean_se(Z[:, n])
        row = {"N": n, "mean": m, "stderr": s}
        if 2 * n <= Nm:
            row["median_increment"] = float(np.median(np.abs(Z[:, 2 * n] - Z[:, n])))
        rows.append(row)
    plot = {"x": "N", "series": [{"y": "mean", "label": "mean Z_N"}], "xlog": True, "ylog": False,
            "title": "martingale normalization"}
    return rows, {"beta": beta, "h": -float(log_mgf(cfg["model"]["disorder"], beta))}, plot, \
        {"sample_indices": [0, r["n_samples"]]}


def _quenched_surface(cfg, kernel, pmap):
    p, r = cfg["params"], cfg["run"]
    disorder = _disorder(cfg)
    cells = _chunks(r["n_samples"], r["chunk"])
    jobs, keys = [], []
    for b in p["beta_grid"]:
        beta = _beta(cfg, kernel, b)
        for h in p["h_grid"]:
            for N in p["N_grid"]:
                for lo, hi in cells:
                    jobs.append((cfg, beta, float(h), int(N), lo, hi))
                keys.append((beta, float(h), int(N)))
    out = list(pmap(_quenched_cell, jobs))
    rows, k, all_ok = [], 0, True
    for beta, h, N in keys:
        vals = np.concatenate(out[k:k + len(cells)])
        k += len(cells)
        m, s = _mean_se(vals)
        ann = homogeneous.annealed_free_energy(kernel, disorder, beta, h)
        ok = bool(m <= ann + 3.0 * s)
        all_ok &= ok
        rows.append({"beta": beta, "h": h, "N": N, "quenched": m, "stderr": s, "annealed": ann, "jensen_ok": ok})
    plot = {"x": "h", "series": [{"y": "quenched", "label": "quenched (1/N) E log Zc", "points": True},
                                 {"y": "annealed", "label": "annealed"}],
            "group": "beta", "xlog": False, "ylog": False, "title": "quenched vs annealed"}
    return rows, {"jensen_all_cells": all_ok}, plot, {"sample_indices": [0, r["n_samples"]]}


def _contact_fraction(cfg, kernel, pmap):
    p, r = cfg["params"], cfg["run"]
    beta = _beta(cfg, kernel)
    vals = np.array(list(pmap(_contact_cell, [(cfg, beta, i) for i in range(r["n_samples"])])))
    rows = []
    for g, N in enumerate(p["N_grid"]):
        m, s = _mean_se(vals[:, g])
        rows.append({"N": int(N), "mean": m, "stderr": s, "frac_above_c": float(np.mean(vals[:, g] > p["threshold_c"])),
                     "threshold": float(N) ** p["gamma"]})
    means = [row["mean"] for row in rows]
    summary = {"beta": beta, "gamma": p["gamma"], "increasing": all(b > a for a, b in zip(means, means[1:])),
               "decreasing": all(b < a for a, b in zip(means, means[1:]))}
    plot = {"x": "N", "series": [{"y": "mean", "label": "E[P_N(count > N^gamma)]"}], "xlog": True, "ylog": False,
            "title": "contact fraction at the annealed critical point"}
    return rows, summary, plot, {"sample_indices": [0, r["n_samples"]]}


def _marginal_convergence(cfg, kernel, pmap):
    p, r = cfg["params"], cfg["run"]
    beta = _beta(cfg, kernel)
    grid = sorted(int(n) for n in p["N_grid"])
    tv = np.array(list(pmap(_marginal_cell, [(cfg, beta, i) for i in range(r["n_samples"])])))
    rows = []
    for g, N in enumerate(grid):
        m, s = _mean_se(tv[:, g])
        rows.append({"N": N, "tv_mean": m, "tv_stderr": s, "tv_sample0": float(tv[0, g])})
    means = [row["tv_mean"] for row in rows]
    plot = {"x": "N", "series": [{"y": "tv_mean", "label": "mean TV(N, 2N)"}], "xlog": True, "ylog": True,
            "title": "finite-marginal convergence"}
    return rows, {"beta": beta, "m": p["m"], "decreasing": all(b < a for a, b in zip(means, means[1:]))}, plot, \
        {"sample_indices": [0, r["n_samples"]]}


def _oracle_suite(cfg, kernel, pmap):
    rows = list(pmap(_oracle_cell, [(cfg, t) for t in range(cfg["params"]["oracle_tuples"])]))
    passed = sum(row["pass"] for row in rows)
    return rows, {"passed": passed, "failed": len(rows) - passed,
                  "max_partition_err": max(row["partition_err"] for row in rows),
                  "max_count_law_err": max(row["count_law_err"] for row in rows)}, {}, {}


KIND_RUNNERS = {
    "kernel-diagnostics": _kernel_diagnostics,
    "homogeneous-curve": _homogeneous_curve,
    "exponent-fit": _exponent_fit,
    "beta2": _beta2,
    "second-moment": _second_moment,
    "martingale": _martingale,
    "quenched-surface": _quenched_surface,
    "contact-fraction": _contact_fraction,
    "marginal-convergence": _marginal_convergence,
    "oracle-suite": _oracle_suite,
}


def _call(args):
    fn, a, cell = args
    try:
        return fn(*a)
    except Exception as exc:
        raise ExperimentError(f"cell {cell} ({fn.__name__.strip('_')}): {type(exc).__name__}: {exc}") from exc


def run_experiment(config: ExperimentConfig | dict, workers: int | None = None) -> ExperimentResult:
    """Run one experiment; ``workers`` overrides ``run.workers``."""
    if isinstance(config, dict):
        config = validate(config)
    cfg = config.to_dict()
    n_workers = int(workers or cfg["run"]["workers"])
    t0 = time.perf_counter()
    pool = ProcessPoolExecutor(max_workers=n_workers) if n_workers > 1 else None

    def pmap(fn, arglist):
        arglist = list(arglist)
        jobs = [(fn, a, i) for i, a in enumerate(arglist)]
        if pool is None:
            return [_call(j) for j in jobs]
        return list(pool.map(_call, jobs))

    try:
        kernel = None if config.experiment == "oracle-suite" else kernel_for(cfg["model"])
        rows, summary, plot, seeds = KIND_RUNNERS[config.experiment](cfg, kernel, pmap)
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(f"{config.experiment}: {type(exc).__name__}: {exc}") from exc
    finally:
        if pool is not None:
            pool.shutdown()
    seeds = {"seed_base": cfg["run"]["seed_base"], "scheme": "philox(seedsequence([seed_base, sample_index]))",
             **seeds}
    return ExperimentResult(config=config.numeric_dict() | {"run": cfg["run"]}, config_hash=config.config_hash(),
                            kind=config.experiment, rows=_clean(rows), summary=_clean(summary), seeds=seeds,
                            version=pinlab.__version__, plot=plot, wall_clock=time.perf_counter() - t0)


def _clean(obj):
    """Plain JSON types only (numpy scalars to Python, non-finite floats to strings)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _f(obj)
    return obj
