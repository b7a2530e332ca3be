"""Stream replay with metrics, baseline comparison, and summaries."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

from .controller import DynamicKMeans
from .errors import UsageError
from .geometry import WeightedSet, jl_project, make_jl_matrix
from .params import Params, schedule_for
from .rng import make_np_rng, make_rng
from .sparsifier import SparsifiedRunner
from .subroutines import static_weighted_kmeans
from .workload import UpdateStream

METRICS_COLUMNS = (
    "update_index", "op_kind", "cost_alg", "cost_baseline", "ratio",
    "recourse_step", "recourse_cum", "makerobust_cum", "resets_cum",
    "time_us", "n_live", "epoch_len",
)


@dataclass
class RunResult:
    rows: list
    summary: dict

    def metrics_csv(self) -> str:
        lines = [",".join(METRICS_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_fmt(row[c]) for c in METRICS_COLUMNS))
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in sorted(self.summary.items()))


def _fmt(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return repr(v)
    return str(v)


def _ratio(cost_alg: float, cost_base: float) -> float:
    if cost_base > 0:
        return cost_alg / cost_base
    return 1.0 if cost_alg <= 0 else math.inf


def baseline_solve(X: WeightedSet, k: int, rng, max_swaps=None) -> float:
    """Static solve from scratch on the live points; returns its cost."""
    if not len(X):
        return 0.0
    pts, ws = X.arrays()
    points = [tuple(int(v) for v in row) for row in pts]
    k_eff = min(k, len(set(points)))
    centers = static_weighted_kmeans(points, ws, k_eff, rng, max_swaps=max_swaps)
    return X.cost(centers)


def run_stream(stream: UpdateStream, params: Params, k: int,
               mode: str = "direct", baseline_every: int = 100,
               witness: bool = False, time_source=None,
               baseline_swaps=None, alpha: float = 25.0,
               verifiers: int | None = None, sched_overrides=None,
               jl_dim: int | None = None) -> RunResult:
    """Replay a stream through the controller (direct) or the sparsified
    runner; one metrics row per update, baseline re-solves at checkpoints.

    jl_dim projects every incoming point (treated as a raw real vector)
    down to that dimension before it reaches the algorithm.
    """
    if mode not in ("direct", "sparsified"):
        raise UsageError(f"unknown mode {mode!r}")
    clock = time_source or time.perf_counter_ns
    brng = make_rng(params.seed, "baseline")

    jl_matrix = None
    if jl_dim is not None:
        if jl_dim < 1:
            raise UsageError("jl dimension must be >= 1")
        params = params.with_overrides(d=jl_dim)
        jl_matrix = make_jl_matrix(stream.d, jl_dim,
                                   make_np_rng(params.seed, "jl"))

    sched = None
    if sched_overrides:
        sched = replace(schedule_for(params), **sched_overrides)

    direct = mode == "direct"
    if direct:
        dk = DynamicKMeans(params, k, witness=witness, sched=sched)
        full_x = dk.X
    else:
        runner = SparsifiedRunner(params, k, n_hint=max(stream.n, 16),
                                  alpha=alpha, verifiers=verifiers)
        full_x = WeightedSet(params.d, mirror=True)

    rows = []
    recourse_cum = 0
    makerobust_cum = 0
    resets_cum = 0
    time_update_ns = 0
    time_baseline_ns = 0
    cost_alg = 0.0
    cost_base = 0.0
    ratio = 1.0
    n_live_max = 0
    epoch_len = 1
    prev_solution = frozenset()

    for idx, (op, key, point, weight) in enumerate(stream.ops(), start=1):
        if jl_matrix is not None and point is not None:
            point = jl_project(point, jl_matrix, params.delta)
        t0 = clock()
        if direct:
            report = dk.update(op, key, point, weight)
            recourse_cum += report.recourse
            makerobust_cum = dk.makerobust_cum
            step_recourse = report.recourse
            epoch_len = report.epoch_len
            solution = dk.S_out
        else:
            if op == "insert":
                full_x.insert(key, tuple(point), weight)
            else:
                full_x.delete(key)
            resets_cum += runner.update(op, key, point, weight)
            sol_now = runner.solution()
            step_recourse = len(prev_solution.symmetric_difference(sol_now))
            prev_solution = sol_now
            recourse_cum += step_recourse
            makerobust_cum = runner.primary.makerobust_cum
            epoch_len = runner.primary.ell + 1
            solution = sol_now
        t1 = clock()
        time_update_ns += t1 - t0

        n_live = len(full_x)
        n_live_max = max(n_live_max, n_live)
        if idx == 1 or idx % baseline_every == 0:
            tb = clock()
            if solution and n_live:
                cost_alg = full_x.cost(solution)
            else:
                cost_alg = 0.0
            cost_base = baseline_solve(full_x, k, brng, max_swaps=baseline_swaps)
            ratio = _ratio(cost_alg, cost_base)
            time_baseline_ns += clock() - tb
        rows.append({
            "update_index": idx,
            "op_kind": "ins" if op == "insert" else "del",
            "cost_alg": cost_alg,
            "cost_baseline": cost_base,
            "ratio": ratio,
            "recourse_step": step_recourse,
            "recourse_cum": recourse_cum,
            "makerobust_cum": makerobust_cum,
            "resets_cum": resets_cum,
            "time_us": (t1 - t0) // 1000,
            "n_live": n_live,
            "epoch_len": epoch_len,
        })

    n_updates = max(1, len(rows))
    ratios = [r["ratio"] for r in rows if r["update_index"] == 1
              or r["update_index"] % baseline_every == 0]
    finite = sorted(x for x in ratios if not math.isinf(x))
    summary = {
        "n_updates": len(rows),
        "amortized_recourse": recourse_cum / n_updates,
        "amortized_time_us": time_update_ns / 1000 / n_updates,
        "time_updates_s": time_update_ns / 1e9,
        "time_baseline_s": time_baseline_ns / 1e9,
        "makerobust_per_update": makerobust_cum / n_updates,
        "resets_total": resets_cum,
        "ratio_p50": _pct(finite, 0.5),
        "ratio_p95": _pct(finite, 0.95),
        "ratio_max": max(ratios) if ratios else 1.0,
        "n_live_max": n_live_max,
        "mode": mode,
    }
    if direct:
        summary["nocolor_events"] = dk.nocolor_events
        summary["instrumented_violations"] = len(dk.violations)
        if time_source is None:  # wall-clock only; breaks replay determinism
            summary["time_points_s"] = dk.time_points_ns / 1e9
            summary["time_epochs_s"] = dk.time_epoch_ns / 1e9
    return RunResult(rows=rows, summary=summary)


def _pct(sorted_vals, q: float) -> float:
    if not sorted_vals:
        return 1.0
    i = min(len(sorted_vals) - 1, int(q * len(sorted_vals)))
    return sorted_vals[i]


def time_naive_recompute(stream: UpdateStream, params: Params, k: int,
                         sample_every: int = 50) -> float:
    """Average per-update seconds for recompute-from-scratch, measured on a
    sample of updates and extrapolated."""
    X = WeightedSet(params.d, mirror=True)
    rng = make_rng(params.seed, "naive")
    solve_ns = 0
    solves = 0
    for idx, (op, key, point, weight) in enumerate(stream.ops(), start=1):
        if op == "insert":
            X.insert(key, tuple(point), weight)
        else:
            X.delete(key)
        if idx % sample_every == 0 and len(X):
            t0 = time.perf_counter_ns()
            baseline_solve(X, k, rng)
            solve_ns += time.perf_counter_ns() - t0
            solves += 1
    if not solves:
        return 0.0
    return solve_ns / solves / 1e9
