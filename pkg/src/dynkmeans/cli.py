"""Command line interface: gen, run, verify, bench.

Exit codes: 0 ok, 1 invariant failure, 2 usage error. Config files are flat
key=value lines mirroring the parameter names; CLI flags override them.
"""

from __future__ import annotations

import argparse
import sys
import time

from .errors import UsageError
from .harness import run_stream, time_naive_recompute
from .params import Params
from .verify import SUITES, run_suite
from .workload import MODES, UpdateStream, gen_workload

PARAM_KEYS = {"epsilon": float, "d": int, "delta": int, "gamma": float,
              "theta": float, "lam": float, "lambda_cap": int, "colors": int,
              "seed": int, "preset": str}

SCHED_KEYS = {"ell_stop_factor": float, "ell_shrink": float,
              "augment_per_update": float, "makerobust_div": float,
              "robust_div": float, "contamination_offset": float,
              "d2_samples": int, "t_cap": int}


def load_config(path: str) -> dict:
    cfg = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            cfg[key.strip()] = value.strip()
    return cfg


def sched_overrides_from(cfg: dict) -> dict:
    out = {}
    for key, cast in SCHED_KEYS.items():
        if f"sched.{key}" in cfg:
            out[key] = cast(cfg[f"sched.{key}"])
    return out


def params_from(cfg: dict, args) -> Params:
    kw = {}
    for key, cast in PARAM_KEYS.items():
        if key in cfg:
            kw[key] = cast(cfg[key])
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.preset is not None:
        kw["preset"] = args.preset
    if getattr(args, "d", None):
        kw["d"] = args.d
    if getattr(args, "delta", None):
        kw["delta"] = args.delta
    return Params(**kw)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dynkmeans")
    ap.add_argument("--config", help="key=value config file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--preset", choices=("paper_faithful", "practical"),
                    default=None)
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a workload stream")
    g.add_argument("--mode", choices=MODES, default="clustered")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--delta", type=int, default=256)
    g.add_argument("--k", type=int, default=5)
    g.add_argument("--ins-frac", type=float, default=0.7)
    g.add_argument("--window", type=int, default=None)
    g.add_argument("--out", default="-")

    r = sub.add_parser("run", help="replay a stream through the algorithm")
    r.add_argument("stream", help="stream file path")
    r.add_argument("--mode", choices=("direct", "sparsified"), default="direct")
    r.add_argument("--k", type=int, default=None)
    r.add_argument("--baseline-every", type=int, default=100)
    r.add_argument("--out", default=None, help="metrics CSV path")
    r.add_argument("--witness", action="store_true")
    r.add_argument("--fixed-time", action="store_true",
                   help="deterministic time column for reproducible files")
    r.add_argument("--alpha", type=float, default=25.0)
    r.add_argument("--d", type=int, default=None)
    r.add_argument("--delta", type=int, default=None)
    r.add_argument("--jl-dim", type=int, default=None,
                   help="project incoming points to this dimension first")

    v = sub.add_parser("verify", help="run an invariant suite")
    v.add_argument("--suite", choices=SUITES, default="all")
    v.add_argument("--lambda-cap", type=int, default=None)

    b = sub.add_parser("bench", help="update-time growth measurement")
    b.add_argument("--k", type=int, default=5)
    b.add_argument("--n-small", type=int, default=1000)
    b.add_argument("--n-large", type=int, default=10000)
    b.add_argument("--d", type=int, default=2)
    b.add_argument("--delta", type=int, default=256)

    try:
        args = ap.parse_args(argv)
        cfg = load_config(args.config) if args.config else {}
        if args.cmd == "gen":
            stream = gen_workload(args.mode, args.n, args.d, args.delta,
                                  args.k, ins_frac=args.ins_frac,
                                  seed=args.seed or int(cfg.get("seed", 0)),
                                  window=args.window)
            text = stream.serialize()
            if args.out == "-":
                sys.stdout.write(text)
            else:
                with open(args.out, "w") as fh:
                    fh.write(text)
            return 0

        if args.cmd == "run":
            with open(args.stream) as fh:
                stream = UpdateStream.parse(fh.read())
            if args.d is None:
                args.d = stream.d
            if args.delta is None:
                args.delta = stream.delta
            params = params_from(cfg, args)
            k = args.k or stream.k_hint
            time_source = None
            if args.fixed_time:
                counter = [0]

                def time_source():
                    counter[0] += 1000
                    return counter[0]
            result = run_stream(stream, params, k, mode=args.mode,
                                baseline_every=args.baseline_every,
                                witness=args.witness, time_source=time_source,
                                alpha=args.alpha,
                                sched_overrides=sched_overrides_from(cfg),
                                jl_dim=args.jl_dim)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(result.metrics_csv())
                with open(args.out + ".summary", "w") as fh:
                    fh.write(result.summary_text())
            sys.stdout.write(result.summary_text())
            return 0

        if args.cmd == "verify":
            kw = {}
            if args.lambda_cap:
                kw["lambda_cap"] = args.lambda_cap
            results = run_suite(args.suite, seed=args.seed or 0, **kw)
            failed = 0
            for name, ok, detail in results:
                print(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
                failed += 0 if ok else 1
            print(f"checks={len(results)} failed={failed}")
            return 0 if failed == 0 else 1

        if args.cmd == "bench":
            params = params_from(cfg, args)
            out = {}
            for tag, n in (("small", args.n_small), ("large", args.n_large)):
                stream = gen_workload("clustered", n, args.d, args.delta,
                                      args.k, seed=params.seed)
                t0 = time.perf_counter()
                res = run_stream(stream, params, args.k, baseline_every=max(1, n // 10))
                out[f"time_{tag}_us"] = res.summary["amortized_time_us"]
                out[f"naive_{tag}_s"] = time_naive_recompute(stream, params, args.k)
                out[f"wall_{tag}_s"] = time.perf_counter() - t0
            out["growth_alg"] = out["time_large_us"] / max(out["time_small_us"], 1e-9)
            out["growth_naive"] = out["naive_large_s"] / max(out["naive_small_s"], 1e-12)
            for key in sorted(out):
                print(f"{key}={out[key]}")
            return 0
        return 2
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
