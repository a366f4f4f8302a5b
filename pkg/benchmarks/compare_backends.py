"""Time the compiled kernels against the numpy fallback on one cavity level.

    python3 benchmarks/compare_backends.py --levels 4 --repeat 5

Each row reports the best of ``--repeat`` wall times per backend, the
speed-up, and the max-norm difference between the two results.
"""

import argparse
import time

import numpy as np

from stokesmg import kernels
from stokesmg.bench import RunConfig, assemble_levels, benchmark_hierarchy
from stokesmg.smoothers import (
    Variant,
    build_subdomains,
    factorize_subdomains,
    smooth_additive,
    smooth_multiplicative,
    smooth_restricted_additive,
)


def best_of(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run_case(system, backend, repeat, x, b):
    kb = kernels.load(backend)
    L = system.L
    out = {}

    def spmv():
        y = np.empty(L.shape[0])
        kb.csr_matvec(L.indptr, L.indices, L.data, x, y)
        return y

    out["spmv"] = best_of(spmv, repeat)
    patches = {}
    for v in Variant:
        t, p = best_of(lambda v=v: factorize_subdomains(system, build_subdomains(system), v, backend), repeat)
        out[f"setup {v.value}"] = (t, p.inv if v is Variant.RAV else p.blocks)
        patches[v] = p
    out["mv sweep"] = best_of(lambda: smooth_multiplicative(system, patches[Variant.MV], x, b, backend=backend), repeat)
    out["av step"] = best_of(lambda: smooth_additive(system, patches[Variant.AV], x, b, backend=backend), repeat)
    out["rav step"] = best_of(
        lambda: smooth_restricted_additive(system, patches[Variant.RAV], x, b, backend=backend), repeat)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--benchmark", choices=["cavity", "cylinder"], default="cavity")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    names = kernels.available()
    if "compiled" not in names:
        print("compiled kernels are not built; only the fallback can be timed")
    cfg = RunConfig(benchmark=args.benchmark, n_levels=args.levels)
    hierarchy, bcs = benchmark_hierarchy(cfg)
    systems, _ = assemble_levels(cfg, hierarchy, bcs)
    system = systems[-1]
    rng = np.random.default_rng(0)
    x, b = rng.standard_normal(system.n), rng.standard_normal(system.n)

    print(f"{args.benchmark} depth {args.levels}: {system.n} free DoFs, nnz {system.L.nnz}")
    results = {name: run_case(system, name, args.repeat, x, b) for name in names}
    header = f"{'kernel':<12}" + "".join(f"{n + ' [s]':>16}" for n in names)
    if len(names) == 2:
        header += f"{'speed-up':>12}{'max diff':>12}"
    print(header)
    for key in results[names[0]]:
        line = f"{key:<12}" + "".join(f"{results[n][key][0]:>16.5f}" for n in names)
        if len(names) == 2:
            (tc, yc), (tp, yp) = results["compiled"][key], results["python"][key]
            line += f"{tp / tc:>12.1f}{np.max(np.abs(yc - yp)):>12.2e}"
        print(line)


if __name__ == "__main__":
    main()
