"""Benchmark the numba kernels against their pure-numpy fallbacks.

The workloads mirror guided generation: per-step categorical draws and
posterior mixtures for a ~30-node phrase, and violation scoring of
candidate degree assignments against a fixed skeleton (the SCG hot
path, invoked K times per diffusion step).

Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from gradus import kernels  # noqa: E402
from gradus.phrase import load_corpus, strip_to_skeleton  # noqa: E402
from gradus.pitch import DEGREE_LETTER, DEGREE_SEMIS  # noqa: E402
from gradus.rules import RuleConfig, build_rule_context  # noqa: E402

CORPUS = Path(__file__).resolve().parent.parent / "corpus"
N_NODES = 32
N_CLASSES = 18
REPEAT = 2000


def bench(fn, *args, repeat=REPEAT):
    fn(*args)  # warm up (jit compile / cache load)
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def main():
    rng = np.random.default_rng(0)
    rows = []

    probs = rng.dirichlet(np.ones(N_CLASSES), size=N_NODES)
    u = rng.random(N_NODES)
    rows.append(
        (
            "categorical_sample",
            bench(kernels.categorical_sample_numba, probs, u),
            bench(kernels.categorical_sample_numpy, probs, u),
        )
    )

    phat = rng.dirichlet(np.ones(N_CLASSES), size=N_NODES)
    xt = rng.integers(0, N_CLASSES, N_NODES).astype(np.int64)
    q_prev = rng.dirichlet(np.ones(N_CLASSES), size=N_CLASSES)
    q_t = rng.dirichlet(np.ones(N_CLASSES), size=N_CLASSES)
    q_cum = q_prev @ q_t
    rows.append(
        (
            "reverse_mixture",
            bench(kernels.reverse_mixture_numba, phat, xt, q_prev, q_t, q_cum),
            bench(kernels.reverse_mixture_numpy, phat, xt, q_prev, q_t, q_cum),
        )
    )

    skeleton = strip_to_skeleton(load_corpus(CORPUS)[0])
    ctx = build_rule_context(skeleton, RuleConfig())
    letters = np.array(DEGREE_LETTER, dtype=np.int64)
    semis = np.array(DEGREE_SEMIS, dtype=np.int64)
    degrees = rng.integers(0, N_CLASSES, ctx.n_nodes).astype(np.int64)
    args = (
        degrees, ctx.sounding, ctx.attacked, ctx.strong, letters, semis,
        ctx.chains, ctx.chain_offsets, 4,
    )
    rows.append(
        (
            "count_violations",
            bench(kernels.count_violations_numba, *args),
            bench(kernels.count_violations_numpy, *args),
        )
    )

    print(f"numba active by default: {kernels.USE_NUMBA} "
          f"(set GRADUS_NUMBA=0 to force the numpy path)\n")
    print(f"{'kernel':<20} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    for name, nb, npy in rows:
        print(f"{name:<20} {nb * 1e6:>10.2f}us {npy * 1e6:>10.2f}us {npy / nb:>8.1f}x")


if __name__ == "__main__":
    main()
