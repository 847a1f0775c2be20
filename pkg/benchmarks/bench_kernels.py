"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the four sector kernels on the 4x4 and 6x6 tori and one full
Hamiltonian assembly, checks that both backends return identical arrays,
and prints one row per case with the speed-up.
"""

import argparse
import timeit

import numpy as np

from hallpump import _backend, _pykernels
from hallpump.fock import build_sector_basis
from hallpump.models import HofstadterParams, build_hofstadter


def _cases():
    for n_sites, N in ((16, 4), (16, 8), (36, 3)):
        yield f"enumerate n={n_sites} N={N}", lambda k, n=n_sites, m=N: k.enumerate_states(n, m)
    st = _pykernels.enumerate_states(36, 4)
    yield "occupations 36/4", lambda k: k.occupations(st, 36)
    rng = np.random.default_rng(0)
    words = st[rng.integers(0, len(st), 20000)]
    yield "lookup 20k words", lambda k: k.lookup(st, words)
    sites = np.array([3, 17, 17, 3], dtype=np.int64)
    dags = np.array([1, 0, 1, 0], dtype=np.uint8)
    yield "monomial 36/4 (4 ops)", lambda k: k.monomial_action(st, sites, dags, st)


def _assemble(name):
    _backend.use_backend(name)
    fam = build_hofstadter(HofstadterParams(L=4, V=0.25))
    b = build_sector_basis(fam.lattice, 4)
    return fam.base.assemble(b)


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "cython" not in _backend.available():
        print("compiled kernels are not built; only the fallback is available")
        return
    from hallpump import _ckernels

    print(f"{'case':28s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speed-up':>9s}  equal")
    for label, fn in _cases():
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:28s} {tp:12.3f} {tc:12.3f} {tp / tc:9.1f}  {_same(fn(_pykernels), fn(_ckernels))}")
    res = {}
    for name in ("python", "cython"):
        res[name] = min(timeit.repeat(lambda n=name: _assemble(n), number=1, repeat=args.repeat)) * 1e3
    eq = abs(_assemble("python") - _assemble("cython")).max() == 0
    print(f"{'assemble H, L=4 N=4':28s} {res['python']:12.3f} {res['cython']:12.3f} "
          f"{res['python'] / res['cython']:9.1f}  {eq}")


if __name__ == "__main__":
    main()
