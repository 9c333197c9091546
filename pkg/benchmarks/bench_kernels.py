"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N wall time per kernel and backend on an n=3, h=16 mesh
(24576 elements).
"""

import argparse
import time

import numpy as np

from nullag import _kernels
from nullag.mesh import build_standard_domain
from nullag.nullag_core import boundary_nl_basis
from nullag.polyform import pack, sqnorm_poly


def best_of(fn, repeat):
    fn()  # warm up, includes jit compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    mesh = build_standard_domain(3, [0.0, 0.6, 0.8], 16)
    U = rng.normal(size=(mesh.nverts, 3))
    polys = boundary_nl_basis(3, 3, (0, 0, 1)) + [sqnorm_poly(3, 3) ** 2]
    coeffs, exps, offsets = pack(polys)
    G = np.ascontiguousarray(rng.normal(size=(len(mesh.simplices), 3, 3)))
    X = G.reshape(len(G), -1)
    return {
        "eval_packed": lambda k: k.eval_packed(coeffs, exps, offsets, X),
        "element_gradients": lambda k: k.element_gradients(U, mesh.simplices, mesh.grads),
        "scatter_vertex_gradient": lambda k: k.scatter_vertex_gradient(G, mesh.simplices, mesh.grads,
                                                                       mesh.nverts),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = [_kernels.numpy_kernels]
    if _kernels.numba_kernels is not None:
        backends.append(_kernels.numba_kernels)
    else:
        print("numba unavailable; timing the numpy path only")
    print(f"{'kernel':<26}" + "".join(f"{b.name:>12}" for b in backends) + f"{'speedup':>10}")
    for name, call in cases().items():
        t = [best_of(lambda b=b: call(b), args.repeat) for b in backends]
        speed = f"{t[0] / t[1]:>9.1f}x" if len(t) == 2 else ""
        print(f"{name:<26}" + "".join(f"{x * 1e3:>10.2f}ms" for x in t) + speed)


if __name__ == "__main__":
    main()
