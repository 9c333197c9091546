"""Quick invariant checks behind ``nullag selftest``."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import _kernels
from .conc_lab import _slab_integral_closed, det_concentration_sequence, slab_integral
from .mesh import P1Field, build_standard_domain
from .nullag_core import boundary_nl_basis, decompose_minors, is_boundary_nl
from .polyform import (
    PolyMatrixFn,
    det_poly,
    detprime_poly,
    evaluate,
    evaluate_gradient,
    homogeneous_parts,
    minor_poly,
)
from .qcb_num import deficit, energy


def _check(name, fn):
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failed check
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return {"name": name, "passed": bool(ok), "detail": detail}


def _random_poly(rng, m, n, terms=6, degree=3):
    out = PolyMatrixFn((m, n))
    for _ in range(terms):
        e = [0] * (m * n)
        for _ in range(int(rng.integers(0, degree + 1))):
            e[int(rng.integers(m * n))] += 1
        out = out + PolyMatrixFn((m, n), {tuple(e): Fraction(int(rng.integers(-5, 6)), int(rng.integers(1, 4)))})
    return out


def run_selftest(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    checks = []

    def verdicts():
        a = is_boundary_nl(det_poly(2), (0, 1)).is_boundary_nl
        b = is_boundary_nl(detprime_poly(3), (0, 0, 1)).is_boundary_nl
        c = is_boundary_nl(detprime_poly(3), (0, 1, 0)).is_boundary_nl
        return (not a) and b and (not c), f"det/e2={a} det'/e3={b} det'/e2={c}"

    def basis_count():
        basis = boundary_nl_basis(2, 3, (0, 0, 1))
        ok = len(basis) == 6 and all(is_boundary_nl(p, (0, 0, 1)).is_boundary_nl for p in basis)
        return ok, f"{len(basis)} elements"

    def decomposition():
        m, n = 2, 3
        f = PolyMatrixFn.constant((m, n), Fraction(1, 3)) + minor_poly(m, n, (1, 2), (1, 3)) * 4
        f = f + minor_poly(m, n, (2,), (2,)) * Fraction(-2, 7)
        exp = decompose_minors(f)
        return exp.to_poly() == f, f"{len(exp.coefficients)} coefficients"

    def gradient_fd():
        worst = 0.0
        for _ in range(10):
            f = _random_poly(rng, 2, 2)
            H = rng.normal(size=(2, 2))
            G = np.asarray(evaluate_gradient(f, H), dtype=float)
            step = 1e-6
            for i in range(2):
                for j in range(2):
                    E = np.zeros((2, 2))
                    E[i, j] = step
                    fd = (evaluate(f, H + E) - evaluate(f, H - E)) / (2 * step)
                    worst = max(worst, abs(fd - G[i, j]) / max(1.0, abs(G[i, j])))
        return worst < 1e-6, f"max rel err {worst:.2e}"

    def dilation():
        f = _random_poly(rng, 2, 2, degree=4)
        H = np.array([[Fraction(int(x)) for x in row] for row in rng.integers(-4, 5, size=(2, 2))], dtype=object)
        ok = True
        for part in homogeneous_parts(f):
            d = part.degree
            ok = ok and 2**d * evaluate(part, H) == evaluate(part, 2 * H)
        return ok, "2^d f(H) = f(2H) for every homogeneous part"

    def exactness():
        mesh = build_standard_domain(3, (0.6, 0.0, 0.8), 4)
        worst = 0.0
        for poly in boundary_nl_basis(2, 3, (Fraction(3, 5), 0, Fraction(4, 5))):
            F = rng.uniform(-1, 1, size=(2, 3))
            u = P1Field(mesh, rng.uniform(-1, 1, size=(mesh.nverts, 2)))
            worst = max(worst, abs(deficit(poly, F, u)))
        return worst <= 1e-9, f"max |deficit| {worst:.2e}"

    def certificate():
        mesh = build_standard_domain(2, (0, 1), 32)

        def w(P):
            x, y = P[:, 0], P[:, 1] + 1.0
            return np.stack([np.sin(np.pi * x) * y, -np.sin(2 * np.pi * x) * y], axis=1)

        val = energy(det_poly(2), np.zeros((2, 2)), mesh.interpolate(w))
        return val <= -1.1, f"det energy of the interpolated certificate {val:.4f}"

    def concentration():
        seq = det_concentration_sequence(4)
        from scipy import integrate

        lo, hi = seq.support
        res = integrate.cubature(lambda x: np.linalg.det(seq.grad(x)), np.array(lo), np.array(hi), rtol=1e-10)
        val = float(res.estimate)
        return abs(val + 4.0 / 3.0) < 1e-8, f"integral {val:.10f}"

    def slab():
        v, _ = slab_integral(2, 16, 0.1, 1e-4)
        c = _slab_integral_closed(2, 16, 1e-4, 0.1)
        return math.isclose(v, c, rel_tol=1e-9), f"quadrature {v:.12f} closed form {c:.12f}"

    def kernels():
        if _kernels.numba_kernels is None:
            return True, "numba unavailable; numpy path only"
        mesh = build_standard_domain(2, (0, 1), 4)
        U = rng.normal(size=(mesh.nverts, 2))
        a = _kernels.numpy_kernels.element_gradients(U, mesh.simplices, mesh.grads)
        b = _kernels.numba_kernels.element_gradients(U, mesh.simplices, mesh.grads)
        err = float(np.max(np.abs(a - b)))
        return err < 1e-12, f"max difference {err:.2e}"

    for name, fn in [
        ("boundary_nl_verdicts", verdicts),
        ("basis_count", basis_count),
        ("decompose_roundtrip", decomposition),
        ("gradient_finite_differences", gradient_fd),
        ("dilation_identity", dilation),
        ("boundary_nl_energy_exactness", exactness),
        ("det_boundary_certificate", certificate),
        ("det_concentration_integral", concentration),
        ("slab_integral_closed_form", slab),
        ("kernel_paths_agree", kernels),
    ]:
        checks.append(_check(name, fn))
    return checks
