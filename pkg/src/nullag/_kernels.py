"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``NULLAG_DISABLE_NUMBA`` is unset (or set to ``0``/``false``).
Both implementations are always importable as ``numpy_kernels`` and
``numba_kernels`` (the latter is ``None`` without numba) so tests and the
benchmark can compare them directly.
"""

import os
from types import SimpleNamespace

import numpy as np


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false", "no")


# ---------------------------------------------------------------- numpy path


def _np_eval_packed(coeffs, exps, offsets, X):
    """Evaluate P packed polynomials at E points.

    coeffs: (T,) float, exps: (T, N) int, offsets: (P+1,) int delimiting the
    terms of each polynomial, X: (E, N). Returns (E, P).
    """
    E = X.shape[0]
    P = offsets.shape[0] - 1
    out = np.zeros((E, P))
    for p in range(P):
        acc = out[:, p]
        for t in range(offsets[p], offsets[p + 1]):
            mono = np.full(E, coeffs[t])
            for j in np.flatnonzero(exps[t]):
                e = exps[t, j]
                mono *= X[:, j] if e == 1 else X[:, j] ** e
            acc += mono
    return out


def _np_element_gradients(U, simplices, grads):
    # U: (V, m), simplices: (E, n+1), grads: (E, n+1, n) -> (E, m, n)
    return np.einsum("eai,eaj->eij", U[simplices], grads)


def _np_scatter_vertex_gradient(G, simplices, grads, nverts):
    # G: (E, m, n) weighted derivative of the integrand per element
    contrib = np.einsum("eij,eaj->eai", G, grads)
    m = G.shape[1]
    out = np.zeros((nverts, m))
    flat = simplices.ravel()
    for i in range(m):
        out[:, i] = np.bincount(flat, weights=contrib[:, :, i].ravel(), minlength=nverts)
    return out


numpy_kernels = SimpleNamespace(
    name="numpy",
    eval_packed=_np_eval_packed,
    element_gradients=_np_element_gradients,
    scatter_vertex_gradient=_np_scatter_vertex_gradient,
)


# ---------------------------------------------------------------- numba path

numba_kernels = None
try:
    if _flag("NULLAG_NO_NUMBA_IMPORT"):
        raise ImportError("numba import suppressed")
    import numba

    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def _nb_eval_packed(coeffs, exps, offsets, X):
        E, N = X.shape
        P = offsets.shape[0] - 1
        out = np.zeros((E, P))
        for e in range(E):
            for p in range(P):
                acc = 0.0
                for t in range(offsets[p], offsets[p + 1]):
                    mono = coeffs[t]
                    for j in range(N):
                        k = exps[t, j]
                        while k > 0:
                            mono *= X[e, j]
                            k -= 1
                    acc += mono
                out[e, p] = acc
        return out

    @_jit
    def _nb_element_gradients(U, simplices, grads):
        E, A = simplices.shape
        n = grads.shape[2]
        m = U.shape[1]
        out = np.zeros((E, m, n))
        for e in range(E):
            for a in range(A):
                v = simplices[e, a]
                for i in range(m):
                    uvi = U[v, i]
                    for j in range(n):
                        out[e, i, j] += uvi * grads[e, a, j]
        return out

    @_jit
    def _nb_scatter_vertex_gradient(G, simplices, grads, nverts):
        E, A = simplices.shape
        m, n = G.shape[1], G.shape[2]
        out = np.zeros((nverts, m))
        for e in range(E):
            for a in range(A):
                v = simplices[e, a]
                for i in range(m):
                    s = 0.0
                    for j in range(n):
                        s += G[e, i, j] * grads[e, a, j]
                    out[v, i] += s
        return out

    numba_kernels = SimpleNamespace(
        name="numba",
        eval_packed=_nb_eval_packed,
        element_gradients=_nb_element_gradients,
        scatter_vertex_gradient=_nb_scatter_vertex_gradient,
    )
except ImportError:  # pragma: no cover - exercised only without numba
    numba_kernels = None


USE_NUMBA = numba_kernels is not None and not _flag("NULLAG_DISABLE_NUMBA")
kernels = numba_kernels if USE_NUMBA else numpy_kernels


def eval_packed(coeffs, exps, offsets, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    return kernels.eval_packed(coeffs, exps, offsets, X)


def element_gradients(U, simplices, grads):
    return kernels.element_gradients(np.ascontiguousarray(U, dtype=np.float64), simplices, grads)


def scatter_vertex_gradient(G, simplices, grads, nverts):
    return kernels.scatter_vertex_gradient(np.ascontiguousarray(G), simplices, grads, nverts)
