import json
import os
import subprocess
import sys

import numpy as np
import pytest

from nullag import _kernels
from nullag.mesh import build_standard_domain
from nullag.polyform import eval_many, pack
from oracles import random_poly

needs_numba = pytest.mark.skipif(_kernels.numba_kernels is None, reason="numba not importable")


def _mesh_data(rng):
    mesh = build_standard_domain(3, [0.0, 0.6, 0.8], 4)
    U = rng.normal(size=(mesh.nverts, 2))
    return mesh, U


@needs_numba
def test_eval_packed_agrees(rng):
    polys = [random_poly(rng, 2, 3, degree=4, terms=6) for _ in range(7)]
    coeffs, exps, offsets = pack(polys)
    X = rng.normal(size=(300, 6))
    a = _kernels.numpy_kernels.eval_packed(coeffs, exps, offsets, X)
    b = _kernels.numba_kernels.eval_packed(coeffs, exps, offsets, X)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_numba
def test_mesh_kernels_agree(rng):
    mesh, U = _mesh_data(rng)
    a = _kernels.numpy_kernels.element_gradients(U, mesh.simplices, mesh.grads)
    b = _kernels.numba_kernels.element_gradients(U, mesh.simplices, mesh.grads)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)
    G = rng.normal(size=a.shape)
    a = _kernels.numpy_kernels.scatter_vertex_gradient(G, mesh.simplices, mesh.grads, mesh.nverts)
    b = _kernels.numba_kernels.scatter_vertex_gradient(G, mesh.simplices, mesh.grads, mesh.nverts)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_scatter_is_adjoint_of_element_gradients(rng):
    # <grad U, G>_elements == <U, scatter(G)>_vertices
    mesh, U = _mesh_data(rng)
    G = rng.normal(size=(len(mesh.simplices), 2, 3))
    lhs = np.sum(_kernels.element_gradients(U, mesh.simplices, mesh.grads) * G)
    rhs = np.sum(U * _kernels.scatter_vertex_gradient(G, mesh.simplices, mesh.grads, mesh.nverts))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_eval_many_handles_empty_and_constant_polys(rng):
    from nullag.polyform import PolyMatrixFn

    polys = [PolyMatrixFn((2, 2)), PolyMatrixFn.constant((2, 2), 3)]
    out = eval_many(polys, rng.normal(size=(5, 2, 2)))
    assert np.array_equal(out, np.tile([0.0, 3.0], (5, 1)))


PROBE = (
    "import json, numpy as np\n"
    "from nullag import _kernels\n"
    "from nullag.qcb_num import qcb_deficit\n"
    "from nullag.polyform import det_poly\n"
    "r = qcb_deficit(det_poly(2), np.zeros((2, 2)), [0.0, 1.0], h=4, trials=2)\n"
    "print(json.dumps({'name': _kernels.kernels.name, 'numba': _kernels.numba_kernels is not None,"
    " 'estimate': r.estimate}))\n"
)


def _probe(**env):
    full = dict(os.environ)
    for key in ("NULLAG_DISABLE_NUMBA", "NULLAG_NO_NUMBA_IMPORT"):
        full.pop(key, None)
    full.update(env)
    proc = subprocess.run([sys.executable, "-c", PROBE], capture_output=True, text=True, env=full, timeout=300)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout)


def test_environment_flags_select_the_backend():
    disabled = _probe(NULLAG_DISABLE_NUMBA="1")
    assert disabled["name"] == "numpy"
    missing = _probe(NULLAG_NO_NUMBA_IMPORT="1")
    assert missing["name"] == "numpy" and missing["numba"] is False
    assert missing["estimate"] == pytest.approx(disabled["estimate"], rel=1e-12)
    if _kernels.numba_kernels is not None:
        default = _probe()
        assert default["name"] == "numba"
        assert default["estimate"] == pytest.approx(disabled["estimate"], rel=1e-9)
