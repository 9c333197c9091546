from fractions import Fraction

import numpy as np
import pytest

from nullag.errors import InvalidArgument, OptimizationFailure
from nullag.mesh import P1Field, build_standard_domain
from nullag.nullag_core import boundary_nl_basis
from nullag.polyform import PolyMatrixFn, det_poly, detprime_poly, sqnorm_poly
from nullag.qcb_num import (
    deficit,
    energy,
    evaluate_p1,
    gamma_term,
    interior_qc_deficit,
    minimize_bb,
    prolong,
    qcb_deficit,
    qcb_envelope0,
)


def _random_field(rng, mesh, m, scale=1.0):
    return P1Field(mesh, rng.uniform(-scale, scale, size=(mesh.nverts, m)))


def double_well():
    s = sqnorm_poly(1, 2)
    return (s - 1) ** 2


def test_energy_of_zero_field(rng):
    mesh = build_standard_domain(2, [0.6, 0.8], 4)
    F = rng.normal(size=(2, 2))
    f = sqnorm_poly(2, 2) + det_poly(2)
    assert energy(f, F, mesh.zero_field(2)) == pytest.approx(float(np.sum(F**2) + np.linalg.det(F)), rel=1e-13)


def test_energy_linear_with_zero_boundary(rng):
    mesh = build_standard_domain(3, None, 4, all_dirichlet=True)
    beta = np.array([[1, -2, 3], [0, 5, -1]])
    lin = PolyMatrixFn.linear(beta)
    F = rng.normal(size=(2, 3))
    u = _random_field(rng, mesh, 2)
    assert energy(lin, F, u) == pytest.approx(float(np.sum(beta * F)), abs=1e-12)


def test_energy_accepts_callables(rng):
    mesh = build_standard_domain(2, None, 4)
    u = _random_field(rng, mesh, 2)
    F = np.eye(2)
    via_callable = energy(lambda X: np.sum(X**2, axis=(1, 2)), F, u)
    assert via_callable == pytest.approx(energy(sqnorm_poly(2, 2), F, u), rel=1e-13)


def test_gamma_term_examples(rng):
    mesh = build_standard_domain(2, [0.0, 1.0], 2)
    assert gamma_term([1.0, 2.0], mesh.zero_field(2)) == 0.0
    assert gamma_term([0.0, 0.0], _random_field(rng, mesh, 2)) == 0.0
    # hat function of height 1 at the middle of the unit edge: integral 1/2
    vals = np.zeros((mesh.nverts, 2))
    mid = np.flatnonzero(~mesh.dirichlet & np.isclose(mesh.vertices[:, 1], 0.0))
    assert mid.size == 1
    vals[mid, 0] = 1.0
    assert gamma_term([1.0, 0.0], P1Field(mesh, vals)) == pytest.approx(0.5, abs=1e-15)


def test_gamma_term_exact_for_affine_traces(rng):
    # the trace of a P1 field is affine per facet, so vertex averages are exact
    mesh = build_standard_domain(3, [0.0, 0.0, 1.0], 4)
    u = _random_field(rng, mesh, 1)
    q = np.array([1.7])
    total = 0.0
    for face, area in zip(mesh.gamma_faces, mesh.gamma_areas):
        total += area * u.values[face, 0].mean() * q[0]
    assert gamma_term(q, u) == pytest.approx(total, rel=1e-13)


def test_boundary_nl_deficit_vanishes_for_every_field(rng):
    mesh = build_standard_domain(3, [0.0, 0.0, 1.0], 4)
    v = detprime_poly(3)
    for _ in range(10):
        F = rng.normal(size=(2, 3))
        u = _random_field(rng, mesh, 2)
        assert abs(deficit(v, F, u)) <= 1e-8
    report = qcb_deficit(v, rng.normal(size=(2, 3)), [0.0, 0.0, 1.0], h=4, trials=3, seed=1)
    assert abs(report.estimate) <= 1e-6


def test_boundary_nl_basis_deficit_rotated(rng):
    rho = (Fraction(2, 3), Fraction(-1, 3), Fraction(2, 3))
    mesh = build_standard_domain(3, [float(r) for r in rho], 4)
    for f in boundary_nl_basis(2, 3, rho):
        u = _random_field(rng, mesh, 2)
        assert abs(deficit(f, rng.normal(size=(2, 3)), u)) <= 1e-10


def test_convex_integrand_has_no_violation(rng):
    v = sqnorm_poly(2, 2)
    for _ in range(2):
        report = qcb_deficit(v, rng.normal(size=(2, 2)), [0.6, 0.8], h=4, trials=3, seed=2)
        assert report.estimate >= -1e-8
        assert not report.violation


def test_det_boundary_violation_small_mesh():
    report = qcb_deficit(det_poly(2), np.zeros((2, 2)), [0.0, 1.0], h=8, trials=4, seed=0)
    assert report.estimate <= -1.0
    assert report.violation
    assert deficit(det_poly(2), np.zeros((2, 2)), report.certificate, report.q) == pytest.approx(
        report.estimate, abs=1e-9)


def test_envelope0_examples():
    assert qcb_envelope0(detprime_poly(3), [0.0, 0.0, 1.0], h=3, trials=2).estimate == 0.0
    assert qcb_envelope0(sqnorm_poly(2, 2), [0.0, 1.0], h=4, trials=2).estimate == 0.0
    rep = qcb_envelope0(det_poly(2), [0.0, 1.0], h=8, trials=3)
    assert rep.estimate < 0
    assert energy(det_poly(2), np.zeros((2, 2)), rep.certificate) < 0
    with pytest.raises(InvalidArgument):
        qcb_envelope0(sqnorm_poly(2, 2) + 1, [0.0, 1.0], h=4, trials=1)


def test_interior_examples(rng):
    for _ in range(2):
        F = rng.normal(size=(2, 2))
        assert abs(interior_qc_deficit(det_poly(2), F, h=4, trials=2).estimate) <= 1e-8
    assert interior_qc_deficit(sqnorm_poly(2, 2), rng.normal(size=(2, 2)), h=4, trials=2).estimate >= -1e-8
    rep = interior_qc_deficit(double_well(), np.zeros((1, 2)), h=16, trials=4)
    assert rep.estimate < -0.1


def test_rescaling_consistency(rng):
    mesh = build_standard_domain(2, [0.6, 0.8], 4)
    u = _random_field(rng, mesh, 2)
    for v, p in [(det_poly(2), 2), (sqnorm_poly(2, 2) ** 2, 4)]:
        base = energy(v, np.zeros((2, 2)), u)
        for t in (Fraction(1, 3), Fraction(5, 2)):
            scaled = energy(v, np.zeros((2, 2)), u.scaled(float(t)))
            assert scaled == pytest.approx(float(t) ** p * base, rel=1e-10)


def test_prolongation_is_exact_on_nested_meshes(rng):
    coarse = build_standard_domain(3, [0.0, 0.6, 0.8], 2)
    fine = build_standard_domain(3, [0.0, 0.6, 0.8], 4)
    u = _random_field(rng, coarse, 2)
    w = prolong(u, fine)
    v = sqnorm_poly(2, 3) ** 2
    assert energy(v, np.ones((2, 3)), w) == pytest.approx(energy(v, np.ones((2, 3)), u), rel=1e-12)
    assert np.allclose(evaluate_p1(u, coarse.vertices), u.values, atol=1e-13)


def test_refinement_never_increases_the_minimum():
    v = double_well()
    coarse = interior_qc_deficit(v, np.zeros((1, 2)), h=4, trials=3, seed=0)
    fine = interior_qc_deficit(v, np.zeros((1, 2)), h=8, trials=3, seed=0, initial=coarse.certificate)
    assert fine.estimate <= coarse.estimate + 1e-6


def test_certificate_reproduces_estimate(rng):
    v = sqnorm_poly(2, 2) - det_poly(2) * 3
    F = rng.normal(size=(2, 2))
    rep = qcb_deficit(v, F, [0.6, 0.8], h=6, trials=3)
    assert deficit(v, F, rep.certificate) == pytest.approx(rep.estimate, abs=1e-9)


def test_all_trials_diverging_raises():
    v = sqnorm_poly(1, 2) ** 4
    with pytest.raises(OptimizationFailure):
        qcb_deficit(v, np.full((1, 2), 1e100), [0.0, 1.0], h=2, trials=2)


def test_minimize_bb_on_quadratic():
    A = np.diag([1.0, 10.0, 100.0])
    b = np.array([1.0, -2.0, 3.0])
    x, f, it, status = minimize_bb(lambda z: (0.5 * z @ A @ z - b @ z, A @ z - b), np.zeros(3), maxiter=500)
    assert status == "converged"
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-8)


def test_thread_count_does_not_change_results(monkeypatch):
    v = double_well()
    monkeypatch.setenv("NULLAG_THREADS", "1")
    a = interior_qc_deficit(v, np.zeros((1, 2)), h=4, trials=4, seed=3)
    monkeypatch.setenv("NULLAG_THREADS", "3")
    b = interior_qc_deficit(v, np.zeros((1, 2)), h=4, trials=4, seed=3)
    assert a.estimate == b.estimate and a.best_trial == b.best_trial
    assert np.array_equal(a.certificate.values, b.certificate.values)


def test_report_json_fields():
    rep = qcb_deficit(det_poly(2), np.zeros((2, 2)), [0.0, 1.0], h=4, trials=2)
    doc = rep.to_json()
    for key in ("estimate", "trials", "converged_trials", "mesh_resolution", "certificate", "unbounded_below"):
        assert key in doc
    assert "certificate" not in rep.to_json(include_certificate=False)
