import math

import numpy as np
import pytest
from scipy import integrate

from nullag.conc_lab import (
    ExperimentReport,
    TestFunction,
    _slab_integral_closed,
    anisotropic_norm,
    constant_sequence,
    counterexample_sequence,
    default_test_functions,
    det_concentration_sequence,
    detprime_concentration_sequence,
    grundmann_moeller,
    higher_integrability_experiment,
    linear_fit,
    monomial_test_functions,
    richardson_limit,
    slab_integral,
    unit_ball_volume,
    weak_continuity_experiment,
)
from nullag.errors import InvalidArgument, UnsupportedDimension
from nullag.mesh import P1Field, build_standard_domain
from nullag.polyform import det_poly, detprime_poly, sqnorm_poly


def fd_jacobian(u, x, step=1e-7):
    n = x.shape[1]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        cols.append((u(x + e) - u(x - e)) / (2 * step))
    return np.stack(cols, axis=2)


def test_trigonometric_profile_integral_by_quadrature():
    # det grad w from central differences of w itself, integrated adaptively
    seq = det_concentration_sequence(1)

    def det_fd(y, x):
        J = fd_jacobian(seq.u, np.array([[x, y]]), step=1e-6)[0]
        return J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]

    val, err = integrate.dblquad(det_fd, 0, 1, 0, 1, epsabs=1e-10)
    assert val == pytest.approx(-4.0 / 3.0, abs=1e-7)


@pytest.mark.parametrize("factory,n", [(det_concentration_sequence, 2), (detprime_concentration_sequence, 3)])
def test_sequence_gradients_match_finite_differences(rng, factory, n):
    seq = factory(4)
    lo, hi = np.array(seq.support[0]), np.array(seq.support[1])
    x = lo + (hi - lo) * (0.05 + 0.9 * rng.random((100, n)))
    G = seq.grad(x)
    fd = fd_jacobian(seq.u, x)
    assert np.all(np.abs(G - fd) <= 1e-5 * np.maximum(1.0, np.abs(G)))
    outside = np.full((1, n), 0.05)
    assert np.all(seq.grad(outside) == 0) and np.all(seq.u(outside) == 0)


def _cubature(fun, lo, hi, rtol=1e-11, atol=1e-12):
    res = integrate.cubature(fun, np.asarray(lo, float), np.asarray(hi, float), rule="gk21", rtol=rtol, atol=atol,
                             max_subdivisions=50000)
    return float(res.estimate)


def test_gradient_norm_is_k_independent_and_field_shrinks():
    norms, masses, dets = [], [], []
    for k in (1, 2, 4, 8):
        seq = det_concentration_sequence(k)
        lo, hi = seq.support
        norms.append(_cubature(lambda x: np.sum(seq.grad(x) ** 2, axis=(1, 2)), lo, hi))
        masses.append(_cubature(lambda x: np.sum(seq.u(x) ** 2, axis=1), lo, hi))
        dets.append(_cubature(lambda x: np.linalg.det(seq.grad(x)), lo, hi))
    assert np.allclose(norms, norms[0], rtol=1e-6)
    assert np.allclose(dets, -4.0 / 3.0, rtol=1e-6)
    ks = np.array([1, 2, 4, 8])
    assert np.allclose(np.array(masses) * ks**2, masses[0], rtol=1e-6)


def test_detprime_profile_has_zero_integral():
    seq = detprime_concentration_sequence(1)
    val = _cubature(lambda x: seq.det_prime(x), (0, 0, 0), (1, 1, 1))
    assert abs(val) < 1e-10


def test_counterexample_closed_forms():
    seq = counterexample_sequence(2, 10)
    t = np.array([0.01, 0.1, 0.3, -0.2])
    x = np.stack([np.full_like(t, 0.5 + 0.03), t], axis=1)
    want = 1.0 / (np.abs(t) * np.log(np.abs(t)) ** 2) * 10 / math.log(10)
    assert np.allclose(seq.det_prime(x), want, rtol=1e-12)
    assert np.allclose(seq.extras["det_prime"](x), want, rtol=1e-12)
    axis = counterexample_sequence(3, 10).grad(np.array([[0.5, 0.5, 0.2]]))[0]
    assert np.all(np.isfinite(axis)) and np.allclose(axis[:, :2], axis[0, 0] * np.eye(2))
    far = np.array([[0.9, 0.2]])
    assert seq.det_prime(far)[0] == 0.0 and seq.extras["det_prime"](far)[0] == 0.0


@pytest.mark.parametrize("n,k", [(2, 10), (3, 8), (3, 50)])
def test_counterexample_gradient_and_sign(rng, n, k):
    seq = counterexample_sequence(n, k)
    d = n - 1
    pts = []
    while len(pts) < 100:
        x = np.concatenate([rng.random(d), [rng.uniform(-0.45, 0.45)]])
        r = np.linalg.norm(x[:d] - 0.5)
        if abs(r - 1.0 / k) > 1e-3 and r > 1e-3 and abs(x[-1]) > 1e-2:
            pts.append(x)
    x = np.array(pts)
    G = seq.grad(x)
    fd = fd_jacobian(seq.u, x, step=1e-8)
    assert np.all(np.abs(G - fd) <= 1e-5 * np.maximum(1.0, np.abs(G)))
    dp = seq.det_prime(x)
    assert np.all(dp >= -1e-9 * np.maximum(1.0, np.abs(dp)))
    assert np.allclose(dp, seq.extras["det_prime"](x), rtol=1e-9, atol=1e-9)


def test_counterexample_rejects_small_k():
    with pytest.raises(InvalidArgument):
        counterexample_sequence(2, 2)
    with pytest.raises(InvalidArgument):
        det_concentration_sequence(0)


def test_det_concentration_not_weakly_continuous():
    rep = weak_continuity_experiment(det_poly(2), det_concentration_sequence, default_test_functions(2),
                                     [8, 16, 32, 64])
    assert rep.verdict == "not_weakly_continuous"
    one = next(s for s in rep.summaries if s["phi_id"] == "1")
    assert one["est_limit"] == pytest.approx(-4.0 / 3.0, rel=1e-9)
    # phi(x0) * (-4/3) for every test function
    for s in rep.summaries:
        phi = next(p for p in default_test_functions(2) if p.name == s["phi_id"])
        assert s["est_limit"] == pytest.approx(phi(np.array([[0.5, 1.0]]))[0] * -4.0 / 3.0, abs=1e-6)
    assert rep.flags["nonnegative_integrand"] is False


def test_detprime_concentration_weakly_continuous():
    rep = weak_continuity_experiment(detprime_poly(3), detprime_concentration_sequence, default_test_functions(3),
                                     [8, 16, 32, 64])
    assert rep.verdict == "weakly_continuous"
    assert all(abs(s["est_limit"]) < 1e-3 for s in rep.summaries)


def test_constant_sequence_of_boundary_nl():
    A = np.array([[0.3, -0.2, 0.5], [0.1, 0.4, -0.7]])

    def u(x):
        return np.stack([np.sin(x[:, 0]) * x[:, 2], x[:, 1] ** 2 + x[:, 0] * x[:, 2]], axis=1) + x @ A.T

    def grad(x):
        G = np.tile(A, (len(x), 1, 1))
        G[:, 0, 0] += np.cos(x[:, 0]) * x[:, 2]
        G[:, 0, 2] += np.sin(x[:, 0])
        G[:, 1, 1] += 2 * x[:, 1]
        G[:, 1, 0] += x[:, 2]
        G[:, 1, 2] += x[:, 0]
        return G

    rep = weak_continuity_experiment(detprime_poly(3), constant_sequence(3, 2, u, grad), default_test_functions(3),
                                     [4, 8, 16])
    assert rep.verdict == "weakly_continuous"
    for s in rep.summaries:
        assert s["gap"] < 1e-9


def test_test_function_validation():
    only_constant = [TestFunction("1", lambda x: np.ones(len(x)))]
    with pytest.raises(InvalidArgument):
        weak_continuity_experiment(det_poly(2), det_concentration_sequence, only_constant, [2, 4, 8])
    no_one = default_test_functions(2)[1:]
    with pytest.raises(InvalidArgument):
        weak_continuity_experiment(det_poly(2), det_concentration_sequence, no_one, [2, 4, 8])
    with pytest.raises(InvalidArgument):
        weak_continuity_experiment(det_poly(2), det_concentration_sequence, default_test_functions(2), [2, 4])


def test_quadrature_self_consistency():
    phis = default_test_functions(2)
    a = weak_continuity_experiment(det_poly(2), det_concentration_sequence, phis, [4, 8, 16], rtol=1e-8)
    b = weak_continuity_experiment(det_poly(2), det_concentration_sequence, phis, [4, 8, 16], rtol=5e-9)
    for ra, rb in zip(a.rows, b.rows):
        assert abs(ra["integral"] - rb["integral"]) < 1e-6


def test_p1_sequences():
    mesh = build_standard_domain(2, [0.0, 1.0], 8)
    # reference box is (0,1) x (-1,0); shift test functions accordingly
    phis = monomial_test_functions(2, 1) + [TestFunction("x1*x2", lambda x: x[:, 0] * x[:, 1])]

    def field(k):
        def vals(P):
            return np.stack([np.sin(np.pi * P[:, 0]) * (1 + P[:, 1]) / k, 0 * P[:, 0]], axis=1)
        return mesh.interpolate(vals)

    rep = weak_continuity_experiment(sqnorm_poly(2, 2), field, phis, [4, 8, 16, 32])
    assert rep.verdict == "weakly_continuous"
    # constant P1 sequence equals its own limit
    u = field(1)
    rep = weak_continuity_experiment(det_poly(2), lambda k: u, phis, [1, 2, 3], limit=u)
    assert rep.verdict == "weakly_continuous" and all(s["gap"] < 1e-12 for s in rep.summaries)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_grundmann_moeller_exact_on_monomials(n):
    s = 2  # degree 5
    bary, w = grundmann_moeller(n, s)
    assert w.sum() == pytest.approx(1.0, abs=1e-13)
    rng = np.random.default_rng(n)
    for _ in range(10):
        alpha = rng.multinomial(int(rng.integers(0, 6)), [1 / (n + 1)] * (n + 1))
        got = np.sum(w * np.prod(bary**alpha, axis=1))
        # average of a barycentric monomial over the simplex
        want = math.prod(math.factorial(a) for a in alpha) * math.factorial(n) / math.factorial(sum(alpha) + n)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_richardson_recovers_algebraic_limits():
    ks = np.array([8, 16, 32, 64])
    vals = 2.5 - 3.0 * ks**-1.5
    L, rate, r2, stable = richardson_limit(ks, vals)
    assert L == pytest.approx(2.5, abs=1e-12) and rate == pytest.approx(1.5) and r2 == pytest.approx(1.0)
    L, rate, r2, stable = richardson_limit(ks, np.full(4, 0.7))
    assert L == 0.7 and stable
    L, rate, r2, stable = richardson_limit(ks, [1.0, -1.0, 1.0, -1.0])
    assert not stable


def test_linear_fit():
    slope, intercept, r2 = linear_fit([0, 1, 2], [1, 3, 5])
    assert slope == pytest.approx(2) and intercept == pytest.approx(1) and r2 == pytest.approx(1)


@pytest.mark.parametrize("n,k", [(2, 8), (2, 512), (3, 16)])
def test_slab_integral_closed_form(n, k):
    for delta in (1e-2, 1e-4, 1e-6, 1e-12):
        val, err = slab_integral(n, k, 0.1, delta)
        assert val == pytest.approx(_slab_integral_closed(n, k, delta, 0.1), rel=1e-10)
        assert err < 1e-6


def test_slab_integral_against_direct_x_quadrature():
    n, k, eps, delta = 2, 16, 0.1, 1e-3
    seq = counterexample_sequence(n, k)
    omega = unit_ball_volume(n - 1)

    def slice_integrand(t):
        s = seq.extras["det_prime"](np.array([[0.5, t]]))[0]
        return omega * k ** -(n - 1) * s * max(0.0, math.log(s))

    direct, _ = integrate.quad(slice_integrand, delta, eps, limit=200, epsrel=1e-12)
    assert slab_integral(n, k, eps, delta)[0] == pytest.approx(direct, rel=1e-9)


def test_slab_integral_monotone_and_unbounded():
    deltas = [10.0**-j for j in range(2, 40, 3)]
    vals = [slab_integral(2, 8, 0.1, d)[0] for d in deltas]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    # logarithmic growth in ln ln(1/delta): difference over the leading term tends to 1
    omega = unit_ball_volume(1)
    ratios = []
    for d1, d2 in [(1e-10, 1e-20), (1e-50, 1e-100), (1e-150, 1e-300)]:
        diff = slab_integral(2, 8, 0.1, d2)[0] - slab_integral(2, 8, 0.1, d1)[0]
        lead = omega / math.log(8) * (math.log(math.log(1 / d2)) - math.log(math.log(1 / d1)))
        ratios.append(diff / lead)
    assert abs(ratios[-1] - 1) < abs(ratios[0] - 1)
    assert abs(ratios[-1] - 1) < 0.1


def test_slab_integral_argument_checks():
    with pytest.raises(InvalidArgument):
        slab_integral(2, 8, 0.1, 0.2)
    with pytest.raises(InvalidArgument):
        slab_integral(2, 3, 0.3, 0.01)


def test_anisotropic_norm():
    for k in (8, 64, 512):
        assert anisotropic_norm(2, k) == pytest.approx((2 / math.log(2)) * (2 / math.log(k)), rel=1e-10)
    assert anisotropic_norm(2, 64) < anisotropic_norm(2, 8)
    vals = [anisotropic_norm(3, k) for k in (8, 64, 512, 4096)]
    assert max(vals) < 2 * math.pi * 2 / math.log(2) * 1.5
    with pytest.raises(UnsupportedDimension):
        anisotropic_norm(4, 8)


def test_anisotropic_norm_by_direct_quadrature():
    # n = 3, cross-section integral of |grad' (h(r) x'/r)|^2 over the unit square
    k = 8
    seq = counterexample_sequence(3, k)
    t0 = 0.25
    g2 = 1.0 / (t0 * math.log(t0) ** 2)

    def cross(r, theta):
        pts = np.array([[0.5 + r * math.cos(theta), 0.5 + r * math.sin(theta), t0]])
        return r * float(np.sum(seq.grad(pts)[0, :, :2] ** 2)) / g2

    def edge(theta):
        return 0.5 / max(abs(math.cos(theta)), abs(math.sin(theta)))

    # polar coordinates about the tube axis, split at the tube radius
    inner = 0.0
    cuts = [j * math.pi / 4 for j in range(9)]
    for a, b in zip(cuts, cuts[1:]):
        inner += integrate.dblquad(cross, a, b, 0.0, 1.0 / k, epsrel=1e-9)[0]
        inner += integrate.dblquad(cross, a, b, 1.0 / k, edge, epsrel=1e-9)[0]
    gfactor = 2 / math.log(2)
    assert gfactor * inner == pytest.approx(anisotropic_norm(3, k), rel=1e-4)


def test_higher_integrability_report_and_csv():
    rep = higher_integrability_experiment(2, [8, 64], 0.1, [1e-2, 1e-3, 1e-4, 1e-5])
    assert rep.verdict == "divergence_confirmed"
    assert isinstance(rep, ExperimentReport)
    lines = rep.to_csv().strip().splitlines()
    assert lines[0] == "k,phi_id,delta,integral,est_limit,fit_slope,r2,verdict"
    assert len(lines) == 1 + 8
    tube_only = higher_integrability_experiment(3, [8, 16], 0.1, [1e-2, 1e-4])
    assert tube_only.summaries[0]["anisotropic_norm"] is not None
