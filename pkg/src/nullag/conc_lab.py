"""Concentration experiments: explicit oscillating/concentrating sequences,
weak-continuity tests against families of test functions and the logarithmic
divergence of an L log L type integral along a radial sequence.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import InvalidArgument, UnsupportedDimension
from .mesh import P1Field
from .polyform import PolyMatrixFn

KINDS = ("boundary_concentration", "interior_concentration", "counterexample", "constant")


# ---------------------------------------------------------------- sequences


@dataclass(frozen=True, eq=False)
class AnalyticSequence:
    """One member u_k of a sequence with closed-form field and gradient.

    ``u`` maps points (N, n) to values (N, m) and ``grad`` to (N, m, n).
    ``support`` is a box (lower, upper) outside of which the gradient vanishes;
    ``None`` means the whole domain. ``limit_grad`` is the gradient of the weak
    limit, ``None`` for the zero field.
    """

    kind: str
    n: int
    m: int
    k: int
    domain: tuple
    u: Callable
    grad: Callable
    support: tuple | None = None
    x0: tuple | None = None
    limit_grad: Callable | None = None
    extras: dict = field(default_factory=dict)

    def det_prime(self, x) -> np.ndarray:
        G = self.grad(np.atleast_2d(x))
        return np.linalg.det(G[:, :, : self.n - 1])


def _box_squeeze(x0, k):
    """Affine map s_k(x) = k (x - x0) + x0_ref sending the 1/k box at x0 onto the unit box."""
    x0 = np.asarray(x0, dtype=float)
    ref = np.where(x0 >= 1.0, 1.0, np.where(x0 <= 0.0, 0.0, 0.5))
    lower = x0 - ref / k
    upper = lower + 1.0 / k
    return (lambda x: k * (x - x0) + ref), (tuple(lower), tuple(upper)), ref


def _w2(X):
    x, y = X[:, 0], X[:, 1]
    return np.stack([np.sin(np.pi * x) * y, -np.sin(2 * np.pi * x) * y], axis=1)


def _w2_grad(X):
    x, y = X[:, 0], X[:, 1]
    G = np.empty((len(X), 2, 2))
    G[:, 0, 0] = np.pi * np.cos(np.pi * x) * y
    G[:, 0, 1] = np.sin(np.pi * x)
    G[:, 1, 0] = -2 * np.pi * np.cos(2 * np.pi * x) * y
    G[:, 1, 1] = -np.sin(2 * np.pi * x)
    return G


def _w3(X):
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    sx, sy = np.sin(np.pi * x), np.sin(np.pi * y)
    return np.stack([z * sx * sy, z**2 * np.sin(2 * np.pi * x) * sy * (1 + y)], axis=1)


def _w3_grad(X):
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    pi = np.pi
    sx, cx, sy, cy = np.sin(pi * x), np.cos(pi * x), np.sin(pi * y), np.cos(pi * y)
    s2, c2 = np.sin(2 * pi * x), np.cos(2 * pi * x)
    G = np.empty((len(X), 2, 3))
    G[:, 0, 0] = z * pi * cx * sy
    G[:, 0, 1] = z * sx * pi * cy
    G[:, 0, 2] = sx * sy
    G[:, 1, 0] = z**2 * 2 * pi * c2 * sy * (1 + y)
    G[:, 1, 1] = z**2 * s2 * (pi * cy * (1 + y) + sy)
    G[:, 1, 2] = 2 * z * s2 * sy * (1 + y)
    return G


def _inside(x, box):
    lo, hi = np.asarray(box[0]), np.asarray(box[1])
    return np.all((x >= lo) & (x <= hi), axis=1)


def _squeezed_sequence(kind, k, x0, profile, profile_grad, amplitude, m):
    n = len(x0)
    s, box, _ = _box_squeeze(x0, k)
    gscale = amplitude * k

    def u(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((len(x), m))
        ins = _inside(x, box)
        out[ins] = amplitude * profile(s(x[ins]))
        return out

    def grad(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((len(x), m, n))
        ins = _inside(x, box)
        out[ins] = gscale * profile_grad(s(x[ins]))
        return out

    domain = (tuple([0.0] * n), tuple([1.0] * n))
    return AnalyticSequence(kind, n, m, k, domain, u, grad, support=box, x0=tuple(float(t) for t in x0),
                            extras={"amplitude": amplitude})


def det_concentration_sequence(k: int) -> AnalyticSequence:
    """u_k = w(s_k x) on the unit square, concentrating at the top-edge point (1/2, 1).

    w(X, Y) = (sin(pi X) Y, -sin(2 pi X) Y) vanishes on the three sides of the
    unit square other than the top, so u_k is Lipschitz after extension by 0.
    The integral of det grad u_k equals that of det grad w, -4/3, for every k.
    """
    if int(k) != k or k < 1:
        raise InvalidArgument("k must be a positive integer")
    return _squeezed_sequence("boundary_concentration", int(k), (0.5, 1.0), _w2, _w2_grad, 1.0, 2)


def detprime_concentration_sequence(k: int) -> AnalyticSequence:
    """Concentration at the centre of the top face of the unit cube, R^3 -> R^2.

    u_k = k^(1/2) W(s_k x) keeps the L^2 norm of the gradient fixed; the
    profile W vanishes on the lateral faces and the bottom of the cube.
    """
    if int(k) != k or k < 1:
        raise InvalidArgument("k must be a positive integer")
    return _squeezed_sequence("boundary_concentration", int(k), (0.5, 0.5, 1.0), _w3, _w3_grad,
                              math.sqrt(k), 2)


def constant_sequence(n: int, m: int, u: Callable, grad: Callable, domain=None) -> Callable:
    """Family k -> the same field, whose weak limit is itself."""
    domain = domain or (tuple([0.0] * n), tuple([1.0] * n))

    def member(k):
        return AnalyticSequence("constant", n, m, int(k), domain, u, grad, support=None, limit_grad=grad)

    return member


# --- radial sequence with logarithmic concentration on a slab


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _g(t, n):
    a = np.abs(t)
    return (a * np.log(a) ** 2) ** (-1.0 / (n - 1))


def _g_prime(t, n):
    a = np.abs(t)
    la = np.log(a)
    base = a * la**2
    return -(1.0 / (n - 1)) * base ** (-1.0 / (n - 1) - 1) * np.sign(t) * (la**2 + 2 * la)


def counterexample_sequence(n: int, k: int) -> AnalyticSequence:
    """u_k(x', t) = g(t) h_k(|x' - c|) (x' - c)/|x' - c| on (0,1)^(n-1) x (-1/2, 1/2).

    g(t) = (|t| ln^2 |t|)^(-1/(n-1)), h_k(r) = k (ln k)^(-1/(n-1)) r for
    r < 1/k and (ln k)^(-1/(n-1)) beyond; c is the centre of the cross
    section. det' grad u_k = g^(n-1) k^(n-1) / ln k inside the tube and 0 outside.
    """
    if n < 2:
        raise InvalidArgument("the radial sequence needs n >= 2")
    if int(k) != k or k <= 2:
        raise InvalidArgument("k must be an integer >= 3 (ln k > 1)")
    k = int(k)
    d = n - 1
    c = np.full(d, 0.5)
    lk = math.log(k) ** (-1.0 / d)

    def parts(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = x[:, :d] - c
        r = np.linalg.norm(y, axis=1)
        inside = r < 1.0 / k
        h = np.where(inside, k * lk * r, lk)
        hp = np.where(inside, k * lk, 0.0)
        # on the axis h vanishes linearly, so any direction gives the same limit
        safe = np.where(r > 0, r, 1.0)
        yhat = np.where(r[:, None] > 0, y / safe[:, None], 0.0)
        return x, y, r, h, hp, yhat

    def u(x):
        x, y, r, h, hp, yhat = parts(x)
        return _g(x[:, -1], n)[:, None] * h[:, None] * yhat

    def grad(x):
        x, y, r, h, hp, yhat = parts(x)
        t = x[:, -1]
        P = yhat[:, :, None] * yhat[:, None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(r > 0, h / r, k * lk)
        DH = hp[:, None, None] * P + ratio[:, None, None] * (np.eye(d)[None] - P)
        G = np.empty((len(x), d, n))
        G[:, :, :d] = _g(t, n)[:, None, None] * DH
        G[:, :, d] = _g_prime(t, n)[:, None] * h[:, None] * yhat
        return G

    def det_prime_closed(x):
        x, y, r, h, hp, yhat = parts(x)
        return np.where(r < 1.0 / k, _g(x[:, -1], n) ** d * k**d / math.log(k), 0.0)

    domain = (tuple([0.0] * d + [-0.5]), tuple([1.0] * d + [0.5]))
    return AnalyticSequence("counterexample", n, d, k, domain, u, grad, support=None,
                            x0=None, extras={"det_prime": det_prime_closed, "centre": tuple(c)})


# ---------------------------------------------------------------- test functions


@dataclass(frozen=True)
class TestFunction:
    name: str
    fn: Callable  # (N, n) -> (N,)

    __test__ = False  # not a pytest class

    def __call__(self, x):
        return np.broadcast_to(np.asarray(self.fn(np.atleast_2d(x)), dtype=float), (len(np.atleast_2d(x)),))


def default_test_functions(n: int) -> list:
    """The constant 1 and a few low-degree polynomials in x."""
    out = [TestFunction("1", lambda x: np.ones(len(x)))]
    out.append(TestFunction("x1", lambda x: x[:, 0]))
    out.append(TestFunction(f"x{n}", lambda x: x[:, -1]))
    out.append(TestFunction(f"x1*x{n}", lambda x: x[:, 0] * x[:, -1]))
    out.append(TestFunction("(x1-1/2)^2", lambda x: (x[:, 0] - 0.5) ** 2))
    return out


def monomial_test_functions(n: int, degree: int = 2) -> list:
    out = [TestFunction("1", lambda x: np.ones(len(x)))]
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(range(n), deg):
            name = "*".join(f"x{i + 1}" for i in combo)
            out.append(TestFunction(name, lambda x, c=combo: np.prod(x[:, list(c)], axis=1)))
    return out


def _validate_phi(phi_set, domain):
    if not phi_set:
        raise InvalidArgument("empty test-function set")
    rng = np.random.default_rng(12345)
    lo, hi = np.asarray(domain[0]), np.asarray(domain[1])
    pts = lo + (hi - lo) * rng.random((64, len(lo)))
    has_one, nonconst = False, 0
    for phi in phi_set:
        vals = np.asarray(phi(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise InvalidArgument(f"test function {phi.name!r} is not finite on the domain")
        if np.all(vals == 1.0):
            has_one = True
        elif np.ptp(vals) > 1e-12:
            nonconst += 1
    if not has_one:
        raise InvalidArgument("the test-function set must contain the constant 1")
    if nonconst < 3:
        raise InvalidArgument("the test-function set needs at least 3 nonconstant functions")


# ---------------------------------------------------------------- simplex quadrature


def grundmann_moeller(n: int, s: int):
    """Grundmann-Moeller rule of degree 2s+1 on the unit simplex.

    Returns (barycentric points (Q, n+1), weights (Q,)) with weights summing to
    1, i.e. the rule computes averages over the simplex.
    """
    d = 2 * s + 1
    pts, wts = [], []
    for i in range(s + 1):
        w = (-1) ** i * 2.0 ** (-2 * s) * (d + n - 2 * i) ** d / (math.factorial(i) * math.factorial(d + n - i))
        for beta in _compositions(s - i, n + 1):
            pts.append([(2 * b + 1) / (d + n - 2 * i) for b in beta])
            wts.append(w)
    wts = np.array(wts) * math.factorial(n)
    return np.array(pts), wts


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------- reports


@dataclass
class ExperimentReport:
    kind: str
    rows: list  # dicts with k, phi_id/delta, integral
    summaries: list  # per phi (or per k) fit diagnostics
    verdict: str
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        """Plain JSON data; non-finite floats (e.g. an undefined rate) become None."""
        return _json_safe({"kind": self.kind, "verdict": self.verdict, "rows": self.rows,
                           "summaries": self.summaries, "flags": self.flags, "notes": self.notes,
                           "config": self.config})

    CSV_COLUMNS = ("k", "phi_id", "delta", "integral", "est_limit", "fit_slope", "r2", "verdict")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({c: _csv_value(row.get(c, "")) for c in self.CSV_COLUMNS} | {"verdict": self.verdict})
        return buf.getvalue()


def _json_safe(x):
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _csv_value(x):
    if isinstance(x, float):
        return repr(x)
    return x


def r_squared(x, y, slope, intercept) -> float:
    y = np.asarray(y, dtype=float)
    resid = y - (slope * np.asarray(x, dtype=float) + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot <= 1e-24 * max(1.0, float(np.max(np.abs(y))) ** 2):
        return 1.0 if ss_res <= 1e-24 * max(1.0, float(np.max(np.abs(y))) ** 2) else 0.0
    return 1.0 - ss_res / ss_tot


def linear_fit(x, y):
    """Least-squares line; returns (slope, intercept, R^2)."""
    slope, intercept = np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)
    return float(slope), float(intercept), r_squared(x, y, slope, intercept)


def richardson_limit(ks, values):
    """Extrapolate I(k) = L + C k^(-a) from the last three samples.

    Returns (limit, rate a, R^2 of the fitted model over all samples, stable).
    A sequence that is constant to rounding is its own limit.
    """
    ks = np.asarray(ks, dtype=float)
    vals = np.asarray(values, dtype=float)
    if len(ks) < 3:
        raise InvalidArgument("Richardson extrapolation needs at least three k values")
    k1, k2, k3 = ks[-3:]
    i1, i2, i3 = vals[-3:]
    d1, d2 = i2 - i1, i3 - i2
    scale = max(1.0, float(np.max(np.abs(vals))))
    if abs(d1) <= 1e-13 * scale and abs(d2) <= 1e-13 * scale:
        return float(i3), math.inf, 1.0, True
    ratio = d2 / d1 if d1 != 0 else math.inf
    if not (0 < ratio < 1):
        return float(i3), float("nan"), 0.0, False

    def h(a):
        return (k3**-a - k2**-a) / (k2**-a - k1**-a) - ratio

    lo, hi = 1e-6, 60.0
    if h(lo) * h(hi) > 0:
        return float(i3), float("nan"), 0.0, False
    a = optimize.brentq(h, lo, hi, xtol=1e-14)
    C = d2 / (k3**-a - k2**-a)
    L = i3 - C * k3**-a
    r2 = r_squared(ks**-a, vals, C, L)
    return float(L), float(a), float(r2), True


# ---------------------------------------------------------------- weak continuity


def _f_values(f, G):
    if isinstance(f, PolyMatrixFn):
        return f.evaluate_batch(G)
    return np.asarray(f(G), dtype=float)


def _cubature(fun, lo, hi, rtol, atol):
    res = integrate.cubature(fun, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float),
                             rule="gk21", rtol=rtol, atol=atol, max_subdivisions=20000)
    return np.atleast_1d(res.estimate), np.atleast_1d(res.error), res.status


def _integrate_analytic(f, seq: AnalyticSequence, phis, rtol, atol, tracker):
    """Integrals of phi f(grad u_k) over the domain for every phi at once."""
    f0 = float(_f_values(f, np.zeros((1, seq.m, seq.n)))[0])

    def phi_matrix(x):
        return np.stack([phi(x) for phi in phis], axis=1)

    def body(x):
        fv = _f_values(f, seq.grad(x))
        tracker["min_f"] = min(tracker["min_f"], float(np.min(fv)))
        return phi_matrix(x) * (fv - f0)[:, None]

    box = seq.support if seq.support is not None else seq.domain
    est, err, status = _cubature(body, box[0], box[1], rtol, atol)
    ok = status == "converged"
    if f0 != 0.0:
        tracker["min_f"] = min(tracker["min_f"], f0)
        base, berr, bstatus = _cubature(phi_matrix, seq.domain[0], seq.domain[1], rtol, atol)
        est = est + f0 * base
        err = err + abs(f0) * berr
        ok = ok and bstatus == "converged"
    return est, err, ok


def _target_analytic(f, seq: AnalyticSequence, phis, rtol, atol):
    def phi_matrix(x):
        return np.stack([phi(x) for phi in phis], axis=1)

    if seq.limit_grad is None:
        f0 = float(_f_values(f, np.zeros((1, seq.m, seq.n)))[0])
        if f0 == 0.0:
            return np.zeros(len(phis)), True
        est, _, status = _cubature(phi_matrix, seq.domain[0], seq.domain[1], rtol, atol)
        return f0 * est, status == "converged"
    est, _, status = _cubature(lambda x: phi_matrix(x) * _f_values(f, seq.limit_grad(x))[:, None],
                               seq.domain[0], seq.domain[1], rtol, atol)
    return est, status == "converged"


def _integrate_p1(f, u: P1Field, phis, tracker, degree_s=2):
    mesh = u.mesh
    bary, w = grundmann_moeller(mesh.n, degree_s)
    P = mesh.vertices[mesh.simplices]  # (E, n+1, n)
    pts = np.einsum("qa,ead->eqd", bary, P).reshape(-1, mesh.n)
    fv = _f_values(f, u.element_gradients())
    tracker["min_f"] = min(tracker["min_f"], float(np.min(fv)))
    out = np.empty(len(phis))
    for j, phi in enumerate(phis):
        avg = phi(pts).reshape(len(P), -1) @ w
        out[j] = float(np.sum(mesh.volumes * fv * avg))
    return out


def weak_continuity_experiment(f, seq, phi_set, k_list, limit=None, rtol: float = 1e-10,
                               atol: float = 1e-11) -> ExperimentReport:
    """Test whether int phi f(grad u_k) converges to int phi f(grad u) for every phi.

    ``seq`` maps k to an :class:`AnalyticSequence` (adaptive cubature) or to a
    :class:`P1Field` (exact per-element sums; ``limit`` is then the limit field,
    zero by default). Limits are extrapolated from the last three k values.
    """
    ks = sorted(int(k) for k in k_list)
    if len(ks) < 3:
        raise InvalidArgument("at least three k values are needed")
    phis = list(phi_set)
    tracker = {"min_f": math.inf}
    rows, table, quad_ok, quad_err = [], [], True, 0.0
    target = None
    for k in ks:
        member = seq(k)
        if isinstance(member, AnalyticSequence):
            if target is None:
                _validate_phi(phis, member.domain)
                target, tok = _target_analytic(f, member, phis, rtol, atol)
                quad_ok = quad_ok and tok
            vals, err, ok = _integrate_analytic(f, member, phis, rtol, atol, tracker)
            quad_ok = quad_ok and ok
            quad_err = max(quad_err, float(np.max(err)))
        elif isinstance(member, P1Field):
            if target is None:
                lo = member.mesh.vertices.min(axis=0)
                hi = member.mesh.vertices.max(axis=0)
                _validate_phi(phis, (lo, hi))
                ref = limit if limit is not None else member.mesh.zero_field(member.m)
                target = _integrate_p1(f, ref, phis, {"min_f": math.inf})
            vals = _integrate_p1(f, member, phis, tracker)
        else:
            raise InvalidArgument("sequence members must be AnalyticSequence or P1Field instances")
        table.append(vals)
        for phi, v in zip(phis, vals):
            rows.append({"k": k, "phi_id": phi.name, "integral": float(v)})

    table = np.array(table)
    summaries = []
    all_within, some_violation = True, False
    for j, phi in enumerate(phis):
        L, rate, r2, stable = richardson_limit(ks, table[:, j])
        tgt = float(target[j])
        tol = max(1e-3, 1e-2 * abs(tgt))
        gap = abs(L - tgt)
        within = gap <= tol and stable
        violated = gap > 5 * tol and stable and r2 >= 0.99
        all_within = all_within and within
        some_violation = some_violation or violated
        summaries.append({"phi_id": phi.name, "est_limit": L, "target": tgt, "rate": rate, "r2": r2,
                          "stable": stable, "tolerance": tol, "gap": gap})
    for row in rows:
        s = next(s for s in summaries if s["phi_id"] == row["phi_id"])
        row.update(est_limit=s["est_limit"], r2=s["r2"])

    if not quad_ok:
        verdict = "inconclusive"
    elif all_within:
        verdict = "weakly_continuous"
    elif some_violation:
        verdict = "not_weakly_continuous"
    else:
        verdict = "inconclusive"
    flags = {
        "nonnegative_integrand": bool(tracker["min_f"] >= -1e-12),
        "min_integrand": float(tracker["min_f"]),
        "quadrature_converged": bool(quad_ok),
        "max_quadrature_error": quad_err,
    }
    config = {"k_list": ks, "phi_ids": [p.name for p in phis], "rtol": rtol, "atol": atol}
    return ExperimentReport("weak_continuity", rows, summaries, verdict, config=config, flags=flags)


# ---------------------------------------------------------------- higher integrability


def _slab_integral_closed(n, k, a, b):
    """Closed form of the tube integral of gamma(det') over the slab a < x_n < b."""
    omega = unit_ball_volume(n - 1)
    lk = math.log(k)
    L = (n - 1) * lk - math.log(lk)

    def F(y):
        return math.log(y) + (2 * math.log(y) + 2 - L) / y

    return omega / lk * (F(math.log(1 / a)) - F(math.log(1 / b)))


def slab_integral(n: int, k: int, eps: float, delta: float, epsabs: float = 1e-12):
    """Integral of s ln^+ s, s = det' grad u_k, over the tube part of K_eps with x_n > delta.

    Inside the tube det' depends on x_n only, so each slice contributes the
    tube cross section omega k^(1-n) times gamma(det'). In y = ln(1/x_n) the
    remaining integrand is (omega / ln k) ln^+(s) / y^2.
    Returns (value, error estimate).
    """
    if not (0 < delta < eps < 0.5):
        raise InvalidArgument("need 0 < delta < eps < 1/2")
    if 1.0 / k > 0.5 - eps:
        raise InvalidArgument("the tube of radius 1/k must fit inside [eps, 1-eps]^(n-1)")
    omega = unit_ball_volume(n - 1)
    lk = math.log(k)
    L = (n - 1) * lk - math.log(lk)

    def integrand(y):
        return max(0.0, y - 2 * math.log(y) + L) / y**2

    val, err = integrate.quad(integrand, math.log(1 / eps), math.log(1 / delta), epsabs=epsabs, epsrel=1e-12,
                              limit=200)
    return omega / lk * val, omega / lk * err


def anisotropic_norm(n: int, k: int) -> float:
    """int_Q |grad' u_k|^(n-1) dx (Frobenius norm) on Q = (0,1)^(n-1) x (-1/2, 1/2)."""
    if n not in (2, 3):
        raise UnsupportedDimension("the anisotropic norm is implemented for n = 2 and n = 3")
    # x_n factor: int g^(n-1) = 2 int_0^(1/2) dt/(t ln^2 t) = 2 int_(ln 2)^inf dy/y^2
    half, _ = integrate.quad(lambda y: 1.0 / y**2, math.log(2.0), math.inf)
    gfactor = 2.0 * half
    lk = math.log(k)
    if n == 2:
        # |d_1 u| = g k / ln k on the interval |x_1 - 1/2| < 1/k
        cross = (2.0 / k) * k / lk
    else:
        # inside: |DH|^2 = 2 k^2/ln k on a disc of area pi/k^2; outside: 1/(r^2 ln k)
        def edge(theta):
            return math.log(k * 0.5 / max(abs(math.cos(theta)), abs(math.sin(theta))))

        pts = [j * math.pi / 4 for j in range(1, 8)]
        outer, _ = integrate.quad(edge, 0.0, 2 * math.pi, points=pts, limit=200, epsabs=1e-13)
        cross = 2 * math.pi / lk + outer / lk
    return gfactor * cross


def higher_integrability_experiment(n: int, k_list, eps: float, delta_list) -> ExperimentReport:
    """Logarithmic divergence of the L log L integral near the flat face.

    For each k: I(k, delta) for every delta, a least-squares line of I against
    ln ln(1/delta), and the anisotropic norm A(k). The verdict is
    ``divergence_confirmed`` when every fit has a positive slope with
    R^2 >= 0.98 and I increases as delta decreases.
    """
    ks = sorted(int(k) for k in k_list)
    deltas = sorted((float(d) for d in delta_list), reverse=True)
    if len(deltas) < 2:
        raise InvalidArgument("at least two delta values are needed")
    for k in ks:
        if k <= 2:
            raise InvalidArgument("k must be >= 3")
    omega = unit_ball_volume(n - 1)
    rows, summaries = [], []
    confirmed = True
    x = [math.log(math.log(1 / d)) for d in deltas]
    for k in ks:
        vals = []
        for d in deltas:
            v, err = slab_integral(n, k, eps, d)
            if not err <= 1e-6:
                raise InvalidArgument(f"quadrature tolerance 1e-6 not reached at k={k}, delta={d}")
            vals.append(v)
        slope, intercept, r2 = linear_fit(x, vals)
        monotone = all(b > a for a, b in zip(vals, vals[1:]))
        expected = omega / math.log(k)
        try:
            A = anisotropic_norm(n, k)
        except UnsupportedDimension:
            A = None
        summaries.append({"k": k, "fit_slope": slope, "intercept": intercept, "r2": r2,
                          "expected_slope": expected, "slope_ratio": slope / expected,
                          "monotone": monotone, "anisotropic_norm": A,
                          "anisotropic_norm_times_lnk": None if A is None else A * math.log(k)})
        confirmed = confirmed and monotone and slope > 0 and r2 >= 0.98
        for d, v in zip(deltas, vals):
            rows.append({"k": k, "delta": d, "integral": v, "fit_slope": slope, "r2": r2})
    verdict = "divergence_confirmed" if confirmed else "inconclusive"
    config = {"n": n, "k_list": ks, "eps": eps, "delta_list": deltas,
              "domain": "(0,1)^(n-1) x (-1/2,1/2)", "tube_centre": 0.5}
    notes = ["x_n ranges over (-1/2, 1/2), where g is integrable to the power n-1",
             "the tube is centred in the cross section so that it lies inside K_eps"]
    return ExperimentReport("higher_integrability", rows, summaries, verdict, config=config, notes=notes)
