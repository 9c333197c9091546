"""Numerical quasiconvexity tests on P1 finite-element fields.

All energies are exact for P1 fields: the gradient is constant on each
simplex, so a polynomial integrand is integrated exactly as a volume-weighted
sum. Minimization uses multistart gradient descent with Barzilai-Borwein steps
and Armijo backtracking.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidArgument, OptimizationFailure
from .mesh import P1Field, StandardDomainMesh, build_standard_domain
from .polyform import PolyMatrixFn, evaluate_gradient, gradient, homogeneity_degree, pack

DEFAULT_FLOOR = -1e3


def thread_count() -> int:
    env = os.environ.get("NULLAG_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


# ----------------------------------------------------------------- energies


def _integrand_values(v, X):
    if isinstance(v, PolyMatrixFn):
        return v.evaluate_batch(X)
    return np.asarray(v(X), dtype=float)


def energy(v, F, u: P1Field) -> float:
    """Sum over simplices of |T| v(F + grad u|_T)."""
    F = np.asarray(F, dtype=float)
    X = F[None, :, :] + u.element_gradients()
    return float(u.mesh.volumes @ _integrand_values(v, X))


def gamma_term(q, u: P1Field) -> float:
    """Integral over Gamma of q . u, exact for affine traces."""
    q = np.asarray(q, dtype=float).ravel()
    w = u.mesh.gamma_vertex_weights()
    return float(w @ (u.values @ q))


def deficit(v, F, u: P1Field, q=None) -> float:
    """int v(F + grad u) - int_Gamma q . u - v(F)|Omega|, with q = grad v(F) rho by default."""
    F = np.asarray(F, dtype=float)
    if q is None:
        q = _trace_vector(v, F, u.mesh.frame.normal)
    base = float(_integrand_values(v, F[None])[0]) * u.mesh.volume
    return energy(v, F, u) - gamma_term(q, u) - base


def _trace_vector(v, F, rho):
    if not isinstance(v, PolyMatrixFn):
        raise InvalidArgument("the boundary trace vector needs a polynomial integrand")
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(evaluate_gradient(v, np.asarray(F, dtype=float)), dtype=float) @ np.asarray(rho, dtype=float)


class _Objective:
    """scale * (sum |T| v(F + grad u_T) - int_Gamma q.u - shift) over the free nodal values."""

    def __init__(self, v: PolyMatrixFn, F, mesh: StandardDomainMesh, q, shift, scale=1.0):
        self.mesh = mesh
        self.F = np.asarray(F, dtype=float)
        self.m = v.shape[0]
        G = gradient(v)
        self.packed = pack([v] + list(G.ravel()))
        self.q = np.asarray(q, dtype=float)
        self.wq = mesh.gamma_vertex_weights()[:, None] * self.q[None, :]
        self.shift = shift
        self.scale = scale

    def __call__(self, x):
        mesh = self.mesh
        vals = np.zeros((mesh.nverts, self.m))
        vals[mesh.free] = x.reshape(-1, self.m)
        X = self.F[None] + mesh.element_gradients(vals)
        E = X.shape[0]
        out = _kernels.eval_packed(*self.packed, X.reshape(E, -1))
        vol = mesh.volumes
        val = vol @ out[:, 0] - float(np.sum(self.wq * vals)) - self.shift
        Gel = (out[:, 1:] * vol[:, None]).reshape(X.shape)
        grad = _kernels.scatter_vertex_gradient(Gel, mesh.simplices, mesh.grads, mesh.nverts) - self.wq
        return self.scale * val, self.scale * grad[mesh.free].ravel()


@dataclass
class _TrialResult:
    trial: int
    value: float
    x: np.ndarray
    iterations: int
    status: str  # converged | max_iter | stalled | unbounded | diverged


def minimize_bb(fun, x0, maxiter=200, gtol=1e-8, floor=DEFAULT_FLOOR, memory=10):
    """Gradient descent with Barzilai-Borwein steps and nonmonotone Armijo backtracking.

    The sufficient-decrease test compares against the largest of the last
    ``memory`` objective values, which lets the BB steps through. Returns
    (x, f, iterations, status). Stops when the sup-norm of the gradient is at
    most ``gtol``, when f drops below ``floor`` (the objective is then reported
    as unbounded below) or after ``maxiter`` iterations.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return x, f, 0, "diverged"
    best = (f, x, g)
    recent = [f]
    alpha = 1.0 / max(1.0, float(np.max(np.abs(g), initial=0.0)))
    status = "max_iter"
    it = 0
    for it in range(maxiter):
        if float(np.max(np.abs(g), initial=0.0)) <= gtol:
            status = "converged"
            break
        if f <= floor:
            status = "unbounded"
            break
        gg = float(g @ g)
        ref = max(recent)
        slack = 8 * np.finfo(float).eps * max(1.0, abs(ref))
        t = alpha
        while True:
            xn = x - t * g
            fn, gn = fun(xn)
            if np.isfinite(fn) and fn <= ref - 1e-4 * t * gg + slack:
                break
            t *= 0.5
            if t < 1e-30:
                status = "stalled"
                break
        if status == "stalled":
            break
        if not np.all(np.isfinite(gn)):
            status = "diverged"
            break
        s = xn - x
        y = gn - g
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0 else 2.0 * t
        alpha = min(max(alpha, 1e-12), 1e12)
        x, f, g = xn, fn, gn
        recent.append(f)
        if len(recent) > memory:
            recent.pop(0)
        if f < best[0]:
            best = (f, x, g)
    else:
        it = maxiter
        if float(np.max(np.abs(g), initial=0.0)) <= gtol:
            status = "converged"
        elif f <= floor:
            status = "unbounded"
    if status == "diverged":
        return best[1], best[0], it, status
    if status in ("max_iter", "stalled") and best[0] < f:
        return best[1], best[0], it, status
    return x, f, it, status


# ----------------------------------------------------------------- reports


@dataclass
class QCBReport:
    kind: str
    estimate: float
    certificate: P1Field
    trials: int
    converged_trials: int
    diverged_trials: int
    unbounded: bool
    mesh_resolution: int
    normal: list
    F: list
    best_trial: int
    statuses: list = field(default_factory=list)
    q: list = field(default_factory=list)

    @property
    def violation(self) -> bool:
        return self.estimate < 0

    def to_json(self, include_certificate: bool = True) -> dict:
        out = {
            "kind": self.kind,
            "estimate": self.estimate,
            "violation_found": bool(self.violation),
            "unbounded_below": self.unbounded,
            "trials": self.trials,
            "converged_trials": self.converged_trials,
            "diverged_trials": self.diverged_trials,
            "best_trial": self.best_trial,
            "statuses": list(self.statuses),
            "mesh_resolution": self.mesh_resolution,
            "normal": [float(x) for x in self.normal],
            "F": [[float(x) for x in row] for row in self.F],
            "q": [float(x) for x in self.q],
        }
        if include_certificate:
            out["certificate"] = self.certificate.values.tolist()
        return out


def _run_trials(objective: _Objective, nfree, m, h, trials, seed, maxiter, gtol, floor, initial=None):
    if trials < 1:
        raise InvalidArgument("at least one trial is required")

    def start(trial):
        if trial == 0:
            return np.zeros(nfree * m) if initial is None else np.asarray(initial, dtype=float).ravel()
        rng = np.random.default_rng([seed, trial])
        return rng.uniform(-1.0, 1.0, size=nfree * m) / h

    def run(trial):
        with np.errstate(over="ignore", invalid="ignore"):
            x, f, it, status = minimize_bb(objective, start(trial), maxiter=maxiter, gtol=gtol, floor=floor)
        return _TrialResult(trial, float(f), x, it, status)

    workers = min(thread_count(), trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(trials)))
    else:
        results = [run(t) for t in range(trials)]
    ok = [r for r in results if r.status != "diverged" and np.isfinite(r.value)]
    if not ok:
        raise OptimizationFailure("all optimization trials diverged")
    best = min(ok, key=lambda r: (r.value, r.trial))
    return best, results


def _prepare_F(v: PolyMatrixFn, F):
    F = np.zeros(v.shape) if F is None else np.asarray(F, dtype=float).reshape(v.shape)
    return F


def qcb_deficit(v: PolyMatrixFn, F=None, rho=None, h: int = 8, trials: int = 8, seed: int = 0,
                maxiter: int = 200, gtol: float = 1e-8, floor: float = DEFAULT_FLOOR,
                initial: P1Field | None = None) -> QCBReport:
    """Minimize the boundary quasiconvexity deficit over P1 fields.

    A negative estimate certifies that v is not quasiconvex at the boundary at
    (F, rho); a nonnegative one only means that no violation was found.
    """
    m, n = v.shape
    F = _prepare_F(v, F)
    rho = np.eye(n)[-1] if rho is None else np.asarray(rho, dtype=float).ravel()
    mesh = build_standard_domain(n, rho, h)
    q = _trace_vector(v, F, mesh.frame.normal)
    base = v.evaluate_batch(F[None])[0] * mesh.volume
    obj = _Objective(v, F, mesh, q, base)
    x0 = _prolong_initial(initial, mesh)
    best, results = _run_trials(obj, mesh.free.size, m, h, trials, seed, maxiter, gtol, floor, x0)
    cert = mesh.field_from_free(best.x)
    estimate = deficit(v, F, cert, q)
    return _report("qcb_deficit", estimate, cert, results, best, h, mesh.frame.normal, F, q)


def qcb_envelope0(v: PolyMatrixFn, rho=None, h: int = 8, trials: int = 8, seed: int = 0,
                  maxiter: int = 200, gtol: float = 1e-8, floor: float = DEFAULT_FLOOR) -> QCBReport:
    """Sign certificate for the boundary envelope of a positively homogeneous v at 0.

    The envelope is either 0 or -infinity; the estimate is min(0, best energy
    per unit volume) and a negative value comes with the certificate field.
    """
    if homogeneity_degree(v) is None:
        raise InvalidArgument("the envelope at 0 needs a positively homogeneous integrand")
    m, n = v.shape
    F = np.zeros(v.shape)
    rho = np.eye(n)[-1] if rho is None else np.asarray(rho, dtype=float).ravel()
    mesh = build_standard_domain(n, rho, h)
    obj = _Objective(v, F, mesh, np.zeros(m), 0.0, scale=1.0 / mesh.volume)
    best, results = _run_trials(obj, mesh.free.size, m, h, trials, seed, maxiter, gtol, floor)
    cert = mesh.field_from_free(best.x)
    value = energy(v, F, cert) / mesh.volume
    if value >= 0:
        cert, value = mesh.zero_field(m), 0.0
    return _report("qcb_envelope0", value, cert, results, best, h, mesh.frame.normal, F, np.zeros(m))


def interior_qc_deficit(v: PolyMatrixFn, F=None, h: int = 8, trials: int = 8, seed: int = 0,
                        maxiter: int = 200, gtol: float = 1e-8, floor: float = DEFAULT_FLOOR,
                        initial: P1Field | None = None) -> QCBReport:
    """Estimate Qv(F) - v(F) with fields vanishing on the whole boundary."""
    m, n = v.shape
    F = _prepare_F(v, F)
    mesh = build_standard_domain(n, None, h, all_dirichlet=True)
    base = v.evaluate_batch(F[None])[0] * mesh.volume
    obj = _Objective(v, F, mesh, np.zeros(m), base, scale=1.0 / mesh.volume)
    x0 = _prolong_initial(initial, mesh)
    best, results = _run_trials(obj, mesh.free.size, m, h, trials, seed, maxiter, gtol, floor, x0)
    cert = mesh.field_from_free(best.x)
    estimate = (energy(v, F, cert) - base) / mesh.volume
    return _report("interior_qc_deficit", estimate, cert, results, best, h, mesh.frame.normal, F, np.zeros(m))


def _report(kind, estimate, cert, results, best, h, normal, F, q):
    statuses = [r.status for r in results]
    return QCBReport(
        kind=kind,
        estimate=float(estimate),
        certificate=cert,
        trials=len(results),
        converged_trials=sum(s in ("converged", "unbounded") for s in statuses),
        diverged_trials=statuses.count("diverged"),
        unbounded=best.status == "unbounded",
        mesh_resolution=h,
        normal=list(np.asarray(normal, dtype=float)),
        F=np.asarray(F, dtype=float).tolist(),
        best_trial=best.trial,
        statuses=statuses,
        q=list(np.asarray(q, dtype=float)),
    )


# ----------------------------------------------------------------- transfer


def evaluate_p1(u: P1Field, points) -> np.ndarray:
    """Evaluate a P1 field at physical points inside its (Kuhn) mesh."""
    mesh = u.mesh
    n, h = mesh.n, mesh.h
    ref = np.asarray(points, dtype=float) @ mesh.frame.rotation
    y = ref.copy()
    y[:, -1] += 1.0
    y *= h
    c = np.clip(np.floor(y + 1e-12), 0, h - 1).astype(np.int64)
    frac = np.clip(y - c, 0.0, 1.0)
    order = np.argsort(-frac, axis=1, kind="stable")
    fs = np.take_along_axis(frac, order, axis=1)
    lam = np.empty((len(y), n + 1))
    lam[:, 0] = 1.0 - fs[:, 0]
    lam[:, 1:n] = fs[:, :-1] - fs[:, 1:]
    lam[:, n] = fs[:, -1]
    shape = (h + 1,) * n
    out = np.zeros((len(y), u.m))
    corner = c.copy()
    for k in range(n + 1):
        if k:
            np.add.at(corner, (np.arange(len(y)), order[:, k - 1]), 1)
        idx = np.ravel_multi_index(tuple(corner.T), shape)
        out += lam[:, k:k + 1] * u.values[idx]
    return out


def prolong(u: P1Field, mesh: StandardDomainMesh) -> P1Field:
    """Transfer a field to a mesh of the same domain; exact for nested refinements."""
    if mesh.n != u.mesh.n:
        raise InvalidArgument("prolongation between meshes of different dimension")
    return P1Field(mesh, evaluate_p1(u, mesh.vertices))


def _prolong_initial(initial, mesh):
    if initial is None:
        return None
    if initial.mesh is not mesh:
        initial = prolong(initial, mesh)
    return initial.free_values()
