"""Exact decision procedures for null Lagrangians at the boundary.

The primary test is the rank-one invariance N(F + a (x) rho) = N(F) for all F
and a, decided as a polynomial identity in the entries of (F, a). Positive
answers come with the expansion in minors of H R~, where R = (R~ | rho) is the
exact rational rotation completing the normal; negative answers come with an
explicit pair (F, a) that violates the invariance in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InvalidArgument, NotBoundaryNL, NotQuasiaffine
from .polyform import (
    PolyMatrixFn,
    _fmt,
    evaluate,
    evaluate_gradient,
    gradient,
    minor_poly,
    substitute_linear,
)
from .tensor_minor import (
    BoundaryFrame,
    as_exact,
    complete_rotation,
    is_exact,
    minor_labels,
    rank_one,
    rational_unit_vector,
)


@dataclass(frozen=True)
class MinorExpansion:
    """Constant plus coefficients on unsigned minors.

    ``coefficients`` maps (s, rows, cols) to a nonzero rational. Without a
    frame the minors are those of H itself; with a frame they are minors of
    H @ frame.completion, so column sets range over 1..n-1.
    """

    shape: tuple
    constant: Fraction
    coefficients: dict
    frame: BoundaryFrame | None = None

    def to_poly(self) -> PolyMatrixFn:
        m, n = self.shape
        out = PolyMatrixFn.constant(self.shape, self.constant)
        for (s, p, q), beta in self.coefficients.items():
            if self.frame is None:
                out = out + minor_poly(m, n, p, q) * beta
            else:
                out = out + substitute_linear(minor_poly(m, n - 1, p, q), self.frame.completion) * beta
        return out

    def by_order(self):
        """{s: {(rows, cols): beta}} grouping of the coefficients."""
        out = {}
        for (s, p, q), beta in self.coefficients.items():
            out.setdefault(s, {})[(p, q)] = beta
        return out

    def to_json(self) -> dict:
        return {
            "shape": list(self.shape),
            "constant": _fmt(self.constant),
            "coefficients": [
                {"s": s, "rows": list(p), "cols": list(q), "beta": _fmt(b)}
                for (s, p, q), b in sorted(self.coefficients.items())
            ],
            "rotated": self.frame is not None,
        }


@dataclass(frozen=True)
class BoundaryNLVerdict:
    is_boundary_nl: bool
    normal: tuple
    rationalized_normal: bool
    frame: BoundaryFrame
    expansion: MinorExpansion | None = None
    witness: tuple | None = None  # (F, a) as exact object arrays
    trace_gradient: list = field(default_factory=list)
    reason: str = ""

    def q_at(self, F):
        """Boundary trace vector q(F) = grad N(F) rho."""
        return np.array([evaluate(g, F) for g in self.trace_gradient], dtype=object if is_exact(F) else float)

    def to_json(self) -> dict:
        witness = None
        if self.witness is not None:
            F, a = self.witness
            witness = {"F": [[_fmt(x) for x in row] for row in F.tolist()], "a": [_fmt(x) for x in a.tolist()]}
        return {
            "is_boundary_nl": self.is_boundary_nl,
            "reason": self.reason,
            "normal": [_fmt(x) for x in self.normal],
            "frame": self.frame.to_json(),
            "expansion": self.expansion.to_json() if self.expansion is not None else None,
            "witness": witness,
            "rationalized_normal": self.rationalized_normal,
            "trace_gradient": [g.to_json() for g in self.trace_gradient],
        }


def _diag_exps(m, n, p, q):
    e = [0] * (m * n)
    for i, j in zip(p, q):
        e[(i - 1) * n + (j - 1)] = 1
    return tuple(e)


def decompose_minors(f: PolyMatrixFn) -> MinorExpansion:
    """Write f as c + sum_s beta_s . ad_s(H), exactly.

    Distinct minors share no monomials and each contains its diagonal product
    with coefficient +1, so beta is read off the diagonal monomials and the
    remainder must vanish.
    """
    m, n = f.shape
    c = f.constant_term()
    coeffs = {}
    recon = PolyMatrixFn.constant(f.shape, c)
    for s in range(1, min(m, n) + 1):
        for p, q in minor_labels(m, n, s):
            beta = f.coefficient(_diag_exps(m, n, p, q))
            if beta:
                coeffs[(s, p, q)] = beta
                recon = recon + minor_poly(m, n, p, q) * beta
    residual = f - recon
    if not residual.is_zero():
        raise NotQuasiaffine(
            f"not a null Lagrangian: {len(residual.terms)} monomial(s) outside the minor basis", residual
        )
    return MinorExpansion(f.shape, c, coeffs)


def _exact_frame(rho):
    vec, changed = rational_unit_vector(rho)
    if len(vec) < 2:
        raise InvalidArgument("boundary normals need n >= 2")
    return vec, changed, complete_rotation(vec, exact=True)


def decompose_boundary(f: PolyMatrixFn, rho) -> MinorExpansion:
    """Expansion c + sum beta~_s . ad_s(H R~) of a null Lagrangian at the boundary.

    Raises ``NotQuasiaffine`` if f is not even a null Lagrangian and
    ``NotBoundaryNL`` if some coefficient sits on a minor of H R whose column
    set contains n (the normal direction).
    """
    m, n = f.shape
    vec, _, frame = _exact_frame(rho)
    if len(vec) != n:
        raise InvalidArgument(f"normal of length {len(vec)} for matrices with {n} columns")
    rotated = substitute_linear(f, frame.rotation.T)  # F -> f(F R^T)
    full = decompose_minors(rotated)
    offending = {key: b for key, b in full.coefficients.items() if n in key[2]}
    if offending:
        raise NotBoundaryNL(
            f"null Lagrangian but not at the boundary: {len(offending)} coefficient(s) on minors "
            f"containing the normal column {n}",
            offending,
        )
    return MinorExpansion(f.shape, full.constant, dict(full.coefficients), frame)


def rank_one_defect(f: PolyMatrixFn, rho) -> PolyMatrixFn:
    """g(F, a) = f(F + a (x) rho) - f(F) as a polynomial on m x (n+1) matrices [F | a]."""
    m, n = f.shape
    r = as_exact(np.asarray(rho, dtype=object).ravel())
    if len(r) != n:
        raise InvalidArgument(f"normal of length {len(r)} for matrices with {n} columns")
    B = np.empty((n + 1, n), dtype=object)
    for i in range(n + 1):
        for j in range(n):
            B[i, j] = Fraction(int(i == j)) if i < n else r[j]
    E = B.copy()
    E[n, :] = Fraction(0)
    return substitute_linear(f, B) - substitute_linear(f, E)


def _find_witness(g: PolyMatrixFn, seed: int):
    """Integer point where the nonzero polynomial g does not vanish."""
    rng = np.random.default_rng(seed)
    shape = g.shape
    for bound in (2, 2, 5, 20, 1000):
        for _ in range(100):
            H = rng.integers(-bound, bound + 1, size=shape).astype(object)
            if evaluate(g, H) != 0:
                return as_exact(H)
    # fallback: lowest-degree monomial with its variables set to small integers
    e = min(g.terms, key=lambda x: (sum(x), x))
    support = [k for k, p in enumerate(e) if p]
    for t in range(1, 2 * g.degree + 3):
        H = np.zeros(g.nvars, dtype=object)
        for r, k in enumerate(support):
            H[k] = t + r
        H = H.reshape(shape)
        if evaluate(g, H) != 0:
            return as_exact(H)
    raise RuntimeError("no witness found for a nonzero polynomial")  # pragma: no cover


def is_boundary_nl(f: PolyMatrixFn, rho, seed: int = 0) -> BoundaryNLVerdict:
    """Decide whether f is a null Lagrangian at the boundary with normal rho.

    Irrational normals are replaced by an exact rational unit vector within
    1e-12 and the verdict refers to that vector (``rationalized_normal``).
    """
    m, n = f.shape
    vec, changed, frame = _exact_frame(rho)
    if len(vec) != n:
        raise InvalidArgument(f"normal of length {len(vec)} for matrices with {n} columns")
    G = gradient(f)
    trace_grad = [sum((G[i, j] * vec[j] for j in range(n) if vec[j]), PolyMatrixFn(f.shape)) for i in range(m)]
    common = dict(normal=vec, rationalized_normal=changed, frame=frame, trace_gradient=trace_grad)

    g = rank_one_defect(f, vec)
    if not g.is_zero():
        H = _find_witness(g, seed)
        F, a = H[:, :n].copy(), H[:, n].copy()
        lhs = evaluate(f, F + rank_one(a, np.array(vec, dtype=object)))
        if lhs == evaluate(f, F):  # pragma: no cover - guarded by construction
            raise RuntimeError("witness verification failed")
        return BoundaryNLVerdict(False, witness=(F, a), reason="rank_one_invariance_fails", **common)
    try:
        expansion = decompose_boundary(f, vec)
    except NotQuasiaffine:
        return BoundaryNLVerdict(False, reason="not_quasiaffine", **common)
    return BoundaryNLVerdict(True, expansion=expansion, reason="rank_one_invariant", **common)


def special_form(f: PolyMatrixFn, F0, rho=None) -> PolyMatrixFn:
    """f minus the linear form grad f(F0) . F, whose gradient vanishes at F0.

    ``rho`` is accepted for symmetry with the other boundary operations; the
    construction does not depend on it. f is assumed to be a null Lagrangian
    at the boundary at F0.
    """
    D = evaluate_gradient(f, as_exact(F0))
    return f - PolyMatrixFn.linear(D)


def boundary_trace_q(f: PolyMatrixFn, F, rho):
    """q = grad f(F) rho."""
    D = evaluate_gradient(f, F)
    if is_exact(F) and is_exact(rho):
        r = as_exact(np.asarray(rho, dtype=object).ravel())
        return np.array([sum((D[i, j] * r[j] for j in range(len(r))), Fraction(0)) for i in range(D.shape[0])],
                        dtype=object)
    return np.asarray(D, dtype=float) @ np.asarray(rho, dtype=float).ravel()


def boundary_nl_basis(m: int, n: int, rho) -> list:
    """Constant 1 and every minor of H R~ of order 1..min(m, n-1), expanded in H."""
    if n < 2:
        raise InvalidArgument("boundary null Lagrangian basis needs n >= 2")
    _, _, frame = _exact_frame(rho)
    if frame.n != n:
        raise InvalidArgument(f"normal of length {frame.n} for n={n}")
    out = [PolyMatrixFn.constant((m, n), 1)]
    for s in range(1, min(m, n - 1) + 1):
        for p, q in minor_labels(m, n - 1, s):
            out.append(substitute_linear(minor_poly(m, n - 1, p, q), frame.completion))
    return out
