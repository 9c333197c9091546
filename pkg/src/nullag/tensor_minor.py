"""Small dense matrix algebra: multi-index sets, unsigned minors, cofactors,
rotation completion of a unit normal and rank-one products.

Two numeric backends are supported. Matrices given as numpy float arrays (or
nested lists containing floats) use binary64; integer, ``Fraction`` or
object arrays use exact rational arithmetic. Minors are *unsigned*: the entry
indexed by row set (p) and column set (q) is the plain determinant of the
submatrix, without an extra (-1)^(p+q) position factor. Minor vectors are
flattened lexicographically over ((p), (q)) with 1-based index sets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import InvalidArgument

MultiIndex = tuple  # strictly increasing tuple of 1-based integers


def _contains_float(obj):
    if isinstance(obj, (float, np.floating)):
        return True
    if isinstance(obj, (list, tuple)):
        return any(_contains_float(x) for x in obj)
    return False


def is_exact(H):
    """True when ``H`` should be handled by the rational backend."""
    if isinstance(H, np.ndarray):
        if H.dtype.kind in "iub":
            return True
        if H.dtype.kind == "O":
            return not any(isinstance(x, (float, np.floating)) for x in H.flat)
        return False
    return not _contains_float(H)


def as_exact(H):
    """Object array of ``Fraction``; floats are converted without rounding."""
    arr = np.array(H, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, x in np.ndenumerate(arr):
        out[idx] = x if isinstance(x, Fraction) else Fraction(x)
    return out


def as_real(H):
    return np.array(np.array(H, dtype=object).tolist(), dtype=float) if np.ndim(H) else float(H)


def _as_matrix(H):
    exact = is_exact(H)
    M = as_exact(H) if exact else np.asarray(H, dtype=float)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise InvalidArgument(f"expected a nonempty 2-D matrix, got shape {M.shape}")
    return M, exact


@lru_cache(maxsize=None)
def index_sets(r: int, s: int) -> tuple:
    """All strictly increasing s-subsets of {1..r}, lexicographically ordered."""
    if not (1 <= s <= r):
        raise InvalidArgument(f"index_sets requires 1 <= s <= r, got r={r}, s={s}")
    return tuple(itertools.combinations(range(1, r + 1), s))


@lru_cache(maxsize=None)
def minor_labels(m: int, n: int, s: int) -> tuple:
    """Labels ((p), (q)) in the flattening order used by :func:`ad_s`."""
    return tuple((p, q) for p in index_sets(m, s) for q in index_sets(n, s))


def det_laplace(M):
    """Exact determinant by cofactor expansion along the first row.

    Memoized over the set of remaining columns, so the cost is O(2^s s) rather
    than O(s!).
    """
    s = len(M)
    if s == 0:
        return Fraction(1)
    memo = {}

    def rec(row, cols):
        if row == s:
            return Fraction(1)
        key = cols
        if key in memo:
            return memo[key]
        total = Fraction(0)
        sign = 1
        for pos, c in enumerate(cols):
            entry = M[row][c]
            if entry != 0:
                sub = rec(row + 1, cols[:pos] + cols[pos + 1:])
                total += sign * entry * sub
            sign = -sign
        memo[key] = total
        return total

    return rec(0, tuple(range(s)))


def det_lu(M) -> float:
    """Real determinant via LU factorization with full pivoting."""
    A = np.array(M, dtype=float, copy=True)
    s = A.shape[0]
    det = 1.0
    for k in range(s):
        sub = np.abs(A[k:, k:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        i += k
        j += k
        if A[i, j] == 0.0:
            return 0.0
        if i != k:
            A[[k, i], :] = A[[i, k], :]
            det = -det
        if j != k:
            A[:, [k, j]] = A[:, [j, k]]
            det = -det
        piv = A[k, k]
        det *= piv
        if k + 1 < s:
            A[k + 1:, k:] -= np.outer(A[k + 1:, k] / piv, A[k, k:])
    return det


def ad_s(H, s: int):
    """Vector of all unsigned s x s minors of ``H``.

    Returns an object array of ``Fraction`` for exact input and a float array
    otherwise; entry order follows :func:`minor_labels`.
    """
    M, exact = _as_matrix(H)
    m, n = M.shape
    if not (1 <= s <= min(m, n)):
        raise InvalidArgument(f"minor order s={s} outside 1..{min(m, n)}")
    labels = minor_labels(m, n, s)
    if exact:
        out = np.empty(len(labels), dtype=object)
        for k, (p, q) in enumerate(labels):
            sub = [[M[i - 1, j - 1] for j in q] for i in p]
            out[k] = det_laplace(sub)
        return out
    out = np.empty(len(labels))
    for k, (p, q) in enumerate(labels):
        out[k] = det_lu(M[np.ix_([i - 1 for i in p], [j - 1 for j in q])])
    return out


def determinant(F):
    M, exact = _as_matrix(F)
    if M.shape[0] != M.shape[1]:
        raise InvalidArgument("determinant of a non-square matrix")
    return det_laplace(M.tolist()) if exact else det_lu(M)


def cofactor(F):
    """Cofactor matrix, [Cof F]_ij = (-1)^(i+j) det of F with row i, column j removed."""
    M, exact = _as_matrix(F)
    n = M.shape[0]
    if M.shape[1] != n:
        raise InvalidArgument(f"cofactor needs a square matrix, got {M.shape}")
    out = np.empty((n, n), dtype=object if exact else float)
    if n == 1:
        out[0, 0] = Fraction(1) if exact else 1.0
        return out
    for i in range(n):
        rows = [r for r in range(n) if r != i]
        for j in range(n):
            cols = [c for c in range(n) if c != j]
            sub = M[np.ix_(rows, cols)]
            d = det_laplace(sub.tolist()) if exact else det_lu(sub)
            out[i, j] = d if (i + j) % 2 == 0 else -d
    return out


def rank_one(a, rho):
    """The dyad a (x) rho with entries a_i rho_j."""
    if is_exact(a) and is_exact(rho):
        a_, r_ = as_exact(a).ravel(), as_exact(rho).ravel()
        return np.array([[x * y for y in r_] for x in a_], dtype=object).reshape(len(a_), len(r_))
    return np.outer(np.asarray(a, dtype=float).ravel(), np.asarray(rho, dtype=float).ravel())


# ------------------------------------------------------------------ frames


def rational_unit_vector(rho, tol: float = 1e-12):
    """Exact rational unit vector within ``tol`` (sup norm) of ``rho``.

    Returns ``(vector, changed)`` where ``changed`` tells whether the input had
    to be approximated. Exact unit input is returned unchanged. Otherwise the
    stereographic coordinates of ``rho`` are approximated by continued
    fractions and mapped back, which lands exactly on the unit sphere.
    """
    vals = [x if isinstance(x, Fraction) else Fraction(x) for x in np.asarray(rho, dtype=object).ravel()]
    n = len(vals)
    if n < 1:
        raise InvalidArgument("empty normal")
    norm2 = sum(v * v for v in vals)
    if abs(float(norm2) - 1.0) > 1e-10:
        raise InvalidArgument(f"normal is not a unit vector (|rho|^2 = {float(norm2)!r})")
    if norm2 == 1:
        return tuple(vals), False
    if n == 1:
        return (Fraction(1) if vals[0] > 0 else Fraction(-1),), True
    x = np.array([float(v) for v in vals])
    x /= np.linalg.norm(x)
    pole = 1 if x[-1] >= 0 else -1
    y = x[:-1] / (1.0 + pole * x[-1])
    denom = 10
    while True:
        yq = [Fraction(float(t)).limit_denominator(denom) for t in y]
        s = sum(t * t for t in yq)
        out = [2 * t / (1 + s) for t in yq]
        out.append(pole * (1 - s) / (1 + s))
        if max(abs(float(o) - xi) for o, xi in zip(out, x)) <= tol or denom > 10**15:
            return tuple(out), True
        denom *= 10


@dataclass(frozen=True)
class BoundaryFrame:
    """Unit normal, its orthogonal completion and the rotation (completion | normal)."""

    normal: np.ndarray
    completion: np.ndarray
    rotation: np.ndarray
    exact: bool = False

    @property
    def n(self) -> int:
        return self.rotation.shape[0]

    def real(self) -> "BoundaryFrame":
        if not self.exact:
            return self
        return BoundaryFrame(as_real(self.normal), as_real(self.completion), as_real(self.rotation), False)

    def to_json(self) -> dict:
        conv = (lambda a: [[_fmt(x) for x in row] for row in a.tolist()]) if self.exact else (lambda a: a.tolist())
        normal = [_fmt(x) for x in self.normal.tolist()] if self.exact else self.normal.tolist()
        return {"normal": normal, "completion": conv(self.completion), "rotation": conv(self.rotation),
                "exact": self.exact}


def _fmt(x):
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def complete_rotation(rho, exact: bool | None = None) -> BoundaryFrame:
    """Rotation R in SO(n) whose last column is ``rho``.

    Built from the Householder reflection that maps e_n to ``rho``; the first
    column is negated to turn the reflection into a rotation. ``rho == e_n``
    gives the identity. With ``exact=True`` (the default for rational input)
    the normal is rationalized first and the frame is exactly orthogonal.
    """
    if exact is None:
        exact = is_exact(rho)
    if exact:
        vec, _ = rational_unit_vector(rho)
        n = len(vec)
        if n < 2:
            raise InvalidArgument("rotation completion needs n >= 2")
        r = np.array(vec, dtype=object)
        v = -r.copy()
        v[-1] = 1 - r[-1]
        vv = sum(x * x for x in v)
        R = np.array([[Fraction(int(i == j)) for j in range(n)] for i in range(n)], dtype=object)
        if vv != 0:
            R = R - np.array([[2 * v[i] * v[j] / vv for j in range(n)] for i in range(n)], dtype=object)
            R[:, 0] = -R[:, 0]
        return BoundaryFrame(r, R[:, :-1].copy(), R, True)

    r = np.asarray(rho, dtype=float).ravel()
    n = r.size
    if n < 2:
        raise InvalidArgument("rotation completion needs n >= 2")
    if abs(np.linalg.norm(r) - 1.0) > 1e-10:
        raise InvalidArgument(f"normal is not a unit vector (|rho| = {np.linalg.norm(r)!r})")
    r = r / np.linalg.norm(r)
    v = -r.copy()
    # 1 - rho_n without cancellation when rho is close to e_n
    v[-1] = (r[:-1] @ r[:-1]) / (1.0 + r[-1]) if r[-1] > 0 else 1.0 - r[-1]
    vv = v @ v
    R = np.eye(n)
    if vv > 0:
        R -= 2.0 * np.outer(v, v) / vv
        R[:, 0] = -R[:, 0]
    return BoundaryFrame(r, R[:, :-1].copy(), R, False)


def binom(r: int, s: int) -> int:
    return math.comb(r, s)
