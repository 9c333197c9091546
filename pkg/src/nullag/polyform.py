"""Exact multivariate polynomials in the entries of an m x n matrix.

Variables are ordered row-major, F11, F12, ..., Fmn, and each term is stored
as a dense exponent tuple mapped to a nonzero ``Fraction`` coefficient.
"""

from __future__ import annotations

import itertools
import json
import os
import re
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import GrowthViolation, InvalidArgument
from .tensor_minor import as_exact, is_exact, rational_unit_vector


def _frac(c):
    if isinstance(c, Fraction):
        return c
    if isinstance(c, str):
        return Fraction(c.strip())
    return Fraction(c)


def _fmt(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


class PolyMatrixFn:
    """Polynomial F -> f(F) on R^{m x n} with exact rational coefficients.

    Instances are immutable; arithmetic returns new objects.
    """

    __slots__ = ("shape", "terms", "_compiled")

    def __init__(self, shape, terms=None):
        m, n = (int(shape[0]), int(shape[1]))
        if m < 1 or n < 1:
            raise InvalidArgument(f"invalid polynomial shape {shape}")
        self.shape = (m, n)
        N = m * n
        clean = {}
        for exps, c in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != N or min(exps, default=0) < 0:
                raise InvalidArgument(f"exponent vector {exps} does not fit shape {self.shape}")
            c = _frac(c)
            if c:
                clean[exps] = clean.get(exps, Fraction(0)) + c
                if not clean[exps]:
                    del clean[exps]
        self.terms = clean
        self._compiled = None

    # -------------------------------------------------------- constructors

    @classmethod
    def constant(cls, shape, c=1):
        N = shape[0] * shape[1]
        return cls(shape, {(0,) * N: c})

    @classmethod
    def variable(cls, shape, i, j):
        """The coordinate function F -> F[i, j] (0-based indices)."""
        m, n = shape
        if not (0 <= i < m and 0 <= j < n):
            raise InvalidArgument(f"variable ({i},{j}) outside shape {shape}")
        e = [0] * (m * n)
        e[i * n + j] = 1
        return cls(shape, {tuple(e): 1})

    @classmethod
    def linear(cls, beta):
        """F -> beta . F for a coefficient matrix ``beta``."""
        B = as_exact(beta)
        m, n = B.shape
        terms = {}
        for i in range(m):
            for j in range(n):
                e = [0] * (m * n)
                e[i * n + j] = 1
                terms[tuple(e)] = B[i, j]
        return cls((m, n), terms)

    # -------------------------------------------------------- basic props

    @property
    def nvars(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def constant_term(self) -> Fraction:
        return self.terms.get((0,) * self.nvars, Fraction(0))

    def coefficient(self, exps) -> Fraction:
        return self.terms.get(tuple(exps), Fraction(0))

    # -------------------------------------------------------- arithmetic

    def _coerce(self, other):
        if isinstance(other, PolyMatrixFn):
            if other.shape != self.shape:
                raise InvalidArgument(f"shape mismatch {self.shape} vs {other.shape}")
            return other
        if isinstance(other, (int, Fraction, float, np.integer, np.floating)):
            return PolyMatrixFn.constant(self.shape, _frac(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, Fraction(0)) + c
        return PolyMatrixFn(self.shape, terms)

    __radd__ = __add__

    def __neg__(self):
        return PolyMatrixFn(self.shape, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, float, np.integer, np.floating)):
            c = _frac(other)
            return PolyMatrixFn(self.shape, {e: c * v for e, v in self.terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return PolyMatrixFn(self.shape, _mul_terms(self.terms, other.terms))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise InvalidArgument("only nonnegative integer powers")
        out = PolyMatrixFn.constant(self.shape, 1)
        base = self
        k = int(k)
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, PolyMatrixFn):
            return NotImplemented
        return self.shape == other.shape and self.terms == other.terms

    def __hash__(self):
        return hash((self.shape, frozenset(self.terms.items())))

    def __repr__(self):
        if not self.terms:
            return f"PolyMatrixFn{self.shape}(0)"
        m, n = self.shape
        parts = []
        for e, c in sorted(self.terms.items(), key=lambda t: (sum(t[0]), t[0])):
            mono = "*".join(
                (f"F{k // n + 1}{k % n + 1}" + (f"^{p}" if p > 1 else "")) for k, p in enumerate(e) if p
            )
            parts.append(f"{_fmt(c)}" + (f"*{mono}" if mono else ""))
        return f"PolyMatrixFn{self.shape}(" + " + ".join(parts) + ")"

    # -------------------------------------------------------- evaluation

    def compiled(self):
        """Float coefficient vector and exponent matrix for the batch kernels."""
        if self._compiled is None:
            items = sorted(self.terms.items())
            coeffs = np.array([float(c) for _, c in items], dtype=np.float64)
            exps = np.array([e for e, _ in items], dtype=np.int64).reshape(len(items), self.nvars)
            self._compiled = (coeffs, exps)
        return self._compiled

    def evaluate(self, H):
        return evaluate(self, H)

    __call__ = evaluate

    def evaluate_batch(self, X):
        """Evaluate at a stack of matrices ``X`` of shape (E, m, n) in binary64."""
        return eval_many([self], X)[:, 0]

    # -------------------------------------------------------- serialization

    def to_json(self) -> dict:
        return {
            "shape": list(self.shape),
            "terms": [{"coeff": _fmt(c), "exps": list(e)} for e, c in sorted(self.terms.items())],
        }

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise InvalidArgument(
                    f"malformed polynomial JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
                ) from exc
        try:
            shape = data["shape"]
            terms = {}
            for t in data["terms"]:
                e = tuple(t["exps"])
                terms[e] = terms.get(e, Fraction(0)) + _frac(t["coeff"])
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise InvalidArgument(f"malformed polynomial JSON: {exc}") from exc
        return cls(shape, terms)


def _mul_terms(a, b):
    out = {}
    for e1, c1 in a.items():
        for e2, c2 in b.items():
            e = tuple(x + y for x, y in zip(e1, e2))
            out[e] = out.get(e, Fraction(0)) + c1 * c2
    return out


# ------------------------------------------------------------ evaluation


def _check_shape(f, H):
    shape = np.shape(H)
    if tuple(shape) != f.shape:
        raise InvalidArgument(f"matrix shape {tuple(shape)} does not match polynomial shape {f.shape}")


def evaluate(f: PolyMatrixFn, H):
    """Value f(H): exact ``Fraction`` for rational input, float otherwise."""
    _check_shape(f, H)
    if is_exact(H):
        x = as_exact(H).ravel()
        powers = {}
        total = Fraction(0)
        for e, c in f.terms.items():
            v = c
            for k, p in enumerate(e):
                if p:
                    key = (k, p)
                    if key not in powers:
                        powers[key] = x[k] ** p
                    v *= powers[key]
                    if not v:
                        break
            total += v
        return total
    X = np.asarray(H, dtype=float).reshape(1, -1)
    return float(eval_many([f], X.reshape(1, *f.shape))[0, 0])


def pack(polys):
    """Concatenate compiled polynomials for :func:`_kernels.eval_packed`."""
    coeffs, exps, offsets = [], [], [0]
    N = polys[0].nvars
    for p in polys:
        if p.nvars != N:
            raise InvalidArgument("packed polynomials must share the variable count")
        c, e = p.compiled()
        coeffs.append(c)
        exps.append(e)
        offsets.append(offsets[-1] + len(c))
    return (np.concatenate(coeffs) if coeffs else np.zeros(0),
            np.ascontiguousarray(np.concatenate(exps)) if exps else np.zeros((0, N), np.int64),
            np.array(offsets, dtype=np.int64))


def eval_many(polys, X):
    """Evaluate several same-shape polynomials at a stack (E, m, n). Returns (E, P)."""
    X = np.asarray(X, dtype=float)
    E = X.shape[0]
    coeffs, exps, offsets = pack(polys)
    return _kernels.eval_packed(coeffs, exps, offsets, X.reshape(E, -1))


# ------------------------------------------------------------ transforms


def substitute_linear(f: PolyMatrixFn, A) -> PolyMatrixFn:
    """Expand H -> f(H A) as a polynomial in the entries of H.

    ``f`` lives on m x k matrices and ``A`` is n x k, so the result lives on
    m x n matrices.
    """
    A = as_exact(A)
    if A.ndim != 2:
        raise InvalidArgument("substitution matrix must be 2-D")
    m, k = f.shape
    n, k2 = A.shape
    if k2 != k:
        raise InvalidArgument(f"cannot substitute H A with A of shape {A.shape} into a polynomial on {f.shape}")
    shape = (m, n)
    N = m * n
    # F_ij = sum_l H_il A_lj
    linear = {}
    for i in range(m):
        for j in range(k):
            terms = {}
            for l in range(n):
                if A[l, j]:
                    e = [0] * N
                    e[i * n + l] = 1
                    terms[tuple(e)] = A[l, j]
            linear[i * k + j] = terms
    power_cache = {}

    def power(var, p):
        key = (var, p)
        if key not in power_cache:
            power_cache[key] = linear[var] if p == 1 else _mul_terms(power(var, p - 1), linear[var])
        return power_cache[key]

    out = {}
    for e, c in f.terms.items():
        acc = {(0,) * N: c}
        for var, p in enumerate(e):
            if p:
                acc = _mul_terms(acc, power(var, p))
                if not acc:
                    break
        for ee, cc in acc.items():
            out[ee] = out.get(ee, Fraction(0)) + cc
    return PolyMatrixFn(shape, out)


def partial(f: PolyMatrixFn, i: int, j: int) -> PolyMatrixFn:
    k = i * f.shape[1] + j
    terms = {}
    for e, c in f.terms.items():
        p = e[k]
        if p:
            ee = list(e)
            ee[k] = p - 1
            terms[tuple(ee)] = c * p
    return PolyMatrixFn(f.shape, terms)


def gradient(f: PolyMatrixFn) -> np.ndarray:
    """m x n object array whose (i, j) entry is the partial derivative in F_ij."""
    m, n = f.shape
    out = np.empty((m, n), dtype=object)
    for i in range(m):
        for j in range(n):
            out[i, j] = partial(f, i, j)
    return out


def evaluate_gradient(f: PolyMatrixFn, H):
    G = gradient(f)
    exact = is_exact(H)
    out = np.empty(f.shape, dtype=object if exact else float)
    for idx, g in np.ndenumerate(G):
        out[idx] = evaluate(g, H)
    return out


def homogeneous_parts(f: PolyMatrixFn) -> list:
    """Parts a_0, ..., a_d with a_i positively i-homogeneous and sum equal to f."""
    d = f.degree
    buckets = [dict() for _ in range(d + 1)]
    for e, c in f.terms.items():
        buckets[sum(e)][e] = c
    return [PolyMatrixFn(f.shape, b) for b in buckets]


def dilate(f: PolyMatrixFn, t) -> PolyMatrixFn:
    """The polynomial F -> f(t F)."""
    t = _frac(t)
    return PolyMatrixFn(f.shape, {e: c * t ** sum(e) for e, c in f.terms.items()})


def recession(f: PolyMatrixFn, p: int) -> PolyMatrixFn:
    """p-homogeneous part governing f at infinity (zero when deg f < p)."""
    if f.degree > p:
        raise GrowthViolation(f"polynomial of degree {f.degree} exceeds growth exponent p={p}")
    parts = homogeneous_parts(f)
    return parts[p] if p < len(parts) else PolyMatrixFn(f.shape)


def homogeneity_degree(f: PolyMatrixFn):
    """Degree p if f is a nonzero p-homogeneous polynomial, else None."""
    degs = {sum(e) for e in f.terms}
    return degs.pop() if len(degs) == 1 else None


def _random_rational_point(rng, shape):
    num = rng.integers(-10**6, 10**6 + 1, size=shape)
    den = rng.integers(1, 10**6 + 1, size=shape)
    out = np.empty(shape, dtype=object)
    for idx in np.ndindex(*shape):
        out[idx] = Fraction(int(num[idx]), int(den[idx]))
    return out


def identical(f: PolyMatrixFn, g: PolyMatrixFn, seed: int = 0) -> bool:
    """Exact test f == g as polynomials.

    Five random rational evaluation points are tried first; any mismatch
    settles the answer, otherwise coefficients are compared.
    """
    if f.shape != g.shape:
        raise InvalidArgument(f"shape mismatch {f.shape} vs {g.shape}")
    rng = np.random.default_rng(seed)
    for _ in range(5):
        H = _random_rational_point(rng, f.shape)
        if evaluate(f, H) != evaluate(g, H):
            return False
    return f.terms == g.terms


# ------------------------------------------------------------ built-ins


def _perm_sign(perm):
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


@lru_cache(maxsize=None)
def minor_poly(m: int, n: int, p: tuple, q: tuple) -> PolyMatrixFn:
    """Unsigned minor det(F[(p), (q)]) with 1-based row set p and column set q."""
    if len(p) != len(q) or not p:
        raise InvalidArgument("row and column index sets must have equal nonzero size")
    if list(p) != sorted(set(p)) or list(q) != sorted(set(q)) or p[0] < 1 or q[0] < 1 or p[-1] > m or q[-1] > n:
        raise InvalidArgument(f"invalid index sets {p}, {q} for shape ({m},{n})")
    s = len(p)
    terms = {}
    for perm in itertools.permutations(range(s)):
        e = [0] * (m * n)
        for k in range(s):
            e[(p[k] - 1) * n + (q[perm[k]] - 1)] = 1
        terms[tuple(e)] = _perm_sign(perm)
    return PolyMatrixFn((m, n), terms)


def det_poly(n: int) -> PolyMatrixFn:
    return minor_poly(n, n, tuple(range(1, n + 1)), tuple(range(1, n + 1)))


def detprime_poly(n: int) -> PolyMatrixFn:
    """det' on (n-1) x n matrices: determinant of the first n-1 columns."""
    if n < 2:
        raise InvalidArgument("detprime needs n >= 2")
    idx = tuple(range(1, n))
    return minor_poly(n - 1, n, idx, idx)


def trace_poly(n: int) -> PolyMatrixFn:
    out = PolyMatrixFn((n, n))
    for i in range(n):
        out = out + PolyMatrixFn.variable((n, n), i, i)
    return out


def sqnorm_poly(m: int, n: int) -> PolyMatrixFn:
    out = PolyMatrixFn((m, n))
    for i in range(m):
        for j in range(n):
            out = out + PolyMatrixFn.variable((m, n), i, j) ** 2
    return out


def cofactor_poly(n: int) -> np.ndarray:
    """n x n object array of the signed cofactor polynomials."""
    out = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            if n == 1:
                out[i, j] = PolyMatrixFn.constant((1, 1), 1)
                continue
            rows = tuple(r + 1 for r in range(n) if r != i)
            cols = tuple(c + 1 for c in range(n) if c != j)
            mp = minor_poly(n, n, rows, cols)
            out[i, j] = mp if (i + j) % 2 == 0 else -mp
    return out


def exact_normal(rho):
    """Rational version of a normal used consistently by built-ins and decisions."""
    vals = np.asarray(rho, dtype=object).ravel()
    try:
        vec, _ = rational_unit_vector(vals)
        return vec
    except InvalidArgument:
        return tuple(_frac(x) for x in vals)


def cof_dot_poly(a, rho) -> PolyMatrixFn:
    """F -> a . [Cof F] rho on n x n matrices."""
    a = [_frac(x) for x in np.asarray(a, dtype=object).ravel()]
    r = exact_normal(rho)
    n = len(a)
    if len(r) != n:
        raise InvalidArgument("cof_dot needs a and rho of the same length")
    C = cofactor_poly(n)
    out = PolyMatrixFn((n, n))
    for i in range(n):
        for j in range(n):
            if a[i] and r[j]:
                out = out + C[i, j] * (a[i] * r[j])
    return out


_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$", re.S)


def _json_args(text):
    try:
        return json.loads("[" + text + "]")
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"cannot parse built-in arguments '{text}': {exc}") from exc


def parse_poly(source: str, m: int | None = None, n: int | None = None) -> PolyMatrixFn:
    """Polynomial from a JSON file path, a JSON string, or a built-in name.

    Built-ins: ``det``, ``detprime``, ``trace``, ``sqnorm``,
    ``cof_dot([a...],[rho...])`` and ``minor([p...],[q...])``. Shapes come
    from ``m``/``n`` where the built-in does not fix them.
    """
    if isinstance(source, PolyMatrixFn):
        return source
    text = str(source)
    if os.path.isfile(text):
        with open(text) as fh:
            return PolyMatrixFn.from_json(fh.read())
    if text.lstrip().startswith("{"):
        return PolyMatrixFn.from_json(text)
    match = _CALL.match(text)
    if not match:
        raise InvalidArgument(f"unknown polynomial source '{text}'")
    name, args = match.group(1), match.group(2)
    if name == "det":
        size = n or m
        if size is None or (m is not None and n is not None and m != n):
            raise InvalidArgument("det needs a square shape (--m/--n)")
        return det_poly(size)
    if name == "detprime":
        size = n if n is not None else (m + 1 if m is not None else None)
        if size is None or (m is not None and m != size - 1):
            raise InvalidArgument("detprime lives on (n-1) x n matrices")
        return detprime_poly(size)
    if name == "trace":
        size = n or m
        if size is None or (m is not None and n is not None and m != n):
            raise InvalidArgument("trace needs a square shape")
        return trace_poly(size)
    if name == "sqnorm":
        if m is None or n is None:
            raise InvalidArgument("sqnorm needs --m and --n")
        return sqnorm_poly(m, n)
    if name == "cof_dot":
        vals = _json_args(args or "")
        if len(vals) != 2:
            raise InvalidArgument("cof_dot takes two vectors: cof_dot([a...],[rho...])")
        return cof_dot_poly(vals[0], vals[1])
    if name == "minor":
        vals = _json_args(args or "")
        if len(vals) != 2 or m is None or n is None:
            raise InvalidArgument("minor takes two index lists and needs --m/--n")
        return minor_poly(m, n, tuple(int(x) for x in vals[0]), tuple(int(x) for x in vals[1]))
    raise InvalidArgument(f"unknown built-in polynomial '{name}'")
