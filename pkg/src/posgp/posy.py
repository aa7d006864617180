"""Exact algebra for monomials, posynomials and posynomial-valued matrices.

A monomial is c * v1^a1 * ... * vn^an with c > 0 and real exponents; a
posynomial is a finite sum of monomials.  Both are log-log convex, which is
what makes the synthesis problems in :mod:`posgp.synth` solvable by convex
optimization after a logarithmic change of variables.

Zero is deliberately not representable: a posynomial evaluates to a strictly
positive number at every positive point, so matrix entries that are zero are
stored as *absent* entries of :class:`PosyMatrix`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "VarSpace",
    "Monomial",
    "Posynomial",
    "PosyMatrix",
    "DiagMonoMatrix",
    "as_posynomial",
    "eval_monomial",
    "eval_posynomial",
    "posy_add",
    "posy_mul",
    "kron_sum_symbolic",
    "kron_sum_padded",
    "build_h2_vectors",
    "bar_factors",
    "log_domain_eval",
]


class VarSpace:
    """Ordered collection of named positive decision variables.

    Indexing is stable: ``names[i]`` always maps to slot ``i``, which is the
    coordinate used by the log-domain solver.
    """

    __slots__ = ("names", "_index")

    def __init__(self, names):
        names = tuple(names)
        for nm in names:
            if not isinstance(nm, str) or not nm:
                raise ValueError(f"invalid variable name {nm!r}")
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        self.names = names
        self._index = {nm: i for i, nm in enumerate(names)}

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def __contains__(self, name):
        return name in self._index

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __eq__(self, other):
        return isinstance(other, VarSpace) and self.names == other.names

    def __repr__(self):
        return f"VarSpace({list(self.names)!r})"

    def extended(self, extra_names):
        """New VarSpace with ``extra_names`` appended after the current ones."""
        return VarSpace(self.names + tuple(extra_names))

    def vector(self, point):
        """Assignment dict -> ndarray in slot order (all entries required, > 0)."""
        z = np.empty(len(self.names))
        for i, nm in enumerate(self.names):
            if nm not in point:
                raise KeyError(f"missing value for variable {nm!r}")
            val = float(point[nm])
            if not (val > 0.0) or not math.isfinite(val):
                raise ValueError(f"variable {nm!r} must be positive, got {val}")
            z[i] = val
        return z


class Monomial:
    """c * prod(v^a) with c > 0.  Immutable after construction."""

    __slots__ = ("coeff", "exponents")

    def __init__(self, coeff, exponents=None):
        coeff = float(coeff)
        if not (coeff > 0.0) or not math.isfinite(coeff):
            raise ValueError(f"monomial coefficient must be positive and finite, got {coeff}")
        exps = {}
        for name, a in (exponents or {}).items():
            a = float(a)
            if not math.isfinite(a):
                raise ValueError(f"non-finite exponent for {name!r}")
            if a != 0.0:
                exps[name] = a
        self.coeff = coeff
        self.exponents = exps

    @staticmethod
    def const(c):
        return Monomial(c, {})

    @staticmethod
    def var(name, power=1.0):
        return Monomial(1.0, {name: power})

    def key(self):
        """Canonical hashable exponent signature (used for like-term merging)."""
        return tuple(sorted(self.exponents.items()))

    def variables(self):
        return set(self.exponents)

    def __call__(self, point):
        return eval_monomial(self, point)

    def __mul__(self, other):
        if isinstance(other, Monomial):
            exps = dict(self.exponents)
            for name, a in other.exponents.items():
                exps[name] = exps.get(name, 0.0) + a
            return Monomial(self.coeff * other.coeff, exps)
        if isinstance(other, (int, float)):
            return Monomial(self.coeff * other, self.exponents)
        if isinstance(other, Posynomial):
            return other * self
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Monomial):
            return self * other.reciprocal()
        if isinstance(other, (int, float)):
            return Monomial(self.coeff / other, self.exponents)
        return NotImplemented

    def __pow__(self, power):
        power = float(power)
        if power == 0.0:
            return Monomial.const(1.0)
        return Monomial(
            self.coeff**power, {n: a * power for n, a in self.exponents.items()}
        )

    def reciprocal(self):
        return self**-1.0

    def __add__(self, other):
        return as_posynomial(self) + other

    __radd__ = __add__

    def __eq__(self, other):
        return (
            isinstance(other, Monomial)
            and self.coeff == other.coeff
            and self.exponents == other.exponents
        )

    def __hash__(self):
        return hash((self.coeff, self.key()))

    def __repr__(self):
        if not self.exponents:
            return f"Monomial({self.coeff})"
        body = "*".join(f"{n}^{a:g}" for n, a in sorted(self.exponents.items()))
        return f"Monomial({self.coeff:g}*{body})"


class Posynomial:
    """Non-empty sum of monomials.  Like terms are merged at construction."""

    __slots__ = ("terms",)

    def __init__(self, terms):
        merged = {}
        order = []
        for t in terms:
            if not isinstance(t, Monomial):
                raise TypeError(f"posynomial terms must be Monomial, got {type(t).__name__}")
            k = t.key()
            if k in merged:
                merged[k] = Monomial(merged[k].coeff + t.coeff, merged[k].exponents)
            else:
                merged[k] = t
                order.append(k)
        if not merged:
            raise ValueError("a posynomial needs at least one term (zero is structural)")
        self.terms = tuple(merged[k] for k in order)

    @staticmethod
    def const(c):
        return Posynomial([Monomial.const(c)])

    @staticmethod
    def var(name, power=1.0):
        return Posynomial([Monomial.var(name, power)])

    def variables(self):
        out = set()
        for t in self.terms:
            out |= t.variables()
        return out

    def is_monomial(self):
        return len(self.terms) == 1

    def as_monomial(self):
        if not self.is_monomial():
            raise ValueError("posynomial has more than one term")
        return self.terms[0]

    def __call__(self, point):
        return eval_posynomial(self, point)

    def __add__(self, other):
        other = as_posynomial(other)
        return Posynomial(self.terms + other.terms)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            other = Monomial.const(other)
        if isinstance(other, Monomial):
            return Posynomial([t * other for t in self.terms])
        if isinstance(other, Posynomial):
            return Posynomial([a * b for a in self.terms for b in other.terms])
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        if isinstance(other, Monomial):
            return self * other.reciprocal()
        if isinstance(other, Posynomial) and other.is_monomial():
            return self * other.as_monomial().reciprocal()
        raise ValueError("can only divide a posynomial by a monomial")

    def __pow__(self, power):
        if isinstance(power, int) or (isinstance(power, float) and power.is_integer()):
            k = int(power)
            if k < 0:
                return self.as_monomial() ** k
            if k == 0:
                return Posynomial.const(1.0)
            out = self
            for _ in range(k - 1):
                out = out * self
            return out
        return as_posynomial(self.as_monomial() ** power)

    def canonical_terms(self):
        """Terms sorted by exponent signature; used for equality and printing."""
        return sorted(self.terms, key=lambda t: t.key())

    def __eq__(self, other):
        if not isinstance(other, Posynomial):
            return NotImplemented
        return [(t.coeff, t.key()) for t in self.canonical_terms()] == [
            (t.coeff, t.key()) for t in other.canonical_terms()
        ]

    def __hash__(self):
        return hash(tuple((t.coeff, t.key()) for t in self.canonical_terms()))

    def __repr__(self):
        return "Posynomial(" + " + ".join(repr(t) for t in self.terms) + ")"


def as_posynomial(x):
    if isinstance(x, Posynomial):
        return x
    if isinstance(x, Monomial):
        return Posynomial([x])
    if isinstance(x, (int, float)):
        return Posynomial.const(x)
    raise TypeError(f"cannot interpret {type(x).__name__} as posynomial")


def eval_monomial(m, point):
    """Evaluate c * prod(v^a) at a positive assignment (dict name -> value)."""
    out = m.coeff
    for name, a in m.exponents.items():
        if name not in point:
            raise KeyError(f"missing value for variable {name!r}")
        v = float(point[name])
        if not (v > 0.0):
            raise ValueError(f"variable {name!r} must be positive, got {v}")
        out *= v**a
    return out


def eval_posynomial(f, point):
    return sum(eval_monomial(t, point) for t in f.terms)


def posy_add(f, g):
    return as_posynomial(f) + as_posynomial(g)


def posy_mul(f, g):
    return as_posynomial(f) * as_posynomial(g)


class PosyMatrix:
    """Matrix with posynomial entries; absent entries are structural zeros."""

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, rows, cols, entries=None):
        if rows < 0 or cols < 0:
            raise ValueError("negative matrix dimension")
        self.rows = int(rows)
        self.cols = int(cols)
        self.entries = {}
        for (i, j), val in (entries or {}).items():
            self.set(i, j, val)

    @staticmethod
    def from_numeric(arr):
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        m = PosyMatrix(arr.shape[0], arr.shape[1])
        for i in range(arr.shape[0]):
            for j in range(arr.shape[1]):
                if arr[i, j] != 0.0:
                    m.set(i, j, Posynomial.const(arr[i, j]))
        return m

    @staticmethod
    def identity(n):
        return PosyMatrix.from_numeric(np.eye(n))

    def _check(self, i, j):
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(f"entry ({i},{j}) outside {self.rows}x{self.cols} matrix")

    def set(self, i, j, value):
        self._check(i, j)
        self.entries[(i, j)] = as_posynomial(value)

    def add_at(self, i, j, value):
        """Accumulate: existing entry + value (value may be Monomial/Posynomial)."""
        self._check(i, j)
        cur = self.entries.get((i, j))
        value = as_posynomial(value)
        self.entries[(i, j)] = value if cur is None else cur + value

    def get(self, i, j):
        self._check(i, j)
        return self.entries.get((i, j))

    def row_entries(self, i):
        return [(j, f) for (r, j), f in self.entries.items() if r == i]

    @property
    def shape(self):
        return (self.rows, self.cols)

    def transpose(self):
        out = PosyMatrix(self.cols, self.rows)
        for (i, j), f in self.entries.items():
            out.set(j, i, f)
        return out

    def variables(self):
        out = set()
        for f in self.entries.values():
            out |= f.variables()
        return out

    def matmul(self, other):
        if isinstance(other, DiagMonoMatrix):
            other = other.as_posy_matrix()
        if self.cols != other.rows:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        by_row = {}
        for (i, k), f in self.entries.items():
            by_row.setdefault(i, []).append((k, f))
        by_col = {}
        for (k, j), g in other.entries.items():
            by_col.setdefault(k, []).append((j, g))
        out = PosyMatrix(self.rows, other.cols)
        for i, row in by_row.items():
            for k, f in row:
                for j, g in by_col.get(k, ()):
                    out.add_at(i, j, f * g)
        return out

    __matmul__ = matmul

    def scale(self, factor):
        out = PosyMatrix(self.rows, self.cols)
        for (i, j), f in self.entries.items():
            out.set(i, j, f * factor)
        return out

    def evaluate(self, point):
        arr = np.zeros((self.rows, self.cols))
        for (i, j), f in self.entries.items():
            arr[i, j] = eval_posynomial(f, point)
        return arr

    def __repr__(self):
        return f"PosyMatrix({self.rows}x{self.cols}, {len(self.entries)} entries)"


@dataclass(frozen=True)
class DiagMonoMatrix:
    """Diagonal matrix with monomial diagonals (the damping part of the state matrix)."""

    diagonals: tuple

    def __post_init__(self):
        diags = tuple(self.diagonals)
        for d in diags:
            if not isinstance(d, Monomial):
                raise TypeError("DiagMonoMatrix diagonals must be Monomial")
        if len(diags) == 0:
            raise ValueError("empty diagonal")
        object.__setattr__(self, "diagonals", diags)

    @property
    def n(self):
        return len(self.diagonals)

    def as_posy_matrix(self):
        m = PosyMatrix(self.n, self.n)
        for i, d in enumerate(self.diagonals):
            m.set(i, i, d)
        return m

    def evaluate(self, point):
        return np.diag([eval_monomial(d, point) for d in self.diagonals])

    def variables(self):
        out = set()
        for d in self.diagonals:
            out |= d.variables()
        return out


def kron_sum_padded(m1, mid, m2):
    """Symbolic M1 (+) O_mid (+) M2 for square posynomial matrices.

    The result has order n1*mid*n2 with row/column index (i*mid + j)*n2 + k.
    The middle zero block contributes nothing, so only M1 and M2 entries are
    scattered; diagonal collisions are merged by posynomial addition.
    """
    if m1.rows != m1.cols or m2.rows != m2.cols:
        raise ValueError("kron_sum_padded requires square blocks")
    n1, n2 = m1.rows, m2.rows
    dim = n1 * mid * n2
    out = PosyMatrix(dim, dim)
    for (i, ip), f in m1.entries.items():
        for j in range(mid):
            base_r = (i * mid + j) * n2
            base_c = (ip * mid + j) * n2
            for k in range(n2):
                out.add_at(base_r + k, base_c + k, f)
    for (k, kp), f in m2.entries.items():
        for i in range(n1):
            for j in range(mid):
                base = (i * mid + j) * n2
                out.add_at(base + k, base + kp, f)
    return out


def kron_sum_symbolic(m):
    """Symbolic Kronecker sum M (+) M = M (x) I + I (x) M for a square PosyMatrix."""
    if m.rows != m.cols:
        raise ValueError("Kronecker sum requires a square matrix")
    return kron_sum_padded(m, 1, m)


def build_h2_vectors(b, c):
    """Self-Kronecker contractions of the input and output maps.

    Returns (btilde, ctilde) where btilde is the n_x^2 column vector
    sum_j B_j (x) B_j over columns of B and ctilde is the n_x^2 row vector
    sum_i C_i (x) C_i over rows of C.  These contract the impulse-response
    energy into a single linear form.
    """
    nx = b.rows
    if c.cols != nx:
        raise ValueError(f"B has {nx} states but C has {c.cols} columns")
    btilde = PosyMatrix(nx * nx, 1)
    for j in range(b.cols):
        col = [(i, f) for (i, jj), f in b.entries.items() if jj == j]
        for k, fk in col:
            for l, fl in col:
                btilde.add_at(k * nx + l, 0, fk * fl)
    ctilde = PosyMatrix(1, nx * nx)
    for i in range(c.rows):
        row = [(j, f) for (ii, j), f in c.entries.items() if ii == i]
        for k, fk in row:
            for l, fl in row:
                ctilde.add_at(0, k * nx + l, fk * fl)
    return btilde, ctilde


def bar_factors(m):
    """Left/right Kronecker factors of a Grammian for an n x k posynomial matrix.

    For M of shape (n, k) returns (M1, M2) with M1 of shape (n, n^2*k) and M2
    of shape (n^2*k, n) such that, numerically, the controllability Grammian
    of (F, M) equals -M1 (F (+) O_k (+) F^T)^{-1} M2.  The observability
    counterpart is obtained by passing M = C^T.
    """
    n, k = m.rows, m.cols
    m1 = PosyMatrix(n, n * n * k)
    m2 = PosyMatrix(n * n * k, n)
    for (r, j), f in m.entries.items():
        for i in range(n):
            m1.set(i, (i * k + j) * n + r, f)
            m2.set((r * k + j) * n + i, i, f)
    return m1, m2


def log_domain_eval(f, vs, z):
    """Value, gradient and Hessian of F(z) = log f(exp(z)).

    Exact softmax-weighted formulas with max-term factoring for overflow
    safety.  The Hessian A^T (diag(w) - w w^T) A is positive semidefinite,
    which is what makes the transformed problem convex.
    """
    f = as_posynomial(f)
    z = np.asarray(z, dtype=float)
    n = len(vs)
    if z.shape != (n,):
        raise ValueError(f"z has shape {z.shape}, expected ({n},)")
    T = len(f.terms)
    A = np.zeros((T, n))
    y = np.empty(T)
    for t, mono in enumerate(f.terms):
        acc = math.log(mono.coeff)
        for name, a in mono.exponents.items():
            j = vs.index(name)
            A[t, j] = a
            acc += a * z[j]
        y[t] = acc
    m = y.max()
    w = np.exp(y - m)
    s = w.sum()
    val = m + math.log(s)
    w /= s
    grad = A.T @ w
    hess = A.T @ (A * w[:, None]) - np.outer(grad, grad)
    return val, grad, hess
