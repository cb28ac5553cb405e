"""
Solver-agnostic MILP container.

Variables live in contiguous index ranges. Scalar variables come from
``add_var``; arrays of variables come from ``add_var_block`` and are addressed
through integer index arrays so that constraint families can be added as
broadcast row blocks with ``add_rows``. Rows are stored in COO chunks and
assembled into one CSR matrix on demand.
"""

import logging
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

NONNEG = "continuous-nonneg"
FREE = "continuous-free"
BINARY = "binary"
KINDS = (NONNEG, FREE, BINARY)

LE, EQ, GE = "<=", "==", ">="
SENSES = (LE, EQ, GE)

_DEFAULT_BOUNDS = {NONNEG: (0.0, np.inf), FREE: (-np.inf, np.inf), BINARY: (0.0, 1.0)}
_UNSAFE = re.compile(r"[^A-Za-z0-9_.]")


def safe_label(label):
    """LP-format-safe fragment of a variable or row name."""
    return _UNSAFE.sub("_", str(label))


def _name(prefix, labels):
    return "_".join([prefix] + [safe_label(x) for x in labels])


@dataclass(frozen=True)
class VarRef:
    index: int
    name: str

    def __mul__(self, coef):
        return LinExpr({self.index: float(coef)})

    __rmul__ = __mul__

    def __add__(self, other):
        return LinExpr.of(self) + other

    __radd__ = __add__

    def __sub__(self, other):
        return LinExpr.of(self) - other

    def __rsub__(self, other):
        return LinExpr.of(other) - self

    def __neg__(self):
        return LinExpr({self.index: -1.0})


@dataclass
class LinExpr:
    terms: dict = field(default_factory=dict)
    constant: float = 0.0

    @classmethod
    def of(cls, value):
        if isinstance(value, LinExpr):
            return cls(dict(value.terms), value.constant)
        if isinstance(value, VarRef):
            return cls({value.index: 1.0})
        return cls({}, float(value))

    @classmethod
    def total(cls, coefs, indices):
        """sum_i coefs[i] * x[indices[i]] with broadcasting; duplicate indices add up."""
        coefs, indices = np.broadcast_arrays(np.asarray(coefs, dtype=float), np.asarray(indices))
        expr = cls()
        for i, c in zip(indices.ravel().tolist(), coefs.ravel().tolist()):
            expr.terms[i] = expr.terms.get(i, 0.0) + c
        return expr

    def __add__(self, other):
        other = LinExpr.of(other)
        terms = dict(self.terms)
        for i, c in other.terms.items():
            terms[i] = terms.get(i, 0.0) + c
        return LinExpr(terms, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self):
        return LinExpr({i: -c for i, c in self.terms.items()}, -self.constant)

    def __sub__(self, other):
        return self + (-LinExpr.of(other))

    def __rsub__(self, other):
        return LinExpr.of(other) - self

    def __mul__(self, coef):
        coef = float(coef)
        return LinExpr({i: c * coef for i, c in self.terms.items()}, self.constant * coef)

    __rmul__ = __mul__

    def evaluate(self, values):
        return self.constant + sum(c * values[i] for i, c in self.terms.items())


@dataclass(frozen=True)
class Constraint:
    """``expr sense rhs`` with the expression constant already moved to ``rhs``."""
    name: str
    expr: LinExpr
    sense: str
    rhs: float


class VarBlock:
    """An n-dimensional array of variables named ``prefix_label0_label1...``."""

    def __init__(self, prefix, axes, start):
        self.prefix = prefix
        self.axes = [tuple(axis) for axis in axes]
        self.shape = tuple(len(axis) for axis in self.axes)
        self.size = int(np.prod(self.shape)) if self.shape else 1
        self.start = start
        self.index = np.arange(start, start + self.size).reshape(self.shape)

    def names(self):
        grid = np.indices(self.shape).reshape(len(self.shape), -1).T
        return [_name(self.prefix, [axis[i] for axis, i in zip(self.axes, pos)]) for pos in grid]

    def ref(self, *pos):
        return VarRef(int(self.index[pos]), _name(self.prefix, [axis[i] for axis, i in zip(self.axes, pos)]))

    def __len__(self):
        return self.shape[0] if self.shape else 1


class ProblemSpec:
    """
    Variables, linear rows and a linear objective, independent of any solver.

    Every row reads ``sum(a_ij * x_j) sense rhs_i``.
    """

    def __init__(self, name="problem"):
        self.name = name
        self.n_vars = 0
        self.n_rows = 0
        self.blocks = []
        self.objective = LinExpr()
        self.maximize = False
        self._lb, self._ub, self._kind = [], [], []
        self._var_names = []  # (start, names or VarBlock)
        self._row_chunks = []  # (rows, cols, vals)
        self._senses, self._rhs = [], []
        self._row_names = []  # (start, count, prefix, axes or explicit names)

    # ------------------------------------------------------------ variables

    def _bounds(self, kind, lb, ub, shape):
        if kind not in KINDS:
            raise ValueError(f"unknown variable kind {kind!r}")
        dlo, dhi = _DEFAULT_BOUNDS[kind]
        lo = np.broadcast_to(np.asarray(dlo if lb is None else lb, dtype=float), shape).ravel()
        hi = np.broadcast_to(np.asarray(dhi if ub is None else ub, dtype=float), shape).ravel()
        if (lo > hi).any():
            raise ValueError("variable lower bound exceeds upper bound")
        return lo, hi

    def add_var(self, name, kind=NONNEG, lb=None, ub=None):
        lo, hi = self._bounds(kind, lb, ub, ())
        index = self.n_vars
        self._lb.extend(lo.tolist())
        self._ub.extend(hi.tolist())
        self._kind.append(kind)
        self._var_names.append((index, [name]))
        self.n_vars += 1
        self.__dict__.pop("_name_index", None)
        return VarRef(index, name)

    def add_var_block(self, prefix, axes, kind=NONNEG, lb=None, ub=None):
        block = VarBlock(prefix, axes, self.n_vars)
        lo, hi = self._bounds(kind, lb, ub, block.shape)
        self._lb.extend(lo.tolist())
        self._ub.extend(hi.tolist())
        self._kind.extend([kind] * block.size)
        self._var_names.append((block.start, block))
        self.blocks.append(block)
        self.n_vars += block.size
        self.__dict__.pop("_name_index", None)
        return block

    def set_bounds(self, index, lb=None, ub=None):
        """Tighten or fix bounds of one variable or an index array."""
        for i in np.atleast_1d(np.asarray(index)).ravel().tolist():
            if lb is not None:
                self._lb[i] = float(lb)
            if ub is not None:
                self._ub[i] = float(ub)

    def fix(self, var, value):
        index = var.index if isinstance(var, VarRef) else var
        self.set_bounds(index, value, value)

    @property
    def lower_bounds(self):
        return np.array(self._lb, dtype=float)

    @property
    def upper_bounds(self):
        return np.array(self._ub, dtype=float)

    @property
    def kinds(self):
        return list(self._kind)

    def integrality(self):
        return np.array([1 if k == BINARY else 0 for k in self._kind], dtype=np.uint8)

    def variable_names(self):
        names = []
        for _, entry in self._var_names:
            names.extend(entry.names() if isinstance(entry, VarBlock) else entry)
        return names

    @cached_property
    def _name_index(self):
        return {name: i for i, name in enumerate(self.variable_names())}

    def var_index(self, name):
        return self._name_index[name]

    # ------------------------------------------------------------ rows

    def add_rows(self, prefix, terms, sense, rhs, axes=None):
        """
        Add a broadcast block of rows ``sum_t coef_t * x[idx_t] sense rhs``.

        Args:
            prefix (str): row name prefix
            terms (list[tuple]): (coef, idx) pairs; coef and idx broadcast to
                the common row shape
            sense (str): one of "<=", "==", ">="
            rhs (float or np.ndarray): broadcast to the row shape
            axes (list or None): labels per axis of the row shape, for names
        Returns:
            np.ndarray: row indices with the row shape
        """
        if sense not in SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        shapes = [np.shape(rhs)]
        for coef, idx in terms:
            shapes.extend([np.shape(coef), np.shape(idx)])
        shape = np.broadcast_shapes(*shapes)
        count = int(np.prod(shape)) if shape else 1
        rows = np.arange(self.n_rows, self.n_rows + count).reshape(shape)

        for coef, idx in terms:
            c = np.broadcast_to(np.asarray(coef, dtype=float), shape).ravel()
            j = np.broadcast_to(np.asarray(idx, dtype=np.int64), shape).ravel()
            keep = c != 0.0
            if keep.any():
                self._row_chunks.append((rows.ravel()[keep], j[keep], c[keep]))

        self._senses.append(np.full(count, SENSES.index(sense), dtype=np.int8))
        self._rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), shape).ravel().copy())
        if axes is None:
            axes = [tuple(range(n)) for n in shape]
        self._row_names.append((self.n_rows, count, prefix, [tuple(a) for a in axes]))
        self.n_rows += count
        return rows

    def add_constraint(self, expr, sense, rhs=0.0, name=None):
        expr = LinExpr.of(expr)
        name = name or f"c{self.n_rows}"
        constraint = Constraint(name, LinExpr(dict(expr.terms)), sense, float(rhs) - expr.constant)
        indices = np.array(list(constraint.expr.terms.keys()), dtype=np.int64)
        coefs = np.array(list(constraint.expr.terms.values()), dtype=float)
        if sense not in SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        row = self.n_rows
        keep = coefs != 0.0
        if keep.any():
            self._row_chunks.append((np.full(int(keep.sum()), row), indices[keep], coefs[keep]))
        self._senses.append(np.array([SENSES.index(sense)], dtype=np.int8))
        self._rhs.append(np.array([constraint.rhs]))
        self._row_names.append((row, 1, None, [name]))
        self.n_rows += 1
        return constraint

    def row_names(self):
        names = []
        for _, count, prefix, axes in self._row_names:
            if prefix is None:
                names.extend(axes)
                continue
            shape = tuple(len(a) for a in axes)
            grid = np.indices(shape).reshape(len(shape), -1).T if shape else np.zeros((1, 0), dtype=int)
            names.extend(_name(prefix, [axis[i] for axis, i in zip(axes, pos)]) for pos in grid)
        return names

    def matrix(self):
        """Constraint matrix (CSR), senses (codes into SENSES) and right-hand sides."""
        if self._row_chunks:
            rows = np.concatenate([c[0] for c in self._row_chunks])
            cols = np.concatenate([c[1] for c in self._row_chunks])
            vals = np.concatenate([c[2] for c in self._row_chunks])
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        a = sp.coo_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_vars)).tocsr()
        a.sum_duplicates()
        senses = np.concatenate(self._senses) if self._senses else np.zeros(0, dtype=np.int8)
        rhs = np.concatenate(self._rhs) if self._rhs else np.zeros(0)
        return a, senses, rhs

    def row_bounds(self):
        """(A, lo, hi) with ``lo <= A x <= hi``."""
        a, senses, rhs = self.matrix()
        lo = np.where(senses == SENSES.index(LE), -np.inf, rhs)
        hi = np.where(senses == SENSES.index(GE), np.inf, rhs)
        return a, lo, hi

    # ------------------------------------------------------------ objective

    def set_objective(self, expr, maximize=False):
        self.objective = LinExpr.of(expr)
        self.maximize = maximize

    def objective_vector(self):
        c = np.zeros(self.n_vars)
        for i, coef in self.objective.terms.items():
            c[i] += coef
        return c

    # ------------------------------------------------------------ checks

    def check(self):
        """Raise ValueError on references to undeclared variables or duplicate names."""
        for rows, cols, _ in self._row_chunks:
            if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
                raise ValueError(f"{self.name}: row references an undeclared variable")
        for i in self.objective.terms:
            if not 0 <= i < self.n_vars:
                raise ValueError(f"{self.name}: objective references an undeclared variable")
        names = self.variable_names()
        if len(set(names)) != len(names):
            raise ValueError(f"{self.name}: duplicate variable names")

    def stats(self):
        a, _, _ = self.matrix()
        return {"variables": self.n_vars, "binaries": int(self.integrality().sum()),
                "rows": self.n_rows, "nonzeros": int(a.nnz)}
