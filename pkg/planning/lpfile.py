"""CPLEX LP-format export of a ProblemSpec, readable by CBC, HiGHS and Gurobi."""

import numpy as np

from grid.io import atomic_write_text
from planning.problem import BINARY, SENSES

TERMS_PER_LINE = 8
_LP_SENSE = {"<=": "<=", "==": "=", ">=": ">="}


def _num(value):
    return f"{value:.12g}"


def _terms(coefs, names):
    parts = []
    for c, name in zip(coefs, names):
        sign = "-" if c < 0 else "+"
        magnitude = abs(c)
        parts.append(f"{sign} {name}" if magnitude == 1.0 else f"{sign} {_num(magnitude)} {name}")
    lines = [" ".join(parts[i:i + TERMS_PER_LINE]) for i in range(0, len(parts), TERMS_PER_LINE)]
    return "\n   ".join(lines)


def lp_text(spec):
    names = spec.variable_names()
    if not names:
        raise ValueError("cannot export a problem without variables")
    out = [f"\\ Problem: {spec.name}"]
    if spec.objective.constant:
        out.append(f"\\ Objective constant: {_num(spec.objective.constant)}")

    out.append("Maximize" if spec.maximize else "Minimize")
    obj = spec.objective_vector()
    nz = np.flatnonzero(obj)
    body = _terms(obj[nz], [names[i] for i in nz]) if nz.size else f"0 {names[0]}"
    out.append(f" obj: {body}")

    out.append("Subject To")
    a, senses, rhs = spec.matrix()
    row_names = spec.row_names()
    for r in range(spec.n_rows):
        start, end = a.indptr[r], a.indptr[r + 1]
        cols, vals = a.indices[start:end], a.data[start:end]
        body = _terms(vals, [names[j] for j in cols]) if cols.size else f"0 {names[0]}"
        out.append(f" {row_names[r]}: {body} {_LP_SENSE[SENSES[senses[r]]]} {_num(rhs[r])}")

    out.append("Bounds")
    kinds = spec.kinds
    for name, kind, lo, hi in zip(names, kinds, spec.lower_bounds, spec.upper_bounds):
        if kind == BINARY and lo == 0.0 and hi == 1.0:
            continue
        if lo == hi:
            out.append(f" {name} = {_num(lo)}")
        elif np.isinf(lo) and np.isinf(hi):
            out.append(f" {name} free")
        elif np.isinf(lo):
            out.append(f" -inf <= {name} <= {_num(hi)}")
        elif np.isinf(hi):
            if lo != 0.0:
                out.append(f" {name} >= {_num(lo)}")
        else:
            out.append(f" {_num(lo)} <= {name} <= {_num(hi)}")

    binaries = [name for name, kind in zip(names, kinds) if kind == BINARY]
    if binaries:
        out.append("Binaries")
        out.extend(f" {name}" for name in binaries)
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(spec, path):
    return atomic_write_text(path, lp_text(spec))
