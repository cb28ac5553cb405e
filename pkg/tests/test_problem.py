import numpy as np
import pytest

from grid.errors import SolverError
from planning.backends import ERROR, INFEASIBLE, OPTIMAL, HighsBackend, PulpBackend, make_backend
from planning.lpfile import lp_text, write_lp
from planning.problem import BINARY, EQ, FREE, GE, LE, LinExpr, ProblemSpec, VarRef

BACKENDS = [HighsBackend, PulpBackend]


def knapsack():
    spec = ProblemSpec("knapsack")
    x = spec.add_var_block("x", [("a", "b", "c")], kind=BINARY)
    spec.add_constraint(LinExpr.total([2.0, 3.0, 1.0], x.index), LE, 4.0, name="weight")
    spec.set_objective(LinExpr.total([5.0, 4.0, 3.0], x.index), maximize=True)
    return spec, x


def test_var_blocks_and_names():
    """Blocks are contiguous and named prefix_label..."""
    spec = ProblemSpec()
    a = spec.add_var_block("f", [("l1", "l2"), (0, 1, 2)], kind=FREE)
    b = spec.add_var("lam")
    assert a.index.shape == (2, 3)
    assert b.index == 6
    names = spec.variable_names()
    assert names[:3] == ["f_l1_0", "f_l1_1", "f_l1_2"]
    assert names[-1] == "lam"
    assert spec.var_index("f_l2_1") == 4
    assert np.isinf(spec.lower_bounds[:6]).all()
    assert spec.lower_bounds[6] == 0.0


def test_add_rows_broadcasts():
    """One call adds a full row block and the CSR matrix holds every coefficient."""
    spec = ProblemSpec()
    x = spec.add_var_block("x", [range(3), range(4)])
    y = spec.add_var_block("y", [range(4)])
    rows = spec.add_rows("r", [(1.0, x.index), (-2.0, y.index[None, :])], LE, np.arange(3)[:, None])
    assert rows.shape == (3, 4)
    a, senses, rhs = spec.matrix()
    assert a.shape == (12, 16)
    assert a.nnz == 24
    assert a[5, x.index[1, 1]] == 1.0
    assert a[5, y.index[1]] == -2.0
    assert rhs[5] == 1.0
    assert len(set(spec.row_names())) == 12


def test_zero_coefficients_are_dropped():
    """Explicit zeros never reach the matrix."""
    spec = ProblemSpec()
    x = spec.add_var_block("x", [range(3)])
    spec.add_rows("r", [(np.array([1.0, 0.0, 2.0]), x.index)], GE, 0.0)
    a, _, _ = spec.matrix()
    assert a.nnz == 2


def test_linexpr_arithmetic():
    """Expressions combine terms and carry the constant to the row bound."""
    spec = ProblemSpec()
    u, v = spec.add_var("u"), spec.add_var("v")
    expr = 2.0 * u + v - 3.0 - u
    assert expr.terms == {0: 1.0, 1: 1.0}
    assert expr.constant == -3.0
    row = spec.add_constraint(expr, EQ, 1.0)
    assert row.rhs == 4.0
    assert expr.evaluate([1.0, 2.0]) == 0.0


def test_check_rejects_undeclared_variable():
    """Rows may only reference declared variables."""
    spec = ProblemSpec()
    spec.add_var("u")
    spec.add_constraint(VarRef(5, "ghost") + 0.0, LE, 1.0)
    with pytest.raises(ValueError):
        spec.check()


@pytest.mark.parametrize("backend", BACKENDS)
def test_malformed_spec_solves_to_error(backend):
    """A spec that fails its own check comes back as an error status, not an exception."""
    spec = ProblemSpec("ghosted")
    spec.add_var("u")
    spec.add_constraint(VarRef(5, "ghost") + 0.0, LE, 1.0)
    solution = backend().solve(spec)
    assert solution.status == ERROR
    assert "undeclared" in solution.message
    assert solution.backend == backend.name


@pytest.mark.parametrize("backend", BACKENDS)
def test_backends_solve_knapsack(backend):
    """Both backends find the same optimal selection."""
    spec, x = knapsack()
    solution = backend().solve(spec)
    assert solution.status == OPTIMAL
    assert solution.objective == pytest.approx(8.0)
    assert np.allclose(solution.block(x), [1.0, 0.0, 1.0])


@pytest.mark.parametrize("backend", BACKENDS)
def test_backends_report_infeasible(backend):
    """An empty feasible set is a status, not an exception."""
    spec = ProblemSpec("infeasible")
    u = spec.add_var("u", ub=1.0)
    spec.add_constraint(u, GE, 2.0)
    spec.set_objective(u)
    solution = backend().solve(spec)
    assert solution.status == INFEASIBLE
    assert not solution.has_values


def test_backends_agree_on_continuous_mix():
    """A small MILP with free and bounded variables gives the same objective on both backends."""
    spec = ProblemSpec("mix")
    z = spec.add_var("z", kind=FREE)
    w = spec.add_var("w", ub=3.0)
    b = spec.add_var("b", kind=BINARY)
    spec.add_constraint(z - w, GE, -1.5)
    spec.add_constraint(z + 4.0 * b, GE, 2.0)
    spec.add_constraint(w + b, LE, 2.5)
    spec.set_objective(z + 0.5 * b + 0.1 * w)
    highs = HighsBackend().solve(spec)
    cbc = PulpBackend().solve(spec)
    assert highs.objective == pytest.approx(cbc.objective, abs=1e-6)


def test_make_backend():
    """Backends are selected by name."""
    assert isinstance(make_backend("highs"), HighsBackend)
    assert isinstance(make_backend("CBC"), PulpBackend)
    with pytest.raises(SolverError):
        make_backend("gurobi")


def test_lp_export(tmp_path):
    """The LP file carries the sense, rows, bounds and binaries."""
    spec, _ = knapsack()
    spec.add_var("slack", kind=FREE)
    text = lp_text(spec)
    assert text.startswith("\\ Problem: knapsack")
    assert "Maximize" in text
    assert " weight: + 2 x_a + 3 x_b + x_c <= 4" in text
    assert " slack free" in text
    assert text.rstrip().endswith("End")
    binaries = text.split("Binaries\n")[1]
    assert binaries.split() == ["x_a", "x_b", "x_c", "End"]
    path = write_lp(spec, tmp_path / "model.lp")
    assert path.read_text() == text
