import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bfstar.collocation as col
from bfstar.collocation import (
    BoundaryRows,
    CollocationError,
    HermiteGridFunction,
    LinearBVP,
    assemble,
    build_mesh,
    collocation_points,
    defect_norm,
    evaluate,
    solve,
    solve_many,
    stretch_ratio,
)


def zero_Q(n):
    return lambda x: np.zeros((n, n, np.size(x)))


def sin_problem():
    # -u' = -cos x, u(0) = 0
    return LinearBVP(1, zero_Q(1), BoundaryRows.selector([1.0]), BoundaryRows(np.zeros((0, 1))),
                     lambda x: -np.cos(x)[None, :])


def exp_problem():
    # s' = [[0, 1], [1, 0]] s with s = (cosh, sinh)
    def Q(x):
        q = np.zeros((2, 2, np.size(x)))
        q[0, 1] = q[1, 0] = 1.0
        return q

    return LinearBVP(2, Q, BoundaryRows.selector([1, 0]), BoundaryRows.selector([0, 1]), None)


def max_error(y, exact, n_sample=2001):
    x = np.linspace(y.mesh.a, y.mesh.b, n_sample)
    return np.max(np.abs(y.evaluate(x)[0] - exact(x)))


# ---------------------------------------------------------------- meshes


def test_uniform_mesh():
    m = build_mesh(0.0, 1.0, 4)
    np.testing.assert_array_equal(m.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert m.n_cells == 4


def test_geometric_mesh():
    m = build_mesh(1.0, 41.0, 4, "geometric", ratio=2.0)
    np.testing.assert_allclose(m.widths, [40 / 15, 80 / 15, 160 / 15, 320 / 15], rtol=1e-14)
    assert m.nodes[0] == 1.0 and m.nodes[-1] == 41.0
    r = build_mesh(1.0, 41.0, 4, "geometric", ratio=2.0, toward="right")
    np.testing.assert_allclose(r.widths, m.widths[::-1], rtol=1e-14)


def test_mesh_is_reproducible():
    a = build_mesh(1.0, 90.0, 50, "geometric", ratio=stretch_ratio(50, 100))
    b = build_mesh(1.0, 90.0, 50, "geometric", ratio=stretch_ratio(50, 100))
    assert a.nodes.tobytes() == b.nodes.tobytes()
    assert a.widths[-1] / a.widths[0] == pytest.approx(100.0)


@pytest.mark.parametrize("args", [(1.0, 0.0, 4), (0.0, 1.0, 1), (0.0, np.inf, 4), (0.0, 1.0, 2.5)])
def test_mesh_rejects_bad_input(args):
    with pytest.raises(ValueError):
        build_mesh(*args)


# -------------------------------------------------------------- solving


def test_constant_solution_is_exact():
    bvp = LinearBVP(1, zero_Q(1), BoundaryRows.selector([1.0]), BoundaryRows(np.zeros((0, 1))))
    y = solve(bvp, build_mesh(0.0, 1.0, 8), [1.0], np.zeros(0))
    np.testing.assert_allclose(y.values, 1.0, atol=1e-15)
    np.testing.assert_allclose(y.derivs, 0.0, atol=1e-15)


def test_manufactured_convergence_order():
    errs = []
    for N in (16, 32, 64, 128):
        y = solve(sin_problem(), build_mesh(0.0, 1.0, N), [0.0], np.zeros(0))
        errs.append(max_error(y, lambda x: np.sin(x)[None, :]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.8), orders


def test_exponential_system():
    y = solve(exp_problem(), build_mesh(0.0, 1.0, 64), [1.0], [np.sinh(1.0)])
    err = max_error(y, lambda x: np.stack([np.cosh(x), np.sinh(x)]))
    assert err < 1e-8
    # boundary rows hold to rounding
    assert abs(y.values[0, 0] - 1.0) < 1e-12
    assert abs(y.values[1, -1] - np.sinh(1.0)) < 1e-12


def test_graded_mesh_convergence():
    errs = []
    for N in (16, 32, 64):
        m = build_mesh(0.0, 1.0, N, "geometric", ratio=stretch_ratio(N, 10.0))
        y = solve(exp_problem(), m, [1.0], [np.sinh(1.0)])
        errs.append(max_error(y, lambda x: np.stack([np.cosh(x), np.sinh(x)])))
    assert np.log2(errs[1] / errs[2]) >= 3.8


def test_robin_row():
    # u' = u on [0, 1] with u(0) + u'(0) = 2 has u = e^x
    Q = lambda x: np.ones((1, 1, np.size(x)))
    bvp = LinearBVP(1, Q, BoundaryRows([[1.0]], [[1.0]]), BoundaryRows(np.zeros((0, 1))))
    y = solve(bvp, build_mesh(0.0, 1.0, 32), [2.0], np.zeros(0))
    assert max_error(y, lambda x: np.exp(x)[None, :]) < 1e-7


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), c=st.floats(-3, 3))
def test_superposition(a, b, c):
    mesh = build_mesh(0.0, 2.0, 20)
    sys = assemble(exp_problem(), mesh)
    r = lambda x: np.stack([np.cos(3 * x), x * x])
    s_r, s_d, s_rd = solve_many(sys, [(r, ([0.0], [0.0])), (None, ([b], [c])), (r, ([b], [c]))])
    combo = s_r.scaled(a) + s_d
    full = solve_many(sys, [(lambda x: a * r(x), ([b], [c]))])[0]
    scale = 1.0 + np.max(np.abs(full.values))
    np.testing.assert_allclose(combo.values, full.values, atol=1e-12 * scale)
    np.testing.assert_allclose((s_r + s_d).values, s_rd.values, atol=1e-12 * (1 + np.max(np.abs(s_rd.values))))


def test_batch_is_bitwise_deterministic():
    mesh = build_mesh(0.0, 1.0, 30)
    sys = assemble(exp_problem(), mesh)
    r = lambda x: np.stack([np.sin(x), np.ones_like(x)])
    y1, y2 = solve_many(sys, [(r, ([1.0], [2.0])), (r, ([1.0], [2.0]))])
    assert y1.values.tobytes() == y2.values.tobytes()
    assert y1.derivs.tobytes() == y2.derivs.tobytes()
    y3 = solve(LinearBVP(2, exp_problem().Q, exp_problem().left, exp_problem().right, r), mesh, [1.0], [2.0])
    assert y1.values.tobytes() == y3.values.tobytes()


def test_single_factorization_for_a_batch(monkeypatch):
    calls = []
    real = col._factorize

    def counting(*args):
        calls.append(1)
        return real(*args)

    monkeypatch.setattr(col, "_factorize", counting)
    sys = assemble(exp_problem(), build_mesh(0.0, 1.0, 16))
    solve_many(sys, [(None, ([1.0], [0.0])) for _ in range(4)])
    assert len(calls) == 1


def test_precomputed_coefficients_match_callables():
    mesh = build_mesh(0.0, 1.0, 10)
    bvp = exp_problem()
    xs = collocation_points(mesh)
    arr = LinearBVP(2, bvp.Q(xs), bvp.left, bvp.right)
    a = solve(bvp, mesh, [1.0], [0.5])
    b = solve(arr, mesh, [1.0], [0.5])
    assert a.values.tobytes() == b.values.tobytes()


def test_boundary_count_mismatch():
    with pytest.raises(ValueError):
        LinearBVP(2, zero_Q(2), BoundaryRows.selector([1, 1]), BoundaryRows.selector([1, 0]))
    sys = assemble(exp_problem(), build_mesh(0.0, 1.0, 4))
    with pytest.raises(ValueError):
        solve_many(sys, [(None, ([1.0, 2.0], [0.0]))])


def test_singular_system_reports_pivot():
    # both conditions on the same component at the same end
    bvp = LinearBVP(2, zero_Q(2), BoundaryRows(np.array([[1.0, 0.0], [2.0, 0.0]])), BoundaryRows(np.zeros((0, 2))))
    with pytest.raises(CollocationError) as exc:
        assemble(bvp, build_mesh(0.0, 1.0, 4))
    assert exc.value.node >= 0


# -------------------------------------------------------------- evaluate


def test_evaluate_nodes_and_linear_midpoint():
    mesh = build_mesh(0.0, 3.0, 3)
    vals = np.array([[1.0, 3.0, 5.0, 7.0]])
    f = HermiteGridFunction(mesh, vals, np.full((1, 4), 2.0))
    v, d = evaluate(f, mesh.nodes)
    np.testing.assert_array_equal(v, vals)
    v, d = evaluate(f, mesh.midpoints)
    np.testing.assert_allclose(v[0], [2.0, 4.0, 6.0], rtol=1e-15)
    np.testing.assert_allclose(d[0], 2.0, rtol=1e-15)


@settings(max_examples=30, deadline=None)
@given(coef=st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_cubic_reproduction(coef):
    p = np.polynomial.Polynomial(coef)
    mesh = build_mesh(-1.0, 2.0, 7, "geometric", ratio=1.3)
    f = HermiteGridFunction(mesh, p(mesh.nodes)[None, :], p.deriv()(mesh.nodes)[None, :])
    x = np.linspace(-1.0, 2.0, 301)
    v, d = evaluate(f, x)
    scale = 1.0 + np.sum(np.abs(coef)) * 8
    np.testing.assert_allclose(v[0], p(x), atol=1e-13 * scale)
    np.testing.assert_allclose(d[0], p.deriv()(x), atol=1e-12 * scale)


def test_evaluate_out_of_domain():
    mesh = build_mesh(0.0, 1.0, 4)
    f = HermiteGridFunction(mesh, np.zeros((1, 5)), np.zeros((1, 5)))
    with pytest.raises(ValueError):
        evaluate(f, [1.5])


# -------------------------------------------------------------- defect


def test_defect_of_exact_polynomial_solution():
    # u' = 3x^2 + 1 is satisfied exactly by the cubic u = x^3 + x
    mesh = build_mesh(0.0, 1.0, 10)
    x = mesh.nodes
    f = HermiteGridFunction(mesh, (x ** 3 + x)[None, :], (3 * x * x + 1)[None, :])
    rhs = lambda xs, y: (3 * xs * xs + 1)[None, :]
    assert defect_norm(f, rhs, 1.0) < 1e-10


def test_defect_of_collocation_solution():
    mesh = build_mesh(0.0, 1.0, 32)
    y = solve(exp_problem(), mesh, [1.0], [np.sinh(1.0)])
    rhs = lambda xs, v: np.stack([v[1], v[0]])
    assert defect_norm(y, rhs, 1.0) < 1e-10


def test_defect_zero_state():
    from bfstar.model import ModelParams, rhs_outer

    mesh = build_mesh(1.0, 20.0, 12)
    f = HermiteGridFunction(mesh, np.zeros((6, 13)), np.zeros((6, 13)))
    p = ModelParams()
    assert defect_norm(f, lambda x, y: rhs_outer(x, y, 2.0, 0.9, p), 2.0) == 0.0


def test_defect_refinement_of_interpolated_solution():
    # interpolating e^x: the defect falls at the interpolation order
    d = []
    for N in (8, 16, 32):
        mesh = build_mesh(0.0, 1.0, N)
        e = np.exp(mesh.nodes)[None, :]
        f = HermiteGridFunction(mesh, e, e)
        d.append(defect_norm(f, lambda xs, v: v, 1.0))
    assert d[0] > d[1] > d[2]
    assert np.log2(d[1] / d[2]) > 2.5
