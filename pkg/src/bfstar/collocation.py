"""Fourth-order Hermite spline collocation for linear first-order BVPs.

The linear problem is ``-s'(x) + Q(x) s(x) = r(x)`` on ``[a, b]`` with
separated linear boundary conditions

    B_a s(a) + C_a s'(a) = d_a,      B_b s(b) + C_b s'(b) = d_b.

The solution is a C^1 piecewise cubic stored by nodal values and nodal
derivatives.  The ODE is collocated at every node (which ties each derivative
unknown to the values) and at every cell midpoint; this is the three-point
Lobatto scheme, fourth order in the max norm.  Unknowns are ordered node by
node, so the global matrix is banded and is factorized once with LAPACK
``gbtrf`` and reused for any number of right-hand sides.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack


class CollocationError(np.linalg.LinAlgError):
    """Singular collocation matrix."""

    def __init__(self, pivot, node):
        self.pivot = pivot
        self.node = node
        super().__init__(f"singular collocation matrix: zero pivot {pivot} (near node {node})")


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray
    grading: str = "uniform"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a mesh needs at least 2 cells")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def a(self):
        return self.nodes[0]

    @property
    def b(self):
        return self.nodes[-1]

    @property
    def n_cells(self):
        return self.nodes.size - 1

    @property
    def widths(self):
        return np.diff(self.nodes)

    @property
    def midpoints(self):
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])


def build_mesh(a, b, n_cells, grading="uniform", ratio=None, toward="left"):
    """Partition ``[a, b]`` into ``n_cells`` intervals.

    Parameters
    ----------
    a, b : float
        Interval ends, ``a < b``.
    n_cells : int
        Number of cells, at least 2.
    grading : {"uniform", "geometric"}
        Geometric grading makes successive cell widths grow by ``ratio`` away
        from the ``toward`` end.
    ratio : float, optional
        Width ratio of neighbouring cells for geometric grading.
    toward : {"left", "right"}
        End that receives the smallest cells.
    """
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise ValueError(f"invalid interval [{a}, {b}]")
    if int(n_cells) != n_cells or n_cells < 2:
        raise ValueError(f"n_cells must be an integer >= 2, got {n_cells}")
    n_cells = int(n_cells)
    if grading == "uniform":
        nodes = np.linspace(a, b, n_cells + 1)
    elif grading == "geometric":
        if ratio is None or ratio <= 0:
            raise ValueError("geometric grading needs a positive ratio")
        w = ratio ** np.arange(n_cells, dtype=float)
        if toward == "right":
            w = w[::-1]
        elif toward != "left":
            raise ValueError(f"toward must be 'left' or 'right', got {toward!r}")
        nodes = a + (b - a) * np.concatenate(([0.0], np.cumsum(w))) / w.sum()
    else:
        raise ValueError(f"unknown grading {grading!r}")
    nodes[0], nodes[-1] = a, b
    return Mesh(nodes, grading)


def stretch_ratio(n_cells, stretch):
    """Neighbour ratio giving ``last width / first width == stretch``."""
    return float(stretch) ** (1.0 / (n_cells - 1))


@dataclass(frozen=True)
class HermiteGridFunction:
    """Vector function stored by nodal values and x-derivatives.

    ``values`` and ``derivs`` have shape ``(n_components, n_nodes)``.
    """

    mesh: Mesh
    values: np.ndarray
    derivs: np.ndarray

    @property
    def n_components(self):
        return self.values.shape[0]

    def evaluate(self, x):
        return evaluate(self, x)

    def at_midpoints(self):
        v0, v1 = self.values[:, :-1], self.values[:, 1:]
        d0, d1 = self.derivs[:, :-1], self.derivs[:, 1:]
        h = self.mesh.widths
        vm = 0.5 * (v0 + v1) + 0.125 * h * (d0 - d1)
        dm = 1.5 * (v1 - v0) / h - 0.25 * (d0 + d1)
        return vm, dm

    def __add__(self, other):
        return HermiteGridFunction(self.mesh, self.values + other.values, self.derivs + other.derivs)

    def scaled(self, c):
        return HermiteGridFunction(self.mesh, c * self.values, c * self.derivs)

    def __mul__(self, c):
        return self.scaled(c)

    __rmul__ = __mul__


def evaluate(f, x):
    """Cubic Hermite evaluation of ``f`` at ``x``.

    Returns ``(values, derivatives)`` with shape ``(n,)`` for scalar ``x`` and
    ``(n, m)`` for an array of ``m`` points.
    """
    nodes = f.mesh.nodes
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)
    span = nodes[-1] - nodes[0]
    tol = 1e-12 * span
    if np.any(xa < nodes[0] - tol) or np.any(xa > nodes[-1] + tol):
        raise ValueError(f"evaluation point outside [{nodes[0]}, {nodes[-1]}]")
    xa = np.clip(xa, nodes[0], nodes[-1])
    j = np.clip(np.searchsorted(nodes, xa, side="right") - 1, 0, nodes.size - 2)
    h = nodes[j + 1] - nodes[j]
    t = (xa - nodes[j]) / h
    t2, t3 = t * t, t * t * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    v0, v1 = f.values[:, j], f.values[:, j + 1]
    d0, d1 = f.derivs[:, j], f.derivs[:, j + 1]
    val = h00 * v0 + h * h10 * d0 + h01 * v1 + h * h11 * d1
    der = ((6 * t2 - 6 * t) * v0 + h * (3 * t2 - 4 * t + 1) * d0
           + (6 * t - 6 * t2) * v1 + h * (3 * t2 - 2 * t) * d1) / h
    # node hits return the stored data bit-exactly
    at_left = t == 0
    val = np.where(at_left, v0, val)
    der = np.where(at_left, d0, der)
    at_right = t == 1
    val = np.where(at_right, v1, val)
    der = np.where(at_right, d1, der)
    if scalar:
        return val[:, 0], der[:, 0]
    return val, der


@dataclass(frozen=True)
class BoundaryRows:
    """Linear boundary rows ``B s + C s' = d`` at one end.

    ``B`` and ``C`` have shape ``(k, n)``.  Use :meth:`selector` for the usual
    diagonal selector matrices.
    """

    B: np.ndarray
    C: np.ndarray = None

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.zeros_like(B) if self.C is None else np.atleast_2d(np.asarray(self.C, dtype=float))
        if C.shape != B.shape:
            raise ValueError("B and C must have the same shape")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @classmethod
    def selector(cls, diag):
        diag = np.asarray(diag, dtype=float)
        n = diag.size
        rows = np.flatnonzero(diag)
        B = np.zeros((rows.size, n))
        B[np.arange(rows.size), rows] = diag[rows]
        return cls(B)

    @property
    def k(self):
        return self.B.shape[0]


@dataclass(frozen=True)
class LinearBVP:
    """Coefficients of ``-s' + Q s = r`` plus boundary rows.

    ``Q`` and ``rhs`` may be callables of an array of points (returning shapes
    ``(n, n, m)`` and ``(n, m)``) or precomputed arrays on
    :func:`collocation_points` of the mesh.
    """

    n: int
    Q: object
    left: BoundaryRows
    right: BoundaryRows
    rhs: object = None

    def __post_init__(self):
        if self.left.k + self.right.k != self.n:
            raise ValueError(
                f"{self.left.k} + {self.right.k} boundary rows for a system of dimension {self.n}"
            )
        for bc in (self.left, self.right):
            if bc.B.shape[1] != self.n:
                raise ValueError("boundary rows do not match the system dimension")


def collocation_points(mesh):
    """All collocation points: nodes followed by midpoints."""
    return np.concatenate((mesh.nodes, mesh.midpoints))


def _at_points(fn_or_array, mesh, shape_tail):
    if callable(fn_or_array):
        out = np.asarray(fn_or_array(collocation_points(mesh)), dtype=float)
    else:
        out = np.asarray(fn_or_array, dtype=float)
    n_pts = 2 * mesh.n_cells + 1
    if out.shape != shape_tail + (n_pts,):
        raise ValueError(f"expected shape {shape_tail + (n_pts,)}, got {out.shape}")
    return out


def _factorize(ab, kl, ku):
    lu, piv, info = lapack.dgbtrf(ab, kl, ku)
    return lu, piv, info


@dataclass(frozen=True)
class FactoredSystem:
    """Banded LU of the global collocation matrix; immutable once built."""

    bvp: LinearBVP
    mesh: Mesh
    lu: np.ndarray = field(repr=False)
    piv: np.ndarray = field(repr=False)
    kl: int
    ku: int

    @property
    def size(self):
        return 2 * self.bvp.n * (self.mesh.n_cells + 1)


def assemble(bvp, mesh):
    """Build and factorize the collocation matrix of ``bvp`` on ``mesh``.

    Raises
    ------
    CollocationError
        If LAPACK reports an exactly singular pivot.
    """
    n = bvp.n
    N = mesh.n_cells
    ka, kb = bvp.left.k, bvp.right.k
    size = 2 * n * (N + 1)
    Qp = _at_points(bvp.Q, mesh, (n, n))
    Qn = np.moveaxis(Qp[:, :, : N + 1], -1, 0)
    Qm = np.moveaxis(Qp[:, :, N + 1:], -1, 0)
    h = mesh.widths[:, None, None]
    eye = np.eye(n)

    kl = 2 * n - 1 + ka
    ku = max(3 * n - 1 - ka, 2 * n - 1, kb - 1)
    ab = np.zeros((2 * kl + ku + 1, size))

    def put(row0, col0, block):
        # scatter a (..., p, q) stack of blocks starting at row0/col0 offsets
        block = np.asarray(block)
        p, q = block.shape[-2:]
        rows = np.asarray(row0).reshape(-1, 1, 1) + np.arange(p).reshape(1, p, 1)
        cols = np.asarray(col0).reshape(-1, 1, 1) + np.arange(q).reshape(1, 1, q)
        rows, cols = np.broadcast_arrays(rows, cols)
        vals = np.broadcast_to(block, rows.shape)
        ab[kl + ku + rows - cols, cols] = vals

    # left boundary rows act on node 0
    put(0, 0, bvp.left.B)
    put(0, n, bvp.left.C)
    # node equations: -d_j + Q_j v_j
    jn = np.arange(N + 1)
    node_row = ka + 2 * n * jn
    put(node_row, 2 * n * jn, Qn)
    put(node_row, 2 * n * jn + n, np.broadcast_to(-eye, (N + 1, n, n)))
    # midpoint equations through the Hermite midpoint formulas
    jm = np.arange(N)
    mid_row = ka + 2 * n * jm + n
    c0 = 2 * n * jm
    put(mid_row, c0, 0.5 * Qm + 1.5 / h * eye)
    put(mid_row, c0 + n, 0.125 * h * Qm + 0.25 * eye)
    put(mid_row, c0 + 2 * n, 0.5 * Qm - 1.5 / h * eye)
    put(mid_row, c0 + 3 * n, -0.125 * h * Qm + 0.25 * eye)
    # right boundary rows act on node N
    put(size - kb, 2 * n * N, bvp.right.B)
    put(size - kb, 2 * n * N + n, bvp.right.C)

    lu, piv, info = _factorize(ab, kl, ku)
    if info > 0:
        raise CollocationError(info - 1, (info - 1) // (2 * n))
    if info < 0:
        raise ValueError(f"illegal argument {-info} to dgbtrf")
    return FactoredSystem(bvp, mesh, lu, piv, kl, ku)


def _load_vector(sys, rhs_values, d_left, d_right):
    n = sys.bvp.n
    N = sys.mesh.n_cells
    ka, kb = sys.bvp.left.k, sys.bvp.right.k
    d_left = np.atleast_1d(np.asarray(d_left, dtype=float))
    d_right = np.atleast_1d(np.asarray(d_right, dtype=float))
    if d_left.shape != (ka,) or d_right.shape != (kb,):
        raise ValueError(
            f"boundary data of shapes {d_left.shape}, {d_right.shape}; expected ({ka},), ({kb},)"
        )
    F = np.empty(sys.size)
    F[:ka] = d_left
    F[sys.size - kb:] = d_right
    body = F[ka: sys.size - kb]
    rn = rhs_values[:, : N + 1]
    rm = rhs_values[:, N + 1:]
    nodes = body[: n * (2 * N + 1)].reshape(2 * N + 1, n)
    nodes[0::2] = rn.T
    nodes[1::2] = rm.T
    return F


def solve_many(sys, problems):
    """Back-substitute a batch of ``(rhs, (d_left, d_right))`` problems.

    ``rhs`` is a callable, an array on the collocation points, or ``None``
    for a homogeneous equation.  Returns one :class:`HermiteGridFunction` per
    problem.
    """
    n = sys.bvp.n
    N = sys.mesh.n_cells
    cols = []
    for rhs, (d_left, d_right) in problems:
        if rhs is None:
            rv = np.zeros((n, 2 * N + 1))
        else:
            rv = _at_points(rhs, sys.mesh, (n,))
        cols.append(_load_vector(sys, rv, d_left, d_right))
    if not cols:
        return []
    Bmat = np.stack(cols, axis=1)
    X, info = lapack.dgbtrs(sys.lu, sys.kl, sys.ku, Bmat, sys.piv)
    if info != 0:
        raise ValueError(f"dgbtrs failed with info={info}")
    out = []
    for k in range(X.shape[1]):
        U = X[:, k].reshape(N + 1, 2, n)
        out.append(HermiteGridFunction(sys.mesh, U[:, 0, :].T.copy(), U[:, 1, :].T.copy()))
    return out


def solve(bvp, mesh, d_left, d_right):
    """Assemble and solve a single linear BVP."""
    sys = assemble(bvp, mesh)
    return solve_many(sys, [(bvp.rhs, (d_left, d_right))])[0]


def simpson_weights(mesh):
    """Quadrature weights on :func:`collocation_points` (composite Simpson)."""
    h = mesh.widths
    wn = np.zeros(mesh.n_cells + 1)
    wn[:-1] += h / 6.0
    wn[1:] += h / 6.0
    return np.concatenate((wn, 4.0 * h / 6.0))


def values_at_points(y):
    """Values and x-derivatives of ``y`` on :func:`collocation_points`."""
    vm, dm = y.at_midpoints()
    return np.concatenate((y.values, vm), axis=1), np.concatenate((y.derivs, dm), axis=1)


def defect_norm(y, rhs_fn, R_s):
    """Weighted discrete L2 norm of ``y' - R_s * F(x, y)`` on the collocation points.

    ``rhs_fn(x, y)`` returns ``F`` in r-units for component-first ``y``.
    """
    xs = collocation_points(y.mesh)
    v, d = values_at_points(y)
    res = d - R_s * rhs_fn(xs, v)
    w = simpson_weights(y.mesh)
    return float(np.sqrt(np.sum(w * np.sum(res * res, axis=0))))
