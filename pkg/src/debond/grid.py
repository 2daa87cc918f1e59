"""Structured meshes, the discrete Dirichlet form and constrained harmonic extensions.

Nodes are ordered lexicographically with x varying fastest. Densities are
integrated with lumped (tensor trapezoid) weights, and the Dirichlet form is
the piecewise-linear stiffness (the 5-point stencil in 2D), so that
``0.5 * v @ K @ v`` approximates ``0.5 * int |grad v|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, SolverFailure

_SIDES_1D = ("left", "right")
_SIDES_2D = ("left", "right", "bottom", "top")
_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured interval or rectangle grid with Gamma and A0 markings.

    Attributes
    ----------
    dimension : int
        1 or 2.
    lengths, shape, spacing : tuple
        Box side lengths, node counts and grid spacings per axis.
    coords : ndarray, shape (n, dimension)
    cells : ndarray
        Connectivity (segments in 1D, quadrilaterals in 2D).
    weights : ndarray
        Lumped quadrature weight per node; sums to the measure of the box.
    gamma_nodes, a0_nodes, boundary_nodes : ndarray of bool
    r0 : float
        Radius of the neighbourhood of Gamma contained in A0.
    clamp_nodes : ndarray of bool
        Optional bonded edge where every displacement is held at 0 and which
        never debonds. Empty unless requested; the rest of the boundary is free.
    """

    dimension: int
    lengths: tuple
    shape: tuple
    spacing: tuple
    coords: np.ndarray
    cells: np.ndarray
    weights: np.ndarray
    gamma_nodes: np.ndarray
    a0_nodes: np.ndarray
    boundary_nodes: np.ndarray
    r0: float
    gamma_side: str
    gamma_range: tuple | None = None
    a0_box: tuple = field(default=())
    clamp_nodes: np.ndarray | None = None
    clamp_sides: tuple = ()

    def __post_init__(self):
        if self.clamp_nodes is None:
            c = np.zeros(self.coords.shape[0], dtype=bool)
            c.setflags(write=False)
            object.__setattr__(self, "clamp_nodes", c)

    @property
    def fixed_nodes(self) -> np.ndarray:
        """Nodes with a prescribed value: Gamma plus any clamped (held at zero) edge."""
        return self.gamma_nodes | self.clamp_nodes

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def cell_size(self) -> float:
        return float(max(self.spacing))

    def distance_to_gamma(self) -> np.ndarray:
        """Euclidean distance from every node to the Gamma segment (or point)."""
        axis, value = _side_axis(self.gamma_side, self.lengths)
        d_normal = np.abs(self.coords[:, axis] - value)
        if self.dimension == 1:
            return d_normal
        t_axis = 1 - axis
        lo, hi = self.gamma_range if self.gamma_range else (0.0, self.lengths[t_axis])
        t = self.coords[:, t_axis]
        d_tan = np.maximum(0.0, np.maximum(lo - t, t - hi))
        return np.hypot(d_normal, d_tan)


def _side_axis(side, lengths):
    if side == "left":
        return 0, 0.0
    if side == "right":
        return 0, lengths[0]
    if side == "bottom":
        return 1, 0.0
    return 1, lengths[1]


def _parse_gamma(dimension, gamma_spec, lengths):
    if isinstance(gamma_spec, str):
        side, rng = gamma_spec, None
    else:
        side = gamma_spec.get("side")
        rng = gamma_spec.get("range")
    sides = _SIDES_1D if dimension == 1 else _SIDES_2D
    if side not in sides:
        raise ConfigurationError(f"gamma side {side!r} not one of {sides}")
    if rng is not None:
        if dimension == 1:
            raise ConfigurationError("gamma range is meaningless in 1D")
        axis, _ = _side_axis(side, lengths)
        lo, hi = float(rng[0]), float(rng[1])
        if not (0.0 <= lo < hi <= lengths[1 - axis] + _TOL):
            raise ConfigurationError(
                "gamma must be a boundary segment of positive measure "
                f"(got range {rng})"
            )
        rng = (lo, hi)
    return side, rng


def _parse_a0(dimension, a0_spec, lengths):
    if isinstance(a0_spec, dict):
        names = ("x", "y")[:dimension]
        box = [tuple(a0_spec.get(k, (0.0, lengths[i]))) for i, k in enumerate(names)]
    else:
        spec = list(a0_spec)
        if dimension == 1 and len(spec) == 2 and np.isscalar(spec[0]):
            spec = [spec]
        box = [tuple(s) for s in spec]
        while len(box) < dimension:
            box.append((0.0, lengths[len(box)]))
    if len(box) != dimension:
        raise ConfigurationError(f"A0 box has {len(box)} axes, mesh has {dimension}")
    out = []
    for (lo, hi), L in zip(box, lengths):
        lo, hi = float(lo), float(hi)
        if not lo < hi:
            raise ConfigurationError(f"A0 interval ({lo}, {hi}) is empty")
        out.append((lo, hi))
    return tuple(out)


def _effective_bounds(box, lengths):
    # Faces lying on the outer boundary do not bound A0 inside the domain.
    eff = []
    for (lo, hi), L in zip(box, lengths):
        lo_e = -np.inf if lo <= _TOL else lo
        hi_e = np.inf if hi >= L - _TOL else hi
        eff.append((lo_e, hi_e))
    return eff


def _neighbourhood_radius(side, rng, box, lengths):
    """Distance from Gamma to the part of the A0 boundary inside the domain.

    Returns 0 if Gamma is not contained in the closure of A0.
    """
    axis, value = _side_axis(side, lengths)
    extent = [None] * len(lengths)
    extent[axis] = (value, value)
    if len(lengths) == 2:
        t = 1 - axis
        extent[t] = rng if rng else (0.0, lengths[t])
    r0 = np.inf
    for (lo_e, hi_e), (g_lo, g_hi) in zip(_effective_bounds(box, lengths), extent):
        if np.isfinite(lo_e):
            r0 = min(r0, g_lo - lo_e)
        if np.isfinite(hi_e):
            r0 = min(r0, hi_e - g_hi)
    return max(float(r0), 0.0) if np.isfinite(r0) else float(max(lengths))


def build_mesh(dimension, lengths, node_counts, gamma_spec, a0_spec, clamp_spec=None) -> Mesh:
    """Build a structured mesh of an interval or rectangle.

    Parameters
    ----------
    dimension : {1, 2}
    lengths, node_counts : sequence
        Side lengths and number of nodes per axis (at least 3).
    gamma_spec : str or dict
        Side carrying the prescribed displacement (``"left"``, ``"right"``,
        and in 2D ``"bottom"``, ``"top"``), optionally
        ``{"side": ..., "range": [lo, hi]}`` for a sub-segment in 2D.
    a0_spec : sequence or dict
        Initially debonded box, one ``(lo, hi)`` interval per axis.
    clamp_spec : str or sequence of str, optional
        Sides held at zero displacement (a permanently bonded edge).

    Raises
    ------
    ConfigurationError
        If A0 does not contain a neighbourhood of Gamma.
    """
    if dimension not in (1, 2):
        raise ConfigurationError(f"dimension must be 1 or 2, got {dimension}")
    lengths = tuple(float(v) for v in np.atleast_1d(lengths))
    node_counts = tuple(int(v) for v in np.atleast_1d(node_counts))
    if len(lengths) != dimension or len(node_counts) != dimension:
        raise ConfigurationError("lengths and node_counts must match the dimension")
    if any(L <= 0 for L in lengths):
        raise ConfigurationError("lengths must be positive")
    if any(n < 3 for n in node_counts):
        raise ConfigurationError("at least 3 nodes per axis are required")

    side, rng = _parse_gamma(dimension, gamma_spec, lengths)
    box = _parse_a0(dimension, a0_spec, lengths)
    r0 = _neighbourhood_radius(side, rng, box, lengths)
    if r0 <= 0.0:
        raise ConfigurationError(
            "A0 must contain a neighbourhood of Gamma "
            f"(gamma={side}{'' if rng is None else list(rng)}, A0={list(box)})"
        )

    axes = [np.linspace(0.0, L, n) for L, n in zip(lengths, node_counts)]
    spacing = tuple(L / (n - 1) for L, n in zip(lengths, node_counts))
    w1 = []
    for n, h in zip(node_counts, spacing):
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        w1.append(w)

    if dimension == 1:
        coords = axes[0][:, None]
        weights = w1[0].copy()
        cells = np.column_stack([np.arange(node_counts[0] - 1), np.arange(1, node_counts[0])])
        boundary = np.zeros(node_counts[0], dtype=bool)
        boundary[[0, -1]] = True
    else:
        nx, ny = node_counts
        X, Y = np.meshgrid(axes[0], axes[1])  # shape (ny, nx): x fastest when raveled
        coords = np.column_stack([X.ravel(), Y.ravel()])
        weights = np.outer(w1[1], w1[0]).ravel()
        idx = np.arange(nx * ny).reshape(ny, nx)
        cells = np.column_stack(
            [idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel(), idx[1:, 1:].ravel(), idx[1:, :-1].ravel()]
        )
        b = np.zeros((ny, nx), dtype=bool)
        b[0, :] = b[-1, :] = b[:, 0] = b[:, -1] = True
        boundary = b.ravel()

    # Rescale weights so that they sum to the box measure to machine precision.
    weights = weights * (float(np.prod(lengths)) / weights.sum())

    axis, value = _side_axis(side, lengths)
    on_side = np.abs(coords[:, axis] - value) <= _TOL * max(lengths)
    if rng is not None:
        t = coords[:, 1 - axis]
        on_side &= (t >= rng[0] - _TOL) & (t <= rng[1] + _TOL)
    gamma = on_side & boundary
    if dimension == 2 and gamma.sum() < 2:
        raise ConfigurationError("gamma selects fewer than two nodes; refine the mesh")
    if not gamma.any():
        raise ConfigurationError("gamma selects no node")

    a0 = np.ones(coords.shape[0], dtype=bool)
    for k, (lo_e, hi_e) in enumerate(_effective_bounds(box, lengths)):
        x = coords[:, k]
        a0 &= (x > lo_e + _TOL) & (x < hi_e - _TOL)

    clamp_sides = () if clamp_spec is None else ((clamp_spec,) if isinstance(clamp_spec, str) else tuple(clamp_spec))
    clamp = np.zeros(coords.shape[0], dtype=bool)
    sides = _SIDES_1D if dimension == 1 else _SIDES_2D
    for cs in clamp_sides:
        if cs not in sides:
            raise ConfigurationError(f"clamp side {cs!r} not one of {sides}")
        c_axis, c_value = _side_axis(cs, lengths)
        clamp |= boundary & (np.abs(coords[:, c_axis] - c_value) <= _TOL * max(lengths))
    clamp &= ~gamma
    if np.any(clamp & a0):
        raise ConfigurationError("a clamped edge may not touch A0")

    mesh = Mesh(
        dimension=dimension,
        lengths=lengths,
        shape=node_counts,
        spacing=spacing,
        coords=coords,
        cells=cells,
        weights=weights,
        gamma_nodes=gamma,
        a0_nodes=a0,
        boundary_nodes=boundary,
        r0=r0,
        gamma_side=side,
        gamma_range=rng,
        a0_box=box,
        clamp_nodes=clamp,
        clamp_sides=clamp_sides,
    )
    near = mesh.distance_to_gamma() < r0 - _TOL
    if not np.all(a0[near]) or not np.all(a0[gamma]):
        raise ConfigurationError("A0 nodes do not cover the neighbourhood of Gamma on this grid")
    for arr in (coords, weights, gamma, a0, boundary, cells, clamp):
        arr.setflags(write=False)
    return mesh


@dataclass(frozen=True, eq=False)
class DirichletForm:
    """Sparse symmetric stiffness ``K`` with ``0.5 v.K.v ~ 0.5 int |grad v|^2``."""

    K: sp.csr_matrix
    colors: np.ndarray  # independent-set colouring of the stencil graph

    @property
    def diagonal(self) -> np.ndarray:
        return self.K.diagonal()

    def __matmul__(self, v):
        return self.K @ v

    @property
    def adjacency(self) -> sp.csr_matrix:
        """0/1 neighbour matrix of the stencil graph (no self loops)."""
        A = (abs(self.K) > 0).astype(float).tocsr()
        A.setdiag(0.0)
        A.eliminate_zeros()
        return A


def _stiffness_1d(n, h):
    main = np.full(n, 2.0 / h)
    main[[0, -1]] = 1.0 / h
    off = np.full(n - 1, -1.0 / h)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _greedy_colors(K):
    n = K.shape[0]
    colors = np.full(n, -1, dtype=int)
    indptr, indices = K.indptr, K.indices
    for i in range(n):
        used = {colors[j] for j in indices[indptr[i]:indptr[i + 1]] if j != i}
        c = 0
        while c in used:
            c += 1
        colors[i] = c
    return colors


def assemble_dirichlet_form(mesh: Mesh) -> DirichletForm:
    """Assemble the stiffness matrix of the Dirichlet energy on ``mesh``."""
    if mesh.dimension == 1:
        K = _stiffness_1d(mesh.shape[0], mesh.spacing[0])
    else:
        (nx, ny), (hx, hy) = mesh.shape, mesh.spacing
        Kx, Ky = _stiffness_1d(nx, hx), _stiffness_1d(ny, hy)
        wx = np.full(nx, hx)
        wx[[0, -1]] *= 0.5
        wy = np.full(ny, hy)
        wy[[0, -1]] *= 0.5
        K = sp.kron(sp.diags(wy), Kx) + sp.kron(Ky, sp.diags(wx))
    K = sp.csr_matrix(K)
    K.eliminate_zeros()
    K.sort_indices()
    colors = _greedy_colors(K)
    colors.setflags(write=False)
    return DirichletForm(K=K, colors=colors)


def dirichlet_energy(form: DirichletForm, field) -> float:
    v = np.asarray(field, dtype=float)
    return max(0.5 * float(v @ (form.K @ v)), 0.0)


def pcg(A, b, x0=None, rtol=1e-10, maxiter=None):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Returns ``(x, relative_residual, iterations)``; raises ``SolverFailure``
    when the iteration cap is exceeded.
    """
    n = b.shape[0]
    maxiter = 10 * n if maxiter is None else maxiter
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0.0, 0
    dinv = 1.0 / A.diagonal()
    r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    if res <= rtol:
        return x, res, 0
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= rtol:
            # confirm against the true residual; recurrence drift is possible
            res = np.linalg.norm(b - A @ x) / bnorm
            if res <= rtol:
                return x, res, it
            r = b - A @ x
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverFailure(
        f"PCG did not reach relative residual {rtol:g} in {maxiter} iterations "
        f"(last {res:.3e})",
        residual=res,
        iterations=maxiter,
    )


def gamma_trace(mesh: Mesh, gamma_values) -> np.ndarray:
    """Full-length field carrying ``gamma_values`` on Gamma nodes and 0 elsewhere."""
    out = np.zeros(mesh.n_nodes)
    vals = np.asarray(gamma_values, dtype=float)
    if vals.ndim == 0:
        out[mesh.gamma_nodes] = float(vals)
    elif vals.shape[0] == mesh.n_nodes:
        out[mesh.gamma_nodes] = vals[mesh.gamma_nodes]
    elif vals.shape[0] == int(mesh.gamma_nodes.sum()):
        out[mesh.gamma_nodes] = vals
    else:
        raise ValueError("gamma_values must be a scalar, a Gamma-node array or a node field")
    return out


def harmonic_extension(mesh, form, set_A, gamma_values, rtol=1e-10, iter_factor=10, x0=None):
    """Minimiser of the Dirichlet energy with the Gamma trace and ``v = 0`` off ``set_A``.

    Nodes of ``set_A`` not on Gamma are free (natural boundary conditions on
    the rest of the boundary). The result is projected onto the bounds given
    by the maximum principle, which only removes round-off.
    """
    A = np.asarray(set_A, dtype=bool)
    if A.shape != (mesh.n_nodes,):
        raise ValueError("set_A must be a node set")
    if not np.all(A[mesh.a0_nodes]):
        raise ValueError("set_A must contain every A0 node")
    v = gamma_trace(mesh, gamma_values)
    data = v[mesh.gamma_nodes]
    if np.any(data < 0):
        raise ValueError("Gamma values must be nonnegative")
    free = A & ~mesh.fixed_nodes
    if not free.any():
        return v
    K = form.K
    Kff = K[free][:, free]
    rhs = -(K[free] @ v)
    guess = None if x0 is None else np.asarray(x0, dtype=float)[free]
    x, _, _ = pcg(Kff, rhs, x0=guess, rtol=rtol, maxiter=iter_factor * int(free.sum()))
    v[free] = np.clip(x, 0.0, max(float(data.max()), 0.0))
    return v


def set_integral(mesh: Mesh, node_set, density_field) -> float:
    """Lumped integral of ``density_field`` over ``node_set``."""
    s = np.asarray(node_set, dtype=bool)
    f = np.broadcast_to(np.asarray(density_field, dtype=float), s.shape)
    return float(np.sum(mesh.weights[s] * f[s]))


def field_distances(mesh, form, f, g):
    """Return ``(l2, h1, sup)`` distances between two node fields."""
    d = np.asarray(f, dtype=float) - np.asarray(g, dtype=float)
    l2sq = float(np.sum(mesh.weights * d * d))
    grad = max(float(d @ (form.K @ d)), 0.0)
    return np.sqrt(l2sq), np.sqrt(l2sq + grad), float(np.max(np.abs(d))) if d.size else 0.0


def dilate(mesh: Mesh, node_set, radius: float) -> np.ndarray:
    """Nodes within Euclidean ``radius`` of ``node_set`` (the set itself included)."""
    s = np.asarray(node_set, dtype=bool)
    if radius <= 0 or not s.any():
        return s.copy()
    if mesh.dimension == 1:
        x = mesh.coords[:, 0]
        xs = np.sort(x[s])
        pos = np.searchsorted(xs, x)
        left = np.abs(x - xs[np.clip(pos - 1, 0, xs.size - 1)])
        right = np.abs(xs[np.clip(pos, 0, xs.size - 1)] - x)
        return np.minimum(left, right) <= radius + _TOL
    from scipy.spatial import cKDTree

    tree = cKDTree(mesh.coords[s])
    dist, _ = tree.query(mesh.coords, k=1)
    return dist <= radius + _TOL


def frontier(form: DirichletForm, node_set) -> np.ndarray:
    """Nodes outside ``node_set`` adjacent (in the stencil graph) to it."""
    s = np.asarray(node_set, dtype=bool)
    touched = (abs(form.K) @ s.astype(float)) > 0
    return touched & ~s
