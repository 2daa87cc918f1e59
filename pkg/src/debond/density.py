"""Cohesive densities, toughness fields and the loading program.

A density is evaluated nodewise: ``phi(y, z)`` takes arrays aligned with the
mesh nodes (or with ``nodes`` when given) and returns ``Phi(x_i, y_i, z_i)``.
The exponential family ``psi(z) = kappa_inf * (1 - exp(-a z))`` with
quadratic unloading is the default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError


def _check_nonneg(*arrays):
    for a in arrays:
        if np.any(np.asarray(a) < 0):
            raise DomainError("density arguments must be nonnegative")


class CohesiveDensity:
    """Interface for nodewise cohesive densities ``Phi(x, y, z)``.

    Subclasses provide ``phi`` together with ``kappa`` (the limit toughness per
    node), ``lipschitz`` (in ``y``), ``bound`` and ``a0_mask`` (nodes where the
    density must vanish identically). Solvers also use ``dphi_dy`` and
    ``d2phi_dy2``; the defaults here are central differences.
    """

    kappa: np.ndarray
    lipschitz: float
    bound: float
    a0_mask: np.ndarray
    max_curvature: float = np.inf  # sup |d^2 Phi / dy^2| on the loading branch

    def phi(self, y, z, nodes=None):
        raise NotImplementedError

    def dphi_dy(self, y, z, nodes=None, h=1e-7):
        y = np.asarray(y, dtype=float)
        lo = np.maximum(y - h, 0.0)
        return (self.phi(y + h, z, nodes) - self.phi(lo, z, nodes)) / (y + h - lo)

    def d2phi_dy2(self, y, z, nodes=None, h=1e-5):
        y = np.asarray(y, dtype=float)
        yc = np.maximum(y, h)
        return (self.phi(yc + h, z, nodes) - 2 * self.phi(yc, z, nodes) + self.phi(yc - h, z, nodes)) / h**2

    def _kappa(self, nodes):
        return self.kappa if nodes is None else self.kappa[nodes]


@dataclass(frozen=True, eq=False)
class PsiFamily(CohesiveDensity):
    """Exponential loading curve with quadratic unloading.

    ``Phi(y, z) = psi'(z) y^2 / (2 z) + psi(z) - z psi'(z) / 2`` for ``y < z`` and
    ``psi(y)`` otherwise, with ``psi(z) = kappa_inf (1 - exp(-rate z))``.
    """

    kappa_inf: np.ndarray
    rate: float
    a0_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        k = np.array(self.kappa_inf, dtype=float, ndmin=1)
        if np.any(k < 0) or not np.all(np.isfinite(k)):
            raise ConfigurationError("kappa_inf must be finite and nonnegative")
        if not self.rate > 0:
            raise ConfigurationError("rate must be positive")
        object.__setattr__(self, "kappa_inf", k)
        if self.a0_mask is None:
            object.__setattr__(self, "a0_mask", k == 0)

    @classmethod
    def from_mesh(cls, mesh, kappa_inf=1.0, rate=1.0):
        k = np.broadcast_to(np.asarray(kappa_inf, dtype=float), (mesh.n_nodes,)).copy()
        k[mesh.a0_nodes] = 0.0
        return cls(kappa_inf=k, rate=float(rate), a0_mask=np.asarray(mesh.a0_nodes).copy())

    @property
    def kappa(self):
        return self.kappa_inf

    @property
    def lipschitz(self):
        return float(self.kappa_inf.max()) * self.rate

    @property
    def bound(self):
        return float(self.kappa_inf.max())

    @property
    def max_curvature(self):
        return float(self.kappa_inf.max()) * self.rate**2

    def psi(self, z, nodes=None):
        return self._kappa(nodes) * -np.expm1(-self.rate * np.asarray(z, dtype=float))

    def dpsi(self, z, nodes=None):
        return self._kappa(nodes) * self.rate * np.exp(-self.rate * np.asarray(z, dtype=float))

    def d2psi(self, z, nodes=None):
        return -self._kappa(nodes) * self.rate**2 * np.exp(-self.rate * np.asarray(z, dtype=float))

    def _split(self, y, z, nodes):
        y, z = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(z, dtype=float))
        k = np.broadcast_to(self._kappa(nodes), y.shape)
        unload = y < z  # z = 0 never enters this branch
        return y, z, k, unload

    def phi(self, y, z, nodes=None):
        y, z, k, unload = self._split(y, z, nodes)
        out = k * -np.expm1(-self.rate * y)
        if unload.any():
            zu, yu, ku = z[unload], y[unload], k[unload]
            e = np.exp(-self.rate * zu)
            d = ku * self.rate * e
            out[unload] = d * yu * yu / (2.0 * zu) + ku * -np.expm1(-self.rate * zu) - 0.5 * zu * d
        return out

    def dphi_dy(self, y, z, nodes=None):
        y, z, k, unload = self._split(y, z, nodes)
        out = k * self.rate * np.exp(-self.rate * y)
        if unload.any():
            zu = z[unload]
            out[unload] = k[unload] * self.rate * np.exp(-self.rate * zu) * y[unload] / zu
        return out

    def d2phi_dy2(self, y, z, nodes=None):
        y, z, k, unload = self._split(y, z, nodes)
        out = -k * self.rate**2 * np.exp(-self.rate * y)
        if unload.any():
            zu = z[unload]
            out[unload] = k[unload] * self.rate * np.exp(-self.rate * zu) / zu
        return out


@dataclass(frozen=True, eq=False)
class ShiftedDensity(CohesiveDensity):
    """``base + shift`` off A0. Breaks ``Phi(x, 0, 0) = 0`` and nothing else."""

    base: CohesiveDensity
    shift: float = 0.1

    @property
    def a0_mask(self):
        return self.base.a0_mask

    @property
    def kappa(self):
        return np.where(self.base.a0_mask, self.base.kappa, self.base.kappa + self.shift)

    @property
    def lipschitz(self):
        return self.base.lipschitz

    @property
    def bound(self):
        return self.base.bound + self.shift

    def phi(self, y, z, nodes=None):
        off = ~(self.a0_mask if nodes is None else self.a0_mask[nodes])
        return self.base.phi(y, z, nodes) + self.shift * off


@dataclass(frozen=True, eq=False)
class NonMonotoneDensity(CohesiveDensity):
    """``base + c * y * exp(-y)`` off A0; decreasing in ``y`` for ``y > 2``."""

    base: CohesiveDensity
    amplitude: float = 1.0

    @property
    def a0_mask(self):
        return self.base.a0_mask

    @property
    def kappa(self):
        return self.base.kappa

    @property
    def lipschitz(self):
        return self.base.lipschitz + self.amplitude

    @property
    def bound(self):
        return self.base.bound + self.amplitude * np.exp(-1.0)

    def phi(self, y, z, nodes=None):
        off = ~(self.a0_mask if nodes is None else self.a0_mask[nodes])
        y = np.asarray(y, dtype=float)
        return self.base.phi(y, z, nodes) + self.amplitude * y * np.exp(-y) * off


def psi_eval(family: PsiFamily, z, nodes=None):
    """Return ``(psi(z), psi'(z))``; raises ``DomainError`` for ``z < 0``."""
    _check_nonneg(z)
    return family.psi(z, nodes), family.dpsi(z, nodes)


def phi_eval(density: CohesiveDensity, node_index, y, z):
    _check_nonneg(y, z)
    return density.phi(y, z, nodes=node_index)


def phi_rescaled(density: CohesiveDensity, node_index, y, z, eps):
    """``Phi(x, y / eps, z / eps)``."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    _check_nonneg(y, z)
    return density.phi(np.asarray(y, dtype=float) / eps, np.asarray(z, dtype=float) / eps, nodes=node_index)


def toughness_field(mesh, value=1.0) -> np.ndarray:
    """Toughness equal to ``value`` off A0 and zero on A0."""
    k = np.broadcast_to(np.asarray(value, dtype=float), (mesh.n_nodes,)).copy()
    k[mesh.a0_nodes] = 0.0
    check_toughness(mesh, k)
    return k


def check_toughness(mesh, kappa):
    kappa = np.asarray(kappa, dtype=float)
    problems = []
    if kappa.shape != (mesh.n_nodes,):
        problems.append("toughness must have one value per node")
    else:
        if not np.all(np.isfinite(kappa)):
            problems.append("toughness must be bounded")
        if np.any(kappa[mesh.a0_nodes] != 0):
            problems.append("toughness must vanish on A0")
        if np.any(kappa[~mesh.a0_nodes] <= 0):
            problems.append("toughness must be positive off A0")
    if problems:
        raise ConfigurationError("; ".join(problems), problems)


# ---------------------------------------------------------------------------
# Loading program w(t, x) = lambda(t) g(x)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LoadingFunction:
    """Separable loading ``w = lambda(t) * g`` with piecewise-linear ``lambda``."""

    profile: np.ndarray
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.size < 2 or t.size != v.size:
            raise ConfigurationError("lambda needs matching breakpoint times and values (>= 2)")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("lambda breakpoints must start at 0 and increase strictly")
        if np.any(v < 0):
            raise ConfigurationError("lambda must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "profile", np.asarray(self.profile, dtype=float))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def ceiling(self) -> float:
        return float(self.values.max() * self.profile.max())

    def amplitude(self, t) -> float:
        return float(np.interp(t, self.times, self.values))

    def rate(self, t) -> float:
        """Right derivative of ``lambda`` (left derivative at ``T``)."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), self.times.size - 2)
        return float((self.values[k + 1] - self.values[k]) / (self.times[k + 1] - self.times[k]))

    def validate(self, mesh):
        g = self.profile
        problems = []
        if g.shape != (mesh.n_nodes,):
            problems.append("loading profile must have one value per node")
            raise ConfigurationError(problems[0], problems)
        if np.any(g < 0) or np.any(g > 1):
            problems.append("loading profile must lie in [0, 1]")
        if np.any(g[mesh.gamma_nodes] != 1.0):
            problems.append("loading profile must equal 1 on Gamma")
        if np.any(g[~(mesh.a0_nodes | mesh.gamma_nodes)] != 0):
            problems.append("loading must vanish outside A0 (w = 0 on Omega \\ A0)")
        if problems:
            raise ConfigurationError("; ".join(problems), problems)


def ramp_profile(mesh, width: float) -> np.ndarray:
    """``g = max(0, 1 - dist(x, Gamma) / width)``."""
    if not width > 0:
        raise ConfigurationError("ramp width must be positive")
    g = np.clip(1.0 - mesh.distance_to_gamma() / width, 0.0, 1.0)
    g[np.abs(g) < 1e-14] = 0.0
    g[mesh.gamma_nodes] = 1.0
    return g


def make_loading(mesh, times, values, width) -> LoadingFunction:
    loading = LoadingFunction(profile=ramp_profile(mesh, width), times=times, values=values)
    loading.validate(mesh)
    return loading


def loading_eval(loading: LoadingFunction, t):
    """Return ``(w(t), dw/dt(t))`` as node fields."""
    if t < 0 or t > loading.T:
        raise DomainError(f"t={t} outside [0, {loading.T}]")
    return loading.amplitude(t) * loading.profile, loading.rate(t) * loading.profile


# ---------------------------------------------------------------------------
# Sampled audit of the density hypotheses
# ---------------------------------------------------------------------------


@dataclass
class SampleSpec:
    y_grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 50.0, 101))
    z_grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 50.0, 101))
    n_nodes: int = 32
    nodes: np.ndarray | None = None
    lipschitz_slack: float = 1e-9
    limit_tol: float = 1e-4
    exact_tol: float = 1e-12

    def node_sample(self, n_total):
        if self.nodes is not None:
            return np.asarray(self.nodes, dtype=int)
        return np.unique(np.round(np.linspace(0, n_total - 1, min(self.n_nodes, n_total))).astype(int))


def axiom_audit(density: CohesiveDensity, sample_spec: SampleSpec | None = None):
    """Check the seven density hypotheses on a sample grid.

    Failures are recorded in the returned report, never raised.
    """
    from .audit import AuditReport

    spec = sample_spec or SampleSpec()
    nodes = spec.node_sample(density.kappa.shape[0])
    y = np.asarray(spec.y_grid, dtype=float)
    z = np.asarray(spec.z_grid, dtype=float)
    Y, Z = np.meshgrid(y, z, indexing="ij")
    report = AuditReport("density hypotheses")

    vals = np.empty((nodes.size,) + Y.shape)
    for k, i in enumerate(nodes):
        idx = np.full(Y.shape, i)
        vals[k] = density.phi(Y, Z, nodes=idx)
    kappa = density.kappa[nodes]
    on_a0 = density.a0_mask[nodes]

    at0 = np.array([density.phi(np.zeros(1), np.zeros(1), nodes=np.array([i]))[0] for i in nodes])
    report.add("Phi1: Phi(x,0,0)=0", float(np.max(np.abs(at0))), spec.exact_tol)
    report.add("Phi2: Phi <= K", float(vals.max() - density.bound), spec.exact_tol)

    dy = np.diff(y)
    slopes = np.abs(np.diff(vals, axis=1)) / dy[None, :, None]
    report.add("Phi3: Lipschitz in y", float(slopes.max() - density.lipschitz), spec.lipschitz_slack)

    vmax = np.empty_like(vals)
    for k, i in enumerate(nodes):
        vmax[k] = density.phi(Y, np.maximum(Y, Z), nodes=np.full(Y.shape, i))
    report.add("Phi4: Phi(y,z)=Phi(y,y v z)", float(np.max(np.abs(vals - vmax))), spec.exact_tol)

    dec_y = -np.diff(vals, axis=1).min() if y.size > 1 else 0.0
    dec_z = -np.diff(vals, axis=2).min() if z.size > 1 else 0.0
    report.add("Phi5: nondecreasing in y and z", float(max(dec_y, dec_z)), spec.exact_tol)

    zero_on_a0 = float(np.max(np.abs(vals[on_a0]))) if on_a0.any() else 0.0
    pos = (Y > 0) & (Z > 0)
    off = vals[~on_a0][:, pos] if (~on_a0).any() else np.ones(1)
    report.add("Phi6: zero on A0", zero_on_a0, 0.0)
    report.add("Phi6: positive off A0", float(-off.min()) if off.size else -1.0, 0.0, strict=True)

    ymax = float(max(y.max(), z.max()))
    lim = np.array([density.phi(np.array([ymax]), np.array([ymax]), nodes=np.array([i]))[0] for i in nodes])
    report.add("Phi7: Phi(x,Y,Y) -> kappa", float(np.max(np.abs(lim - kappa))), spec.limit_tol)
    return report
