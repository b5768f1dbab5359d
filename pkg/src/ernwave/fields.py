"""
Discretised axisymmetric fields on a horizon-penetrating grid.

The radial direction is a logically uniform index coordinate ``x = 0..n_r-1``
mapped onto ``[M, r_max]`` by a smooth stretching ``r(x)``; derivatives use
fourth-order finite differences in ``x`` and the chain rule. The first node
sits exactly on the horizon ``r = M``, which is an outflow surface, so the
stencils there are one-sided and no boundary condition is imposed.

The polar direction uses interior Gauss-Legendre nodes in ``cos(theta)`` and
exact Legendre transforms, so the sphere Laplacian is diagonal on modes.

Slices are level sets of ``tau = v - h(r)`` where ``v`` is ingoing
Eddington-Finkelstein time. ``h(r) = r`` gives the usual ``t* = v - r``; the
``"horizon_adapted"`` slicing bends the slices towards the ingoing null
direction near ``r = M`` so that a strongly refined horizon grid does not
force a tiny explicit time step. In every slicing ``T = d/dtau`` at fixed
``r`` and the transversal field is ``Y = d/dr|_tau - h'(r) T``.
"""

from __future__ import annotations

import functools
import io
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.integrate import solve_ivp

from .geometry import (
    SpacetimeParams,
    horizon_factor,
    horizon_factor_deriv,
    sqrt_horizon_factor,
)

__all__ = [
    "STRETCHINGS",
    "SLICINGS",
    "GridSpec",
    "Grid",
    "AngularBasis",
    "FieldState",
    "ModeSet",
    "make_grid",
    "d_dx",
    "d2_dx2",
    "spherical_mean",
    "project",
    "synthesize",
    "angular_laplacian",
    "angular_gradient",
    "ef_derivatives",
    "write_snapshot",
    "read_snapshot",
]

STRETCHINGS = ("uniform", "tortoise_outside", "horizon_refined")
SLICINGS = ("tstar", "horizon_adapted")


@dataclass(frozen=True)
class GridSpec:
    """Description of the (r, theta) grid and the slicing it lives on.

    Parameters
    ----------
    n_r : int
        Radial node count, at least 17. Node 0 is the horizon.
    r_max : float
        Outer radius, in the same units as the mass.
    n_theta : int
        1 for spherical symmetry, otherwise at least 8 Gauss-Legendre nodes.
    stretching : str
        ``"uniform"`` (uniform in r), ``"tortoise_outside"`` (uniform in r
        inside ``split_radius``, uniform in the tortoise coordinate well
        outside it) or ``"horizon_refined"`` (geometric refinement towards
        ``r = M`` blended into uniform spacing).
    horizon_spacing, growth :
        Spacing at the horizon (units of M) and the per-node growth rate of
        the geometric zone; used by ``"horizon_refined"`` only.
    split_radius :
        Transition radius (units of M) for ``"tortoise_outside"``.
    slicing : str
        ``"tstar"`` or ``"horizon_adapted"``.
    slice_bend, slice_offset :
        Parameters ``b`` and ``a`` (units of M) of the adapted height function
        ``h'(r) = 1 + b/(r - M + a)``. ``slice_offset=None`` picks
        ``horizon_spacing/growth`` on a refined grid and ``1`` otherwise.
    """

    n_r: int
    r_max: float
    n_theta: int = 1
    stretching: str = "uniform"
    horizon_spacing: float = 2e-4
    growth: float = 0.05
    split_radius: float = 6.0
    slicing: str = "tstar"
    slice_bend: float = 4.0
    slice_offset: float | None = None

    def validate(self, params: SpacetimeParams) -> list[str]:
        M = params.mass
        errors = []
        if int(self.n_r) != self.n_r or self.n_r < 17:
            errors.append(f"n_r must be an integer >= 17, got {self.n_r}")
        if not self.n_theta == 1 and not (int(self.n_theta) == self.n_theta and self.n_theta >= 8):
            errors.append(f"n_theta must be 1 or >= 8, got {self.n_theta}")
        if not self.r_max > M:
            errors.append(f"r_max = {self.r_max} must exceed M = {M}")
        if self.stretching not in STRETCHINGS:
            errors.append(f"stretching must be one of {STRETCHINGS}, got {self.stretching!r}")
        if self.slicing not in SLICINGS:
            errors.append(f"slicing must be one of {SLICINGS}, got {self.slicing!r}")
        if self.stretching == "horizon_refined":
            if not self.horizon_spacing > 0:
                errors.append("horizon_spacing must be positive")
            if not 0 < self.growth < 1:
                errors.append("growth must lie in (0, 1)")
        if self.stretching == "tortoise_outside" and not (2.0 < self.split_radius < self.r_max / M):
            errors.append("split_radius must lie in (2M, r_max)")
        if self.slicing == "horizon_adapted":
            # h' < 2/D everywhere iff b < min_y (y + 4M + 2M^2/y) = (4 + 2 sqrt 2) M
            if not 0 <= self.slice_bend < 4.0 + 2.0 * np.sqrt(2.0):
                errors.append("slice_bend must lie in [0, 4 + 2*sqrt(2)) for spacelike slices")
            if self.slice_offset is not None and not self.slice_offset > 0:
                errors.append("slice_offset must be positive")
        return errors

    def refine(self, factor: int) -> "GridSpec":
        """Nested refinement: every ``factor``-th node of the result is a node here.

        On a horizon-refined grid the spacing and growth shrink together so the
        underlying map, and hence the adapted slicing, are unchanged.
        """
        factor = int(factor)
        if factor < 1:
            raise ValueError("refinement factor must be a positive integer")
        changes = {"n_r": (self.n_r - 1) * factor + 1}
        if self.stretching == "horizon_refined":
            changes["horizon_spacing"] = self.horizon_spacing / factor
            changes["growth"] = self.growth / factor
            if self.slice_offset is None and self.slicing == "horizon_adapted":
                changes["slice_offset"] = self.horizon_spacing / self.growth
        return replace(self, **changes)


def _invert_monotone(fun, targets, lo, hi, iters=200):
    lo = np.full_like(targets, lo, dtype=float)
    hi = np.full_like(targets, hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = fun(mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(hi))):
            break
    return 0.5 * (lo + hi)


def _refined_map(spec, M):
    """Closed-form index map for the horizon-refined stretching.

    ``dx/dr = 1/(kappa (r - M + a)) + 1/delta``: geometric growth near the
    horizon, uniform spacing ``delta`` far away.
    """
    kappa = spec.growth
    a = spec.horizon_spacing * M / kappa
    n_last = spec.n_r - 1

    def x_of(r, delta):
        y = r - M
        return np.log1p(y / a) / kappa + y / delta

    ymax = spec.r_max - M
    x_geo = np.log1p(ymax / a) / kappa
    if x_geo >= n_last:
        raise ValueError("horizon_refined grid: n_r too small for the requested refinement")
    delta = ymax / (n_last - x_geo)

    def spacing(r):
        y = r - M
        return 1.0 / (1.0 / (kappa * (y + a)) + 1.0 / delta)

    def spacing_deriv(r):
        s = spacing(r)
        y = r - M
        return s * s / (kappa * (y + a) ** 2)

    idx = np.arange(spec.n_r, dtype=float)
    r = _invert_monotone(lambda rr: x_of(rr, delta), idx, M, spec.r_max)
    r[0] = M
    r[-1] = spec.r_max
    return r, spacing, spacing_deriv


def _tortoise_map(spec, M):
    """Uniform in r inside ``R0``, tending to uniform in r* outside."""
    R0 = spec.split_radius * M
    w = M
    D0 = ((R0 - M) / R0) ** 2

    def step(x):
        # C-infinity step, exactly 0 for x <= 0 and 1 for x >= 1
        x = np.clip(x, 0.0, 1.0)
        a = np.where(x > 0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.maximum(1.0 - x, 1e-300)), 0.0)
        return a / (a + b)

    def inv_shape(r):
        # 1/s up to the overall scale: 1 inside, D(R0)/D(r) outside; the blend
        # on [R0 - w, R0 + w] keeps the horizon side exactly uniform in r
        sig = step((r - R0 + w) / (2.0 * w))
        D = ((r - M) / r) ** 2
        outer = np.where(sig > 0, D0 / np.where(sig > 0, D, 1.0), 1.0)
        return 1.0 + sig * (outer - 1.0)

    sol = solve_ivp(
        lambda r, x: inv_shape(r),
        (M, spec.r_max),
        [0.0],
        method="DOP853",
        rtol=1e-13,
        atol=1e-14,
        dense_output=True,
    )
    xmax = sol.y[0, -1]
    scale = xmax / (spec.n_r - 1)
    idx = np.arange(spec.n_r, dtype=float) * scale
    r = _invert_monotone(lambda rr: sol.sol(rr)[0], idx, M, spec.r_max)
    r[0] = M
    r[-1] = spec.r_max

    def spacing(rr):
        return scale / inv_shape(rr)

    def spacing_deriv(rr, h=1e-6):
        # derivative of the closed-form spacing; only used for second derivatives
        return (spacing(rr + h * M) - spacing(rr - h * M)) / (2 * h * M)

    return r, spacing, spacing_deriv


class AngularBasis:
    """Gauss-Legendre nodes in cos(theta) with exact Legendre transforms."""

    def __init__(self, n_theta: int):
        self.n_theta = n_theta
        if n_theta == 1:
            self.mu = np.zeros(1)
            self.weights = np.full(1, 2.0)
        else:
            mu, w = npleg.leggauss(n_theta)
            # order by increasing theta
            self.mu, self.weights = mu[::-1].copy(), w[::-1].copy()
        self.theta = np.arccos(self.mu)
        self.lmax = n_theta - 1
        ell = np.arange(self.lmax + 1)
        self.ell = ell
        eye = np.eye(self.lmax + 1)
        # P[j, l] = P_l(mu_j); dP[j, l] = d/dtheta P_l(cos theta_j)
        self.P = np.stack([npleg.legval(self.mu, eye[l]) for l in ell], axis=1)
        sin_t = np.sqrt(1.0 - self.mu**2)
        self.dP = np.stack([-sin_t * npleg.legval(self.mu, npleg.legder(eye[l])) for l in ell], axis=1)
        # projection: c_l = (2l+1)/2 sum_j w_j P_l(mu_j) f_j
        self.proj = ((2 * ell + 1) / 2.0)[:, None] * (self.P * self.weights[:, None]).T
        self.lap = self.P @ (-(ell * (ell + 1.0))[:, None] * self.proj)
        self.grad = self.dP @ self.proj
        self.mean_weights = self.weights / 2.0


@dataclass(frozen=True, eq=False)
class Grid:
    """Materialised grid: nodes, map metrics and background coefficients."""

    spec: GridSpec
    params: SpacetimeParams
    r: np.ndarray
    r_x: np.ndarray
    r_xx: np.ndarray
    angular: AngularBasis = field(repr=False)
    h_prime: np.ndarray = field(repr=False)
    h_second: np.ndarray = field(repr=False)
    height: np.ndarray = field(repr=False)

    @property
    def n_r(self) -> int:
        return self.spec.n_r

    @property
    def n_theta(self) -> int:
        return self.spec.n_theta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.spec.n_r, self.spec.n_theta)

    @property
    def mass(self) -> float:
        return self.params.mass

    @property
    def theta(self) -> np.ndarray:
        return self.angular.theta

    @functools.cached_property
    def dr(self) -> np.ndarray:
        return np.diff(self.r)

    @functools.cached_property
    def D(self) -> np.ndarray:
        return horizon_factor(self.r, self.params)

    @functools.cached_property
    def sqrtD(self) -> np.ndarray:
        return sqrt_horizon_factor(self.r, self.params)

    @functools.cached_property
    def dD(self) -> np.ndarray:
        return horizon_factor_deriv(self.r, self.params)

    @functools.cached_property
    def char_speeds(self) -> tuple[np.ndarray, np.ndarray]:
        """Ingoing and outgoing coordinate speeds ``dr/dtau`` of null rays."""
        hp, D = self.h_prime, self.D
        return -1.0 / hp, D / (2.0 - D * hp)

    @functools.cached_property
    def max_index_speed(self) -> float:
        """Largest characteristic speed in index units, for the CFL bound."""
        cin, cout = self.char_speeds
        return float(np.max(np.maximum(np.abs(cin), np.abs(cout)) / self.r_x))

    def radial_weights(self) -> np.ndarray:
        """Composite quadrature weights for integrals in r (trapezoid in x)."""
        w = self.r_x.copy()
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def integrate(self, density: np.ndarray, r_min: float | None = None, r_max: float | None = None) -> float:
        """Integrate ``density`` over the slice with measure ``r^2 dr domega``.

        ``density`` has shape (n_r, n_theta) or (n_r,). Optional radial limits
        restrict the integral with a sharp mask (nodes inside count).
        """
        dens = np.asarray(density, dtype=float)
        if dens.ndim == 2:
            dens = 2.0 * np.pi * dens @ self.angular.weights
        else:
            dens = 4.0 * np.pi * dens
        w = self.radial_weights() * self.r**2
        if r_min is not None or r_max is not None:
            mask = np.ones_like(self.r, dtype=bool)
            if r_min is not None:
                mask &= self.r >= r_min
            if r_max is not None:
                mask &= self.r <= r_max
            w = np.where(mask, w, 0.0)
        return float(np.dot(w, dens))


@functools.lru_cache(maxsize=64)
def make_grid(spec: GridSpec, params: SpacetimeParams = SpacetimeParams()) -> Grid:
    """Build (and cache) the grid described by ``spec``."""
    errors = spec.validate(params)
    if errors:
        raise ValueError("invalid grid: " + "; ".join(errors))
    M = params.mass
    if spec.stretching == "uniform":
        r = np.linspace(M, spec.r_max, spec.n_r)
        r_x = np.full(spec.n_r, (spec.r_max - M) / (spec.n_r - 1))
        r_xx = np.zeros(spec.n_r)
    else:
        builder = _refined_map if spec.stretching == "horizon_refined" else _tortoise_map
        r, spacing, spacing_deriv = builder(spec, M)
        r_x = spacing(r)
        r_xx = spacing_deriv(r) * r_x
    if spec.slicing == "tstar":
        hp = np.ones_like(r)
        hpp = np.zeros_like(r)
        height = r.copy()
    else:
        b = spec.slice_bend * M
        if spec.slice_offset is not None:
            a = spec.slice_offset * M
        elif spec.stretching == "horizon_refined":
            a = spec.horizon_spacing * M / spec.growth
        else:
            a = M
        y = r - M + a
        hp = 1.0 + b / y
        hpp = -b / y**2
        height = r + b * np.log(y / a)
    for arr in (r, r_x, r_xx, hp, hpp, height):
        arr.setflags(write=False)
    return Grid(spec, params, r, r_x, r_xx, AngularBasis(spec.n_theta), hp, hpp, height)


# ---------------------------------------------------------------------------
# radial finite differences (index coordinate, unit spacing), 4th order
# ---------------------------------------------------------------------------

def d_dx(f: np.ndarray) -> np.ndarray:
    """Fourth-order first derivative along axis 0, one-sided at both ends."""
    df = np.empty_like(f)
    df[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / 12.0
    df[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / 12.0
    df[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / 12.0
    df[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / 12.0
    df[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / 12.0
    return df


def d2_dx2(f: np.ndarray) -> np.ndarray:
    """Fourth-order second derivative along axis 0, one-sided at both ends."""
    d2 = np.empty_like(f)
    d2[2:-2] = (-f[:-4] + 16.0 * f[1:-3] - 30.0 * f[2:-2] + 16.0 * f[3:-1] - f[4:]) / 12.0
    d2[0] = (45.0 * f[0] - 154.0 * f[1] + 214.0 * f[2] - 156.0 * f[3] + 61.0 * f[4] - 10.0 * f[5]) / 12.0
    d2[1] = (10.0 * f[0] - 15.0 * f[1] - 4.0 * f[2] + 14.0 * f[3] - 6.0 * f[4] + f[5]) / 12.0
    d2[-1] = (45.0 * f[-1] - 154.0 * f[-2] + 214.0 * f[-3] - 156.0 * f[-4] + 61.0 * f[-5] - 10.0 * f[-6]) / 12.0
    d2[-2] = (10.0 * f[-1] - 15.0 * f[-2] - 4.0 * f[-3] + 14.0 * f[-4] - 6.0 * f[-5] + f[-6]) / 12.0
    return d2


def _col(a, f):
    return a if f.ndim == 1 else a[:, None]


def d_dr(grid: Grid, f: np.ndarray) -> np.ndarray:
    return d_dx(f) / _col(grid.r_x, f)


def d2_dr2(grid: Grid, f: np.ndarray) -> np.ndarray:
    fx = d_dx(f)
    rx = _col(grid.r_x, f)
    return (d2_dx2(f) - _col(grid.r_xx, f) * fx / rx) / rx**2


# ---------------------------------------------------------------------------
# field containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FieldState:
    """One slice ``tau = t_star`` of the first-order system.

    ``psi`` is the field, ``pi = T psi`` its derivative along the stationary
    Killing field and ``phi = d psi/dr`` at fixed slice time. All arrays have
    shape ``grid.shape``.
    """

    grid: Grid
    t_star: float
    psi: np.ndarray
    pi: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        for name in ("psi", "pi", "phi"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(self.grid.shape)
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, grid: Grid, t_star: float = 0.0) -> FieldState:
        z = np.zeros(grid.shape)
        return cls(grid, t_star, z, z.copy(), z.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.psi).all() and np.isfinite(self.pi).all() and np.isfinite(self.phi).all())

    def scaled(self, lam: float) -> FieldState:
        return FieldState(self.grid, self.t_star, lam * self.psi, lam * self.pi, lam * self.phi)

    def stacked(self) -> np.ndarray:
        return np.stack([self.psi, self.pi, self.phi])

    @classmethod
    def from_stacked(cls, grid: Grid, t_star: float, u: np.ndarray) -> FieldState:
        return cls(grid, t_star, u[0].copy(), u[1].copy(), u[2].copy())


@dataclass(frozen=True)
class ModeSet:
    """Legendre coefficients ``psi_l(r)``, shape (n_r, lmax + 1)."""

    coefficients: np.ndarray

    @property
    def lmax(self) -> int:
        return self.coefficients.shape[1] - 1

    def mode(self, l: int) -> np.ndarray:
        return self.coefficients[:, l]


def _values(grid: Grid, f) -> np.ndarray:
    return np.asarray(f, dtype=float).reshape(grid.shape)


def project(grid: Grid, f) -> ModeSet:
    """Legendre projection of a grid field onto modes ``l = 0..n_theta-1``."""
    return ModeSet(_values(grid, f) @ grid.angular.proj.T)


def synthesize(grid: Grid, modes: ModeSet) -> np.ndarray:
    return modes.coefficients @ grid.angular.P.T


def spherical_mean(state: FieldState, which: str = "psi") -> np.ndarray:
    """Average over the sphere, ``(1/2) int f d(cos theta)``, per radius."""
    f = getattr(state, which)
    return f @ state.grid.angular.mean_weights


def angular_laplacian(state_or_grid, f=None) -> np.ndarray:
    """Sphere Laplacian of an axisymmetric field, evaluated mode by mode.

    Returns ``Delta_{S^2} psi`` (no ``1/r^2``). Zero in spherical symmetry.
    """
    grid, f = _grid_and_field(state_or_grid, f)
    if grid.n_theta == 1:
        return np.zeros_like(f)
    return f @ grid.angular.lap.T


def angular_gradient(state_or_grid, f=None) -> np.ndarray:
    """``d psi / d theta`` by differentiating the Legendre series."""
    grid, f = _grid_and_field(state_or_grid, f)
    if grid.n_theta == 1:
        return np.zeros_like(f)
    return f @ grid.angular.grad.T


def _grid_and_field(state_or_grid, f):
    if isinstance(state_or_grid, FieldState):
        return state_or_grid.grid, state_or_grid.psi if f is None else _values(state_or_grid.grid, f)
    return state_or_grid, _values(state_or_grid, f)


def ef_derivatives(state: FieldState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(T psi, Y psi, |slashed-nabla psi|^2)`` on the slice.

    ``T psi = pi``; ``Y psi = phi - h'(r) pi`` (``phi - pi`` for t* slices);
    ``|slashed-nabla psi|^2 = (d_theta psi)^2 / r^2``.
    """
    g = state.grid
    t = state.pi
    y = state.phi - g.h_prime[:, None] * state.pi
    dth = angular_gradient(state)
    return t, y, dth**2 / g.r[:, None] ** 2


# ---------------------------------------------------------------------------
# snapshot files: one JSON header line, then CSV rows (r, theta, psi, pi, phi_r)
# ---------------------------------------------------------------------------

SNAPSHOT_COLUMNS = ("r_per_M", "theta_rad", "psi", "pi_per_M", "phi_r_per_M")


def write_snapshot(state: FieldState, path) -> None:
    g = state.grid
    header = {
        "t_star_per_M": state.t_star / g.mass,
        "mass": g.mass,
        "grid": asdict(g.spec),
        "columns": list(SNAPSHOT_COLUMNS),
    }
    rr, tt = np.meshgrid(g.r / g.mass, g.theta, indexing="ij")
    table = np.column_stack(
        [rr.ravel(), tt.ravel(), state.psi.ravel(), state.pi.ravel() * g.mass, state.phi.ravel() * g.mass]
    )
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    buf.write(",".join(SNAPSHOT_COLUMNS) + "\n")
    np.savetxt(buf, table, delimiter=",", fmt="%.17g")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_snapshot(path) -> FieldState:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError(f"{path}: missing JSON header line")
        header = json.loads(first[2:])
        cols = fh.readline().strip().split(",")
        if tuple(cols) != SNAPSHOT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {cols}")
        table = np.loadtxt(fh, delimiter=",", ndmin=2)
    params = SpacetimeParams(header["mass"])
    grid = make_grid(GridSpec(**header["grid"]), params)
    shape = grid.shape
    M = params.mass
    if not np.allclose(table[:, 0].reshape(shape)[:, 0] * M, grid.r, rtol=1e-12, atol=0):
        raise ValueError(f"{path}: radial nodes do not match the grid in the header")
    return FieldState(
        grid,
        header["t_star_per_M"] * M,
        table[:, 2].reshape(shape),
        table[:, 3].reshape(shape) / M,
        table[:, 4].reshape(shape) / M,
    )
