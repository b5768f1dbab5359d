"""
Evolution of  Box_g psi = sqrt(D) A(psi) g^{ab} d_a psi d_b psi  on extremal RN.

In ingoing Eddington-Finkelstein coordinates ``(v, r)``

    Box psi = 2 psi_vr + D psi_rr + (2/r) psi_v + (D' + 2D/r) psi_r + r^-2 Lap psi.

Slices are ``tau = v - h(r)``; with ``d_v = d_tau`` and ``d_r|_v = d_r|_tau - h' d_tau``

    Box psi = h'(D h' - 2) psi_tt + (2 - 2 D h') psi_tr + D psi_rr
              + (2/r - D h'' - (D' + 2D/r) h') psi_t + (D' + 2D/r) psi_r + r^-2 Lap psi.

The ``psi_tt`` coefficient is negative whenever ``0 < h' < 2/D`` (spacelike
slices), so the equation is solved for ``d_tau pi``. The system is evolved in
first-order form ``(psi, pi = T psi, phi = d_r psi)`` with RK4.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import (
    FieldState,
    Grid,
    GridSpec,
    angular_gradient,
    angular_laplacian,
    d_dr,
    ef_derivatives,
    make_grid,
)
from .geometry import SpacetimeParams

log = logging.getLogger(__name__)

__all__ = [
    "Coupling",
    "Bump",
    "InitialData",
    "EvolutionConfig",
    "Problem",
    "BreakdownReport",
    "Thresholds",
    "RunResult",
    "NumericalFailure",
    "wave_coefficients",
    "wave_operator",
    "null_form",
    "initial_state",
    "rhs",
    "step",
    "evolve",
    "sup_norms",
    "breakdown_check",
    "default_thresholds",
    "constraint_violation",
]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Coupling:
    """The bounded coefficient ``A(psi)`` in front of the null form.

    ``kind="constant"`` gives ``A = a0``; ``"tanh"`` gives
    ``A = a0 (1 + tanh(psi)) / 2``; ``"table"`` linearly interpolates the
    pairs in ``table`` (clamped outside), each ``|A| <= a0``.
    """

    kind: str = "constant"
    a0: float = 1.0
    table: tuple[tuple[float, float], ...] = ()

    def validate(self) -> list[str]:
        errors = []
        if self.kind not in ("constant", "tanh", "table"):
            errors.append(f"coupling kind must be constant, tanh or table, got {self.kind!r}")
        if not np.isfinite(self.a0):
            errors.append("coupling a0 must be finite")
        if self.kind == "table":
            if len(self.table) < 2:
                errors.append("coupling table needs at least two (psi, A) pairs")
            else:
                xs = [p[0] for p in self.table]
                if any(b <= a for a, b in zip(xs, xs[1:])):
                    errors.append("coupling table psi values must be strictly increasing")
                if any(abs(p[1]) > abs(self.a0) for p in self.table):
                    errors.append("coupling table values must satisfy |A| <= a0")
        return errors

    def __call__(self, psi: np.ndarray) -> np.ndarray | float:
        if self.kind == "constant":
            return self.a0
        if self.kind == "tanh":
            return 0.5 * self.a0 * (1.0 + np.tanh(psi))
        xs, ys = zip(*self.table)
        return np.interp(psi, xs, ys)


@dataclass(frozen=True)
class Bump:
    """Smooth compactly supported radial profile with Legendre content.

    ``f(r, theta) = amplitude * b((r - center)/width) * sum_l w_l P_l(cos theta)``
    with ``b(s) = exp(1 - 1/(1 - s^2))`` for ``|s| < 1`` and 0 otherwise.
    """

    center: float
    width: float
    amplitude: float = 1.0
    modes: tuple[tuple[int, float], ...] = ((0, 1.0),)

    def radial(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Profile and its r-derivative (exact)."""
        s = (np.asarray(r, dtype=float) - self.center) / self.width
        inside = np.abs(s) < 1.0
        q = np.where(inside, 1.0 - s * s, 1.0)
        b = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
        db = np.where(inside, b * (-2.0 * s / q**2) / self.width, 0.0)
        return self.amplitude * b, self.amplitude * db

    def angular(self, mu: np.ndarray) -> np.ndarray:
        out = np.zeros_like(mu, dtype=float)
        for l, w in self.modes:
            c = np.zeros(l + 1)
            c[l] = 1.0
            out = out + w * np.polynomial.legendre.legval(mu, c)
        return out

    def evaluate(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        """``(f, d_r f)`` on the grid."""
        b, db = self.radial(grid.r)
        ang = self.angular(grid.angular.mu) if grid.n_theta > 1 else np.array([self._l0()])
        return np.outer(b, ang), np.outer(db, ang)

    def _l0(self) -> float:
        # spherically symmetric grids keep only the l = 0 content
        return sum(w for l, w in self.modes if l == 0)

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.width, self.center + self.width


@dataclass(frozen=True)
class InitialData:
    """``(psi, T psi) = (eps f, eps g)`` on the slice ``tau = 0``.

    The support may straddle the horizon (that is where the conserved charge
    comes from) but must end before the outer boundary.
    """

    f: Bump
    g: Bump | None = None

    def validate(self, grid_spec: GridSpec, params: SpacetimeParams) -> list[str]:
        errors = []
        for name, bump in (("f", self.f), ("g", self.g)):
            if bump is None:
                continue
            if bump.width <= 0:
                errors.append(f"initial data {name}: width must be positive")
            if bump.support[1] >= grid_spec.r_max:
                errors.append(f"initial data {name}: support reaches the outer boundary r_max")
            if bump.support[1] <= params.mass:
                errors.append(f"initial data {name}: support lies inside the horizon")
            for l, _ in bump.modes:
                if l < 0 or (grid_spec.n_theta > 1 and l > grid_spec.n_theta - 1):
                    errors.append(f"initial data {name}: mode l={l} not representable on the grid")
        return errors


@dataclass(frozen=True)
class EvolutionConfig:
    """Time integration settings.

    ``cfl`` scales the step against the fastest characteristic, so on a
    uniform ``t*`` grid ``dt = cfl * dr``.
    """

    t_star_end: float = 100.0
    cfl: float = 0.25
    dissipation: float = 0.3
    amplitude: float = 1e-2
    coupling: Coupling = Coupling()
    output_every: float = 1.0
    threshold_factor: float = 1e3
    keep_snapshots: bool = True

    def validate(self) -> list[str]:
        errors = []
        if not 0 < self.cfl <= 0.5:
            errors.append(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if not 0 <= self.dissipation <= 1.0:
            errors.append(f"dissipation must lie in [0, 1], got {self.dissipation}")
        if not self.amplitude >= 0:
            errors.append(f"amplitude (epsilon) must be >= 0, got {self.amplitude}")
        if not self.t_star_end > 0:
            errors.append("t_star_end must be positive")
        if not self.output_every > 0:
            errors.append("output_every must be positive")
        if not self.threshold_factor > 1:
            errors.append("threshold_factor must exceed 1")
        errors.extend(self.coupling.validate())
        return errors


@dataclass(frozen=True)
class Problem:
    params: SpacetimeParams
    grid: GridSpec
    data: InitialData
    evolution: EvolutionConfig = EvolutionConfig()

    def validate(self) -> list[str]:
        return self.grid.validate(self.params) + self.data.validate(self.grid, self.params) + self.evolution.validate()

    def make_grid(self) -> Grid:
        return make_grid(self.grid, self.params)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveCoefficients:
    tt: np.ndarray
    tr: np.ndarray
    rr: np.ndarray
    t: np.ndarray
    r: np.ndarray
    ang: np.ndarray


# keyed by id(grid); the grid is stored alongside so that its id cannot be
# recycled while the entry exists
_COEFF_CACHE: dict[int, tuple[Grid, WaveCoefficients]] = {}


def wave_coefficients(grid: Grid) -> WaveCoefficients:
    """Column vectors of the d'Alembertian in ``(tau, r)`` for this grid."""
    key = id(grid)
    hit = _COEFF_CACHE.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1]
    r, D, dD = grid.r, grid.D, grid.dD
    hp, hpp = grid.h_prime, grid.h_second
    c_r = dD + 2.0 * D / r
    coeffs = WaveCoefficients(
        tt=(hp * (D * hp - 2.0))[:, None],
        tr=(2.0 - 2.0 * D * hp)[:, None],
        rr=D[:, None],
        t=(2.0 / r - D * hpp - c_r * hp)[:, None],
        r=c_r[:, None],
        ang=(1.0 / r**2)[:, None],
    )
    if len(_COEFF_CACHE) > 64:
        _COEFF_CACHE.clear()
    _COEFF_CACHE[key] = (grid, coeffs)
    return coeffs


def wave_operator(state: FieldState, pi_dot: np.ndarray | float = 0.0) -> np.ndarray:
    """``Box_g psi`` on a slice, given ``d_tau pi``.

    Second derivatives come from the evolved variables: ``psi_tr = d_r pi``
    and ``psi_rr = d_r phi``.
    """
    g = state.grid
    c = wave_coefficients(g)
    return (
        c.tt * pi_dot
        + c.tr * d_dr(g, state.pi)
        + c.rr * d_dr(g, state.phi)
        + c.t * state.pi
        + c.r * state.phi
        + c.ang * angular_laplacian(state)
    )


def null_form(state: FieldState, coupling: Coupling = Coupling()) -> np.ndarray:
    """``sqrt(D) A(psi) (2 T psi Y psi + D (Y psi)^2 + |slashed-nabla psi|^2)``."""
    g = state.grid
    t, y, grad2 = ef_derivatives(state)
    D = g.D[:, None]
    return g.sqrtD[:, None] * coupling(state.psi) * (2.0 * t * y + D * y * y + grad2)


def initial_state(grid: Grid, data: InitialData, amplitude: float) -> FieldState:
    f, df = data.f.evaluate(grid)
    if data.g is not None:
        gval, _ = data.g.evaluate(grid)
    else:
        gval = np.zeros(grid.shape)
    return FieldState(grid, 0.0, amplitude * f, amplitude * gval, amplitude * df)


def _ko(f: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Seven-point Kreiss-Oliger term, switched off on the three end nodes.

    The sixth difference keeps the truncation error at fifth order; it damps
    the grid Nyquist mode at the same rate as the usual five-point form.
    """
    out = np.zeros_like(f)
    out[3:-3] = weight[3:-3] * (
        f[:-6] - 6.0 * f[1:-5] + 15.0 * f[2:-4] - 20.0 * f[3:-3] + 15.0 * f[4:-2] - 6.0 * f[5:-1] + f[6:]
    )
    return out


class _RhsKernel:
    """Precomputed pieces of the right-hand side for one grid."""

    def __init__(self, grid: Grid, dissipation: float, coupling: Coupling, nonlinear: bool):
        self.grid = grid
        self.c = wave_coefficients(grid)
        self.coupling = coupling
        self.nonlinear = nonlinear
        cin, cout = grid.char_speeds
        speed = np.maximum(np.abs(cin), np.abs(cout)) / grid.r_x
        self.ko_weight = (dissipation / 64.0 * speed)[:, None]
        self.dissipation = dissipation
        self.out_speed = cout[-1]
        self.r_out = grid.r[-1]
        self.inv_rx = (1.0 / grid.r_x)[:, None]
        self.inv_tt = 1.0 / self.c.tt
        self.hp = grid.h_prime[:, None]
        self.D = grid.D[:, None]
        self.sqrtD = grid.sqrtD[:, None]
        self.inv_r2 = (1.0 / grid.r**2)[:, None]
        ang = grid.angular
        self.lap = ang.lap.T if grid.n_theta > 1 else None
        self.grad = ang.grad.T if grid.n_theta > 1 else None

    def __call__(self, u: np.ndarray, source: np.ndarray | None = None) -> np.ndarray:
        psi, pi, phi = u
        c = self.c
        dpi_dr = _dx(pi) * self.inv_rx
        dphi_dr = _dx(phi) * self.inv_rx
        rest = c.tr * dpi_dr + c.rr * dphi_dr + c.t * pi + c.r * phi
        if self.lap is not None:
            rest = rest + c.ang * (psi @ self.lap)
        forcing = 0.0
        if self.nonlinear:
            y = phi - self.hp * pi
            q = 2.0 * pi * y + self.D * y * y
            if self.grad is not None:
                q = q + (psi @ self.grad) ** 2 * self.inv_r2
            forcing = self.sqrtD * self.coupling(psi) * q
        if source is not None:
            forcing = forcing + source
        du = np.empty_like(u)
        du[0] = pi
        du[1] = (forcing - rest) * self.inv_tt
        du[2] = dpi_dr
        # Sommerfeld on r psi:  d_tau(r psi) = -c_out d_r(r psi)
        du[1][-1] = -self.out_speed * (du[2][-1] + pi[-1] / self.r_out)
        if self.dissipation > 0:
            du[1] += _ko(pi, self.ko_weight)
            du[2] += _ko(phi, self.ko_weight)
        return du


def _dx(f):
    df = np.empty_like(f)
    df[2:-2] = (f[:-4] - f[4:] + 8.0 * (f[3:-1] - f[1:-3])) * (1.0 / 12.0)
    df[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) * (1.0 / 12.0)
    df[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) * (1.0 / 12.0)
    df[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) * (1.0 / 12.0)
    df[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) * (1.0 / 12.0)
    return df


class NumericalFailure(RuntimeError):
    """Non-finite values appeared in the evolved fields."""

    def __init__(self, t_star: float, where: str):
        super().__init__(f"non-finite values in {where} at t* = {t_star:.6g}")
        self.t_star = t_star
        self.where = where


def rhs(
    state: FieldState,
    evolution: EvolutionConfig = EvolutionConfig(),
    source: np.ndarray | None = None,
    nonlinear: bool = True,
) -> FieldState:
    """Time derivatives ``(d psi, d pi, d phi)/d tau`` packed as a FieldState."""
    if not state.is_finite():
        raise NumericalFailure(state.t_star, "rhs input")
    kernel = _RhsKernel(state.grid, evolution.dissipation, evolution.coupling, nonlinear)
    du = kernel(state.stacked(), source)
    return FieldState.from_stacked(state.grid, state.t_star, du)


def step(
    u: np.ndarray,
    t: float,
    dt: float,
    kernel: Callable,
    source: Callable[[float], np.ndarray] | None = None,
) -> np.ndarray:
    """One classical RK4 step of ``du/dt = kernel(u, source(t))``."""
    s = (lambda tt: None) if source is None else source
    k1 = kernel(u, s(t))
    k2 = kernel(u + 0.5 * dt * k1, s(t + 0.5 * dt))
    k3 = kernel(u + 0.5 * dt * k2, s(t + 0.5 * dt))
    k4 = kernel(u + dt * k3, s(t + dt))
    return u + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def step_state(state: FieldState, dt: float, evolution: EvolutionConfig = EvolutionConfig(), nonlinear=True) -> FieldState:
    """Advance a FieldState by ``dt`` (convenience wrapper around :func:`step`)."""
    kernel = _RhsKernel(state.grid, evolution.dissipation, evolution.coupling, nonlinear)
    u = step(state.stacked(), state.t_star, dt, kernel)
    if not np.isfinite(u).all():
        raise NumericalFailure(state.t_star + dt, "RK4 step")
    return FieldState.from_stacked(state.grid, state.t_star + dt, u)


# ---------------------------------------------------------------------------
# breakdown monitor
# ---------------------------------------------------------------------------

NORM_NAMES = ("T_psi", "sqrtD_Y_psi", "grad_psi")


@dataclass(frozen=True)
class Thresholds:
    T_psi: float
    sqrtD_Y_psi: float
    grad_psi: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in NORM_NAMES}


@dataclass(frozen=True)
class BreakdownReport:
    t_star: float
    norm: str
    value: float
    threshold: float


def sup_norms(state: FieldState) -> dict[str, float]:
    """Sup norms of ``T psi``, ``sqrt(D) Y psi`` and ``|slashed-nabla psi|``."""
    t, y, grad2 = ef_derivatives(state)
    return {
        "T_psi": float(np.max(np.abs(t))),
        "sqrtD_Y_psi": float(np.max(np.abs(state.grid.sqrtD[:, None] * y))),
        "grad_psi": float(np.sqrt(np.max(grad2))),
    }


def default_thresholds(state: FieldState, factor: float = 1e3) -> Thresholds:
    """``factor`` times the largest of the three slice norms, for each norm.

    The norms share units, and a component that vanishes initially (e.g.
    ``T psi`` for time-symmetric data) is generically excited at the same
    scale, so a per-component reference would be meaningless.
    """
    scale = max(sup_norms(state).values())
    return Thresholds(**{k: factor * scale for k in NORM_NAMES})


def breakdown_check(state: FieldState, thresholds: Thresholds) -> BreakdownReport | None:
    norms = sup_norms(state)
    for name in NORM_NAMES:
        lim = getattr(thresholds, name)
        if norms[name] > lim:
            return BreakdownReport(state.t_star, name, norms[name], lim)
    return None


def constraint_violation(state: FieldState) -> float:
    """``max |phi - d_r psi|`` over the slice."""
    return float(np.max(np.abs(state.phi - d_dr(state.grid, state.psi))))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    status: str  # "completed" | "breakdown" | "numerical_failure"
    grid: Grid
    dt: float
    snapshots: list[FieldState] = field(default_factory=list)
    breakdown: BreakdownReport | None = None
    failure: str | None = None
    thresholds: Thresholds | None = None
    steps: int = 0

    @property
    def final(self) -> FieldState:
        return self.snapshots[-1]


def time_step(grid: Grid, evolution: EvolutionConfig) -> float:
    """Largest step dividing ``output_every`` below the CFL bound."""
    dt_max = evolution.cfl / grid.max_index_speed
    n_sub = max(1, math.ceil(evolution.output_every / dt_max - 1e-12))
    return evolution.output_every / n_sub


def evolve(
    problem: Problem,
    observer: Callable[[FieldState], None] | None = None,
    source: Callable[[float, Grid], np.ndarray] | None = None,
    initial: FieldState | None = None,
    fault: tuple[str, float] | None = None,
) -> RunResult:
    """Integrate ``problem`` to ``t_star_end`` or until breakdown.

    ``observer`` is called on every output slice (including ``tau = 0``).
    ``source(t, grid)`` adds a forcing term (manufactured solutions).
    ``fault = ("nan" | "spike", t)`` corrupts the state once, for testing the
    failure paths.
    """
    errors = problem.validate()
    if errors:
        raise ValueError("invalid problem: " + "; ".join(errors))
    evo = problem.evolution
    grid = problem.make_grid()
    state = initial if initial is not None else initial_state(grid, problem.data, evo.amplitude)
    dt = time_step(grid, evo)
    nonlinear = evo.amplitude > 0 and evo.coupling.a0 != 0
    kernel = _RhsKernel(grid, evo.dissipation, evo.coupling, nonlinear)
    thresholds = default_thresholds(state, evo.threshold_factor)
    result = RunResult("completed", grid, dt, thresholds=thresholds)
    src = None if source is None else (lambda t: source(t, grid))

    def emit(s):
        if observer is not None:
            observer(s)
        if evo.keep_snapshots:
            result.snapshots.append(s)

    emit(state)
    n_out = int(round(evo.t_star_end / evo.output_every))
    n_sub = int(round(evo.output_every / dt))
    u = state.stacked()
    t0 = state.t_star
    fault_step = None if fault is None else int(round(fault[1] / dt))
    k = 0
    for i_out in range(1, n_out + 1):
        for _ in range(n_sub):
            u = step(u, t0 + k * dt, dt, kernel, src)
            k += 1
            t = t0 + k * dt
            if fault_step is not None and k == fault_step:
                u = _inject(u, fault[0], thresholds)
                if np.isfinite(u).all():
                    hit = FieldState.from_stacked(grid, t, u)
                    report = breakdown_check(hit, thresholds)
                    if report is not None:
                        emit(hit)
                        log.warning("breakdown: %s = %.3g exceeds %.3g at t* = %.6g", report.norm, report.value,
                                    report.threshold, report.t_star)
                        result.status = "breakdown"
                        result.breakdown = report
                        result.steps = k
                        return result
            if not np.isfinite(u).all():
                result.status = "numerical_failure"
                result.failure = str(NumericalFailure(t, "evolved fields"))
                result.steps = k
                log.warning(result.failure)
                return result
        state = FieldState.from_stacked(grid, t0 + i_out * evo.output_every, u)
        report = breakdown_check(state, thresholds)
        emit(state)
        if report is not None:
            result.status = "breakdown"
            result.breakdown = report
            log.warning("breakdown: %s = %.3g exceeds %.3g at t* = %.6g", report.norm, report.value,
                        report.threshold, report.t_star)
            break
    result.steps = k
    return result


def _inject(u, kind, thresholds):
    u = u.copy()
    i = u.shape[1] // 2
    if kind == "nan":
        u[1, i, 0] = np.nan
    elif kind == "spike":
        u[1, i, 0] = 10.0 * thresholds.T_psi
    else:
        raise ValueError(f"unknown fault kind {kind!r}")
    return u
