"""
Energy functionals, the horizon charge and decay-rate fits.

Slice integrals use the measure ``r^2 dr domega`` on the evolution slices.
The far-field ("null") pieces of the energies are approximated by the
``r >= R0`` part of the same slices. Densities:

=====  ====================================================
 E_T   (T psi)^2 + D (Y psi)^2 + |slashed-nabla psi|^2
 E_P   (T psi)^2 + sqrt(D) (Y psi)^2 + |slashed-nabla psi|^2
 E_N   (T psi)^2 + (Y psi)^2 + |slashed-nabla psi|^2
=====  ====================================================

on the compact part ``r <= R0``. Beyond ``R0`` the slices stand in for outgoing
null cones and all three use the null flux density
``(L psi)^2 + D |slashed-nabla psi|^2`` with ``L = T + (D/2) Y`` the outgoing
null generator. Since ``D <= sqrt(D) <= 1`` on ``r >= M`` the three energies
are pointwise ordered. Pass ``R0=None`` for the plain ``{t* = tau}`` energy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import stats

from .fields import (
    FieldState,
    Grid,
    angular_gradient,
    d2_dr2,
    d_dr,
    ef_derivatives,
    project,
    spherical_mean,
)

__all__ = [
    "EnergyRecord",
    "HorizonTrace",
    "SupNormRecord",
    "RateFit",
    "InstabilityReport",
    "energy_density",
    "energy_flux",
    "rp_energy",
    "photon_sphere_cutoff",
    "morawetz_density",
    "morawetz_increment",
    "hardy_ratio",
    "hardy_constant",
    "energy_record",
    "horizon_trace",
    "initial_horizon_charge",
    "sup_norm_record",
    "decay_fit",
    "initial_energy_E0",
    "instability_report",
    "Recorder",
    "write_records_csv",
    "read_records_csv",
]

ETA = 0.1


@dataclass(frozen=True)
class EnergyRecord:
    t_star: float
    E_T: float
    E_P: float
    E_N: float
    E_rp1: float
    E_rp2: float
    morawetz_increment: float
    hardy_ratio: float


@dataclass(frozen=True)
class HorizonTrace:
    """Spherical-mean quantities at ``r = M`` on one slice.

    ``H0 = Ypsi0 + psi0/M`` is conserved along the horizon.
    """

    v: float
    psi0: float
    Ypsi0: float
    Y2psi0: float
    H0: float


@dataclass(frozen=True)
class SupNormRecord:
    t_star: float
    psi: float
    T_psi: float
    grad_psi: float
    sqrtD_Y_psi: float


@dataclass(frozen=True)
class RateFit:
    """Power-law fit ``value ~ C (1 + tau)^exponent`` on ``window``."""

    exponent: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    stderr: float

    @property
    def confidence_interval(self) -> tuple[float, float]:
        half = 1.96 * self.stderr
        return (self.exponent - half, self.exponent + half)


# ---------------------------------------------------------------------------
# slice functionals
# ---------------------------------------------------------------------------

def _yweight(grid: Grid, kind: str) -> np.ndarray:
    if kind == "T":
        return grid.D
    if kind == "P":
        return grid.sqrtD
    if kind == "N":
        return np.ones_like(grid.r)
    raise ValueError(f"energy kind must be 'T', 'P' or 'N', got {kind!r}")


def energy_density(state: FieldState, kind: str, R0: float | None = None) -> np.ndarray:
    g = state.grid
    t, y, grad2 = ef_derivatives(state)
    dens = t * t + _yweight(g, kind)[:, None] * y * y + grad2
    if R0 is None:
        return dens
    D = g.D[:, None]
    lpsi = t + 0.5 * D * y
    return np.where(g.r[:, None] > R0, lpsi * lpsi + D * grad2, dens)


def energy_flux(state: FieldState, kind: str, R0: float | None = None) -> float:
    """Slice integral of the ``kind`` in {"T", "P", "N"} energy density.

    With ``R0`` given, the part ``r > R0`` uses the null flux density.
    """
    return state.grid.integrate(energy_density(state, kind, R0))


def rp_energy(state: FieldState, p: float, R0: float) -> float:
    """``int_{r >= R0} r^(p-2) (d_v (r psi))^2 dr domega`` with ``d_v (r psi) = r T psi``."""
    if not 0.0 <= p <= 2.0:
        raise ValueError(f"p must lie in [0, 2], got {p}")
    g = state.grid
    dens = g.r[:, None] ** p * state.pi**2 / g.r[:, None] ** 2  # divided by r^2: integrate() multiplies it back
    return g.integrate(dens, r_min=R0)


def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def photon_sphere_cutoff(r: np.ndarray, mass: float, delta: float | None = None) -> np.ndarray:
    """Smooth cutoff: 0 on ``|r - 2M| <= delta``, 1 on ``|r - 2M| >= 2 delta``."""
    delta = mass / 4.0 if delta is None else delta
    return _smooth_step((np.abs(np.asarray(r) - 2.0 * mass) - delta) / delta)


def morawetz_density(state: FieldState, eta: float = ETA, delta: float | None = None) -> np.ndarray:
    g = state.grid
    t, y, grad2 = ef_derivatives(state)
    r = g.r[:, None]
    D = g.D[:, None]
    chi = photon_sphere_cutoff(g.r, g.mass, delta)[:, None]
    return chi * ((t * t + D**2.5 * y * y) / r ** (1.0 + eta) + g.sqrtD[:, None] * grad2 / r)


def morawetz_increment(state: FieldState, dt: float, eta: float = ETA, delta: float | None = None) -> float:
    """``dt`` times the slice integral of the Morawetz bulk density."""
    return dt * state.grid.integrate(morawetz_density(state, eta, delta))


def hardy_ratio(state: FieldState) -> float:
    """``int psi^2 / r^2  /  E_T`` on the whole slice; 0 when the energy vanishes."""
    g = state.grid
    e_t = energy_flux(state, "T")
    if e_t == 0.0:
        return 0.0
    return g.integrate(state.psi**2 / g.r[:, None] ** 2) / e_t


def hardy_constant(grid: Grid) -> float:
    """Upper bound for :func:`hardy_ratio` when ``psi`` vanishes at ``r_max``.

    The one-dimensional Hardy inequality ``int psi^2 dr <= 4 int (r - M)^2
    (d_r psi)^2 dr`` along the slice, with ``d_r = Y + h' T``, gives
    ``8 max(1, sup D h'^2)``.
    """
    return 8.0 * max(1.0, float(np.max(grid.D * grid.h_prime**2)))


def _horizon_pi_dot(grid: Grid, dpi_dr0: float, pi0: float) -> float:
    # the equation restricted to r = M (sqrt(D) kills the nonlinearity; the
    # spherical mean kills the angular Laplacian)
    return (dpi_dr0 + pi0 / grid.mass) / grid.h_prime[0]


def horizon_trace(state: FieldState) -> HorizonTrace:
    """Spherical-mean horizon record from one-sided differences at ``r = M``."""
    g = state.grid
    if g.r[0] != g.mass:
        raise ValueError("horizon_trace needs a grid whose first node is exactly r = M")
    psi0 = spherical_mean(state)
    pi0 = spherical_mean(state, "pi")
    hp, hpp = g.h_prime[0], g.h_second[0]
    dpsi = d_dr(g, psi0)[0]
    dpi = d_dr(g, pi0)[0]
    ypsi = dpsi - hp * pi0[0]
    pidot = _horizon_pi_dot(g, dpi, pi0[0])
    y2psi = d2_dr2(g, psi0)[0] - 2.0 * hp * dpi + hp * hp * pidot - hpp * pi0[0]
    return HorizonTrace(
        v=state.t_star + float(g.height[0]),
        psi0=float(psi0[0]),
        Ypsi0=float(ypsi),
        Y2psi0=float(y2psi),
        H0=float(ypsi + psi0[0] / g.mass),
    )


def initial_horizon_charge(grid: Grid, data, amplitude: float) -> float:
    """Exact ``H0`` of the initial data ``(eps f, eps g)``, without differencing."""
    if grid.r[0] != grid.mass:
        raise ValueError("initial_horizon_charge needs a grid whose first node is exactly r = M")
    f, df = data.f.evaluate(grid)
    g = data.g.evaluate(grid)[0] if data.g is not None else np.zeros(grid.shape)
    w = grid.angular.mean_weights
    val = df[0] - grid.h_prime[0] * g[0] + f[0] / grid.mass
    return float(amplitude * np.dot(w, val))


def sup_norm_record(state: FieldState) -> SupNormRecord:
    t, y, grad2 = ef_derivatives(state)
    return SupNormRecord(
        t_star=state.t_star,
        psi=float(np.max(np.abs(state.psi))),
        T_psi=float(np.max(np.abs(t))),
        grad_psi=float(np.sqrt(np.max(grad2))),
        sqrtD_Y_psi=float(np.max(np.abs(state.grid.sqrtD[:, None] * y))),
    )


def energy_record(state: FieldState, R0: float, dt: float) -> EnergyRecord:
    return EnergyRecord(
        t_star=state.t_star,
        E_T=energy_flux(state, "T", R0),
        E_P=energy_flux(state, "P", R0),
        E_N=energy_flux(state, "N", R0),
        E_rp1=rp_energy(state, 1.0, R0),
        E_rp2=rp_energy(state, 2.0, R0),
        morawetz_increment=morawetz_increment(state, dt),
        hardy_ratio=hardy_ratio(state),
    )


# ---------------------------------------------------------------------------
# fits and reports
# ---------------------------------------------------------------------------

def decay_fit(times, values, window: tuple[float, float]) -> RateFit:
    """Least-squares slope of ``log(value)`` against ``log(1 + tau)``.

    The window must span at least a decade in ``1 + tau``.
    """
    t1, t2 = window
    if not (1.0 + t2) >= 10.0 * (1.0 + t1) * (1.0 - 1e-12):
        raise ValueError(f"fit window {window} spans less than one decade in 1 + tau")
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = (times >= t1) & (times <= t2)
    if sel.sum() < 3:
        raise ValueError("fewer than three samples inside the fit window")
    vals = values[sel]
    if np.any(~(vals > 0)):
        raise ValueError("decay_fit needs strictly positive values in the window")
    fit = stats.linregress(np.log1p(times[sel]), np.log(vals))
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), (t1, t2), float(fit.stderr))


def _fornberg_weights(times: np.ndarray, at: float, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at ``at``."""
    n = len(times)
    dt = times - at
    A = np.vander(dt, n, increasing=True).T
    b = np.zeros(n)
    b[order] = math.factorial(order)
    return np.linalg.solve(A, b)


_E0_ACCURACY = 4


def initial_energy_E0(snapshots: list[FieldState], K: int = 2, L: int = 2, R0: float = 6.0) -> float:
    """Truncated initial-data norm, angular modes ``k <= K`` and ``T^l``, ``l <= L``.

    Time derivatives are taken on the first ``L + 5`` snapshots with
    one-sided interpolatory weights at the initial slice, fourth-order
    accurate for every ``T^{l+1}`` with ``l <= L``; ``R0`` (units of the
    grid mass) splits the slice into the compact and far-field parts.
    """
    if not 0 <= K <= 2 or not 0 <= L <= 2:
        raise ValueError("E0 is truncated to K <= 2 and L <= 2")
    need = L + 1 + _E0_ACCURACY
    if len(snapshots) < need:
        raise ValueError(f"E0 needs at least {need} snapshots, got {len(snapshots)}")
    snaps = snapshots[:need]
    g = snaps[0].grid
    times = np.array([s.t_star for s in snaps])
    t0 = times[0]
    W = {m: _fornberg_weights(times, t0, m) for m in range(L + 2)}
    R0 = R0 * g.mass
    inner = g.r <= R0
    r2 = g.r[:, None] ** 2
    hp = g.h_prime[:, None]
    lmax = min(K, g.angular.lmax)

    def tder(fields_, m):
        return sum(w * f for w, f in zip(W[m], fields_))

    total = 0.0
    for k in range(lmax + 1):
        psi_k, pi_k, ypsi_k = [], [], []
        for s in snaps:
            coeffs = project(g, s.psi).coefficients[:, k]
            pcoef = project(g, s.pi).coefficients[:, k]
            shape = g.angular.P[:, k][None, :]
            psi_k.append(np.outer(coeffs, shape[0]))
            pi_k.append(np.outer(pcoef, shape[0]))
            ypsi_k.append(np.outer(d_dr(g, coeffs) - g.h_prime * pcoef, shape[0]))
        for l in range(L + 1):
            # T^l of the primitive fields; T^{l+1} psi = T^l pi
            tl_pi = pi_k[0] if l == 0 else tder(pi_k, l)
            tl_psi = psi_k[0] if l == 0 else tder(psi_k, l)
            tl_y = ypsi_k[0] if l == 0 else tder(ypsi_k, l)
            tl1_y = tder(ypsi_k, l + 1)
            tl_y2 = d_dr(g, tl_y) - hp * tl1_y
            grad_tl = angular_gradient(g, tl_psi) ** 2 / r2
            grad_tl_y = angular_gradient(g, tl_y) ** 2 / r2
            base = tl_pi**2 + tl_y**2 + grad_tl
            ycomm = tl1_y**2 + tl_y2**2 + grad_tl_y
            # far field: the same base density plus the p = 2 weighted flux
            far = base + r2 * tl_pi**2
            total += g.integrate(np.where(inner[:, None], base + ycomm, 0.0))
            total += g.integrate(np.where(inner[:, None], 0.0, far))
    return float(total)


@dataclass(frozen=True)
class InstabilityReport:
    hypotheses_met: bool
    degenerate: bool
    H0: float
    final_v: float
    Ypsi0_minus_H0: float
    Y2_slope: float
    Y2_intercept: float
    Y2_r_squared: float
    slope_sign_ok: bool
    notes: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return asdict(self)


def instability_report(traces: list[HorizonTrace]) -> InstabilityReport:
    """Summarise the horizon instability from a series of horizon records.

    Reports ``Ypsi0 - H0`` at the last sample (non-decay of the transversal
    derivative) and a straight-line fit of ``Y^2 psi0`` against ``v`` over the
    final half of the series, whose slope should have the sign of ``-H0``.
    """
    if not traces:
        return InstabilityReport(False, True, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False, ("no samples",))
    v = np.array([h.v for h in traces])
    y2 = np.array([h.Y2psi0 for h in traces])
    first, last = traces[0], traces[-1]
    H0 = first.H0
    notes = []
    hyp = first.psi0 > 0 and first.Ypsi0 > 0
    if not hyp:
        notes.append("hypotheses unmet: need psi0(0, M) > 0 and Y psi0(0, M) > 0")
    if np.all(y2 == 0) and H0 == 0:
        return InstabilityReport(hyp, True, 0.0, float(v[-1]), 0.0, 0.0, 0.0, 0.0, False,
                                 tuple(notes + ["identically zero horizon data"]))
    half = v >= v[0] + 0.5 * (v[-1] - v[0])
    if half.sum() < 3:
        notes.append("fewer than three samples in the final half")
        slope = intercept = r2 = 0.0
    else:
        fit = stats.linregress(v[half], y2[half])
        slope, intercept, r2 = float(fit.slope), float(fit.intercept), float(fit.rvalue**2)
        if r2 < 0.98:
            notes.append(f"Y^2 psi0 is not linear in v (R^2 = {r2:.3f}); the horizon region may be "
                         "under-resolved, try a smaller grid growth rate")
    return InstabilityReport(
        hypotheses_met=hyp,
        degenerate=False,
        H0=H0,
        final_v=float(v[-1]),
        Ypsi0_minus_H0=float(last.Ypsi0 - H0),
        Y2_slope=slope,
        Y2_intercept=intercept,
        Y2_r_squared=r2,
        slope_sign_ok=bool(slope * H0 < 0),
        notes=tuple(notes),
    )


class Recorder:
    """Evolution observer collecting horizon, energy and sup-norm records."""

    def __init__(self, R0: float = 6.0, cadence: float = 1.0, energies: bool = True):
        self.R0 = R0
        self.cadence = cadence
        self.energies = energies
        self.horizon: list[HorizonTrace] = []
        self.energy: list[EnergyRecord] = []
        self.norms: list[SupNormRecord] = []

    def __call__(self, state: FieldState) -> None:
        self.horizon.append(horizon_trace(state))
        self.norms.append(sup_norm_record(state))
        if self.energies:
            self.energy.append(energy_record(state, self.R0 * state.grid.mass, self.cadence))

    def column(self, name: str, which: str = "norms") -> np.ndarray:
        return np.array([getattr(rec, name) for rec in getattr(self, which)])


# ---------------------------------------------------------------------------
# CSV output; columns carry their units relative to M
# ---------------------------------------------------------------------------

UNITS = {
    EnergyRecord: {"t_star": "t_star_per_M", "E_T": "E_T", "E_P": "E_P", "E_N": "E_N",
                   "E_rp1": "E_rp1_per_M", "E_rp2": "E_rp2_per_M2",
                   "morawetz_increment": "morawetz_increment", "hardy_ratio": "hardy_ratio"},
    HorizonTrace: {"v": "v_per_M", "psi0": "psi0", "Ypsi0": "Ypsi0_times_M",
                   "Y2psi0": "Y2psi0_times_M2", "H0": "H0_times_M"},
    SupNormRecord: {"t_star": "t_star_per_M", "psi": "sup_psi", "T_psi": "sup_T_psi_times_M",
                    "grad_psi": "sup_grad_psi_times_M", "sqrtD_Y_psi": "sup_sqrtD_Y_psi_times_M"},
}

# power of M multiplying each stored quantity to make it dimensionless
_SCALE = {
    "t_star_per_M": -1, "v_per_M": -1, "E_T": 0, "E_P": 0, "E_N": 0, "E_rp1_per_M": -1,
    "E_rp2_per_M2": -2, "morawetz_increment": 0, "hardy_ratio": 0, "psi0": 0,
    "Ypsi0_times_M": 1, "Y2psi0_times_M2": 2, "H0_times_M": 1, "sup_psi": 0,
    "sup_T_psi_times_M": 1, "sup_grad_psi_times_M": 1, "sup_sqrtD_Y_psi_times_M": 1,
}


def write_records_csv(records, path, mass: float = 1.0) -> None:
    if not records:
        raise ValueError("no records to write")
    cls = type(records[0])
    names = [f.name for f in fields(cls)]
    cols = [UNITS[cls][n] for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for rec in records:
            w.writerow([repr(float(getattr(rec, n)) * mass ** _SCALE[c]) for n, c in zip(names, cols)])


def read_records_csv(path, mass: float = 1.0):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = tuple(rows[0])
    for cls, units in UNITS.items():
        if tuple(units.values()) == header:
            names = list(units)
            return [cls(**{n: float(v) / mass ** _SCALE[c] for n, c, v in zip(names, header, row)})
                    for row in rows[1:]]
    raise ValueError(f"{path}: unrecognised columns {header}")
