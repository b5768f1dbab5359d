"""
The Couch-Torrence conformal involution and numerical audits of its identities.

The map ``Phi: r -> M + M^2/(r - M)`` (with ``t`` fixed) exchanges the
horizon with infinity. With ``Omega = (r - M)/M`` the pulled-back metric
satisfies ``g_I = Omega^2 g_O``, and because the scalar curvature vanishes

    Box_I (Omega^{-1} psi_O) = Omega^{-3} Box_O psi_O .

Transporting the null form ``g_O(d psi_O, d psi_O)`` to the horizon chart
gives, with ``psi_I = Omega^{-1} psi_O`` and ``Q_I = g_I(d psi_I, d psi_I)``,

    Omega^{-3} Q_O = Omega Q_I + (2/M) psi_I T psi_I + (2D/M) psi_I Y psi_I
                     + sqrt(D) psi_I^2 / (M r) .

The residual checks below evaluate both sides by fourth-order finite
differences on analytic test fields. Each chart gets its own uniform radial
grid and far-chart quantities are interpolated to the image nodes; time
derivatives are centred differences and angular ones exact in a Legendre
basis.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from .fields import AngularBasis, d2_dx2, d_dx
from .geometry import DomainError, SpacetimeParams, ct_omega, ct_radius

__all__ = [
    "ChartTag",
    "RadialField",
    "CTTestField",
    "ct_pullback",
    "ct_conformal_residual",
    "ct_nullform_transform_residual",
    "horizon_form_terms",
    "ct_weight_identity_check",
    "WeightIdentityReport",
    "null_form_phi_expansion",
    "involution_error",
    "ct_audit",
    "write_audit_report",
]


class ChartTag(str, enum.Enum):
    NEAR_HORIZON = "near_horizon"
    NEAR_INFINITY = "near_infinity"

    @property
    def opposite(self) -> "ChartTag":
        return ChartTag.NEAR_INFINITY if self is ChartTag.NEAR_HORIZON else ChartTag.NEAR_HORIZON


@dataclass(frozen=True)
class RadialField:
    """Samples of a field on increasing radial nodes, tagged by chart."""

    r: np.ndarray
    values: np.ndarray
    tag: ChartTag

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or v.shape != r.shape:
            raise ValueError("RadialField needs matching one-dimensional r and values")
        if np.any(np.diff(r) <= 0):
            raise ValueError("RadialField nodes must be strictly increasing")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "tag", ChartTag(self.tag))


def _local_interp(x, y, targets, degree=8):
    out = np.empty(len(targets))
    npts = degree + 1
    if len(x) < npts:
        raise ValueError(f"need at least {npts} source nodes for degree-{degree} interpolation")
    idx = np.searchsorted(x, targets)
    for k, (i, xt) in enumerate(zip(idx, targets)):
        lo = int(np.clip(i - npts // 2, 0, len(x) - npts))
        out[k] = BarycentricInterpolator(x[lo:lo + npts], y[lo:lo + npts])(xt)
    return out


def ct_pullback(field: RadialField, params: SpacetimeParams = SpacetimeParams(), target=None) -> RadialField:
    """Transform ``psi -> Omega^{-1} psi o Phi`` into the opposite chart.

    Without ``target`` the result lives on the image nodes ``Phi(r)``, where
    it is exact. Otherwise it is interpolated onto ``target`` (which must lie
    inside the image) with local degree-8 barycentric polynomials.
    """
    if np.any(field.r <= params.mass):
        raise DomainError("ct_pullback: source nodes must lie strictly outside r = M")
    r_img = ct_radius(field.r, params)[::-1]
    # at r_img = Phi(r):  Omega(r_img)^{-1} = Omega(r)
    vals = (ct_omega(field.r, params) * field.values)[::-1]
    tag = field.tag.opposite
    if target is None:
        return RadialField(r_img, vals, tag)
    target = np.asarray(target, dtype=float)
    lo, hi = r_img[0], r_img[-1]
    if target.min() < lo * (1 - 1e-14) or target.max() > hi * (1 + 1e-14):
        raise ValueError(f"target nodes leave the image interval [{lo}, {hi}]")
    return RadialField(target, _local_interp(r_img, vals, target), tag)


def involution_error(field: RadialField, params: SpacetimeParams = SpacetimeParams(), target=None) -> float:
    """Max deviation of ``ct_pullback`` applied twice from the original samples.

    With ``target`` the intermediate field is interpolated onto those nodes
    and the second application interpolates back onto ``field.r``.
    """
    once = ct_pullback(field, params, target)
    twice = ct_pullback(once, params, None if target is None else field.r)
    if target is None:
        return float(max(np.max(np.abs(twice.r - field.r) / field.r), np.max(np.abs(twice.values - field.values))))
    return float(np.max(np.abs(twice.values - field.values)))


# ---------------------------------------------------------------------------
# analytic test fields and finite-difference operators in (t, r, theta)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CTTestField:
    """``psi_O = A cos(w t) b((r' - c)/s) (1 + q P_2(cos theta))``, compact in ``r'``.

    ``b(x) = (1 - x^2)^12`` on ``|x| < 1``: eleven continuous derivatives,
    ample for fourth-order differences, and without the steep flanks of an
    infinitely flat bump. Lengths in units of M.
    """

    center: float = 2.2
    width: float = 0.8
    frequency: float = 1.0
    quadrupole: float = 0.3
    amplitude: float = 1.0

    def check(self, params: SpacetimeParams) -> None:
        lo = (self.center - self.width) * params.mass
        if not (np.isfinite(self.center) and np.isfinite(self.width) and self.width > 0):
            raise DomainError("test field support must be bounded")
        if not lo > params.mass:
            raise DomainError(f"test field support reaches r' = {lo}, must stay outside r = M")

    def __call__(self, t, rp, mu, params: SpacetimeParams):
        M = params.mass
        x = (np.asarray(rp) - self.center * M) / (self.width * M)
        inside = np.abs(x) < 1
        xs = np.where(inside, x, 0.0)
        b = np.where(inside, (1.0 - xs * xs) ** 12, 0.0)
        ang = 1.0 + self.quadrupole * 0.5 * (3.0 * mu * mu - 1.0)
        return self.amplitude * np.cos(self.frequency * t / M) * b * ang

    def support(self, params: SpacetimeParams) -> tuple[float, float]:
        M = params.mass
        return (self.center - self.width) * M, (self.center + self.width) * M


def _radial_nodes(field: CTTestField, params: SpacetimeParams, n: int) -> np.ndarray:
    """Uniform horizon-chart nodes covering the image of the support with margin."""
    M = params.mass
    lo, hi = field.support(params)
    a, b = ct_radius(hi, params), ct_radius(lo, params)
    pad = 0.1 * (b - a)
    a = max(a - pad, M + 0.5 * (a - M))
    return np.linspace(a, b + pad, n)


class _Chart:
    """Uniform radial nodes in one chart, with Legendre nodes in ``theta``."""

    def __init__(self, r, params, n_theta):
        self.nodes = r
        self.h = r[1] - r[0]
        self.r = r[:, None]
        self.M = params.mass
        self.D = ((self.r - self.M) / self.r) ** 2
        self.dD = 2.0 * self.M * (self.r - self.M) / self.r**3
        self.ang = AngularBasis(n_theta)

    def d_r(self, f):
        return d_dx(f) / self.h

    def d_rr(self, f):
        return d2_dx2(f) / self.h**2

    def lap(self, f):
        return f @ self.ang.lap.T

    def grad(self, f):
        return f @ self.ang.grad.T

    def box(self, f_t, dt):
        """``-psi_tt/D + r^-2 d_r(r^2 D psi_r) + r^-2 Lap psi`` at the middle time level."""
        f = f_t[2]
        ftt = (-f_t[0] + 16 * f_t[1] - 30 * f + 16 * f_t[3] - f_t[4]) / (12 * dt * dt)
        fr = self.d_r(f)
        return -ftt / self.D + self.D * self.d_rr(f) + (self.dD + 2 * self.D / self.r) * fr + self.lap(f) / self.r**2

    def derivs(self, f_t, dt):
        f = f_t[2]
        ft = (f_t[0] - 8 * f_t[1] + 8 * f_t[3] - f_t[4]) / (12 * dt)
        return f, ft, self.d_r(f), self.grad(f)

    def null_form(self, f_t, dt):
        _, ft, fr, fth = self.derivs(f_t, dt)
        return -ft * ft / self.D + self.D * fr * fr + fth * fth / self.r**2

    def sample(self, fun, t0, dt):
        mu = self.ang.mu[None, :]
        return [fun(t0 + k * dt, self.r, mu) for k in range(-2, 3)]

    def to(self, f, targets):
        """Interpolate columns of ``f`` to radii ``targets`` (degree 8)."""
        return np.stack([_local_interp(self.nodes, f[:, j], targets) for j in range(f.shape[1])], axis=1)


def _charts(field, params, n, n_theta):
    """Uniform grids in ``r`` (horizon chart) and ``r'`` (far chart), ``n`` nodes each."""
    field.check(params)
    r = _radial_nodes(field, params, n)
    rp = ct_radius(r, params)[::-1]
    rp = np.linspace(rp[0], rp[-1], n)
    return _Chart(r, params, n_theta), _Chart(rp, params, n_theta)


def _psi_i(field, params):
    M = params.mass
    return lambda t, r, mu: field(t, ct_radius(r, params), mu, params) * M / (r - M)


def _psi_o(field, params):
    return lambda t, rp, mu: field(t, rp, mu, params)


def ct_conformal_residual(
    field: CTTestField, params: SpacetimeParams = SpacetimeParams(), n: int = 200,
    n_theta: int = 8, t0: float = 0.4,
) -> float:
    """Max-norm of ``Box_I psi_I - Omega^{-3} Box_O psi_O`` at the horizon-chart nodes.

    Each side is differenced on a uniform grid of its own chart; the far side
    is interpolated to the image nodes ``Phi(r)``.
    """
    ci, co = _charts(field, params, n, n_theta)
    om = (ci.r - params.mass) / params.mass
    lhs = ci.box(ci.sample(_psi_i(field, params), t0, ci.h), ci.h)
    box_o = co.box(co.sample(_psi_o(field, params), t0, co.h), co.h)
    rhs = co.to(box_o, ct_radius(ci.nodes, params)) / om**3
    return float(np.max(np.abs(lhs - rhs)))


def horizon_form_terms(r, psi, t_psi, y_psi, null_form_i, params: SpacetimeParams = SpacetimeParams(),
                       variant: str = "corrected") -> dict[str, np.ndarray]:
    """Right-hand side terms of the transported null form in the horizon chart.

    ``variant="rejected"`` replaces the last term by ``-sqrt(D) psi^2 / M``,
    the form that does not satisfy the identity (kept for the audit).
    """
    M = params.mass
    r = np.asarray(r)
    sqrtD = (r - M) / r
    omega = (r - M) / M
    if variant == "corrected":
        last = sqrtD * psi * psi / (M * r)
    elif variant == "rejected":
        last = -sqrtD * psi * psi / M
    else:
        raise ValueError(f"variant must be 'corrected' or 'rejected', got {variant!r}")
    return {
        "quadratic_gradient": omega * null_form_i,
        "T_term": 2.0 / M * t_psi * psi,
        "Y_term": 2.0 * sqrtD**2 / M * y_psi * psi,
        "zeroth_order": last,
    }


def ct_nullform_transform_residual(
    field: CTTestField, params: SpacetimeParams = SpacetimeParams(), n: int = 200,
    n_theta: int = 8, t0: float = 0.4, variant: str = "corrected",
) -> float:
    """Residual of the horizon-chart equation satisfied by ``psi_I``.

    ``psi_O`` solves ``Box_O psi_O = Q_O + S`` with the manufactured source
    ``S`` differenced on the far chart. The check is
    ``Box_I psi_I - [terms of horizon_form_terms] - Omega^{-3} S o Phi``.
    """
    ci, co = _charts(field, params, n, n_theta)
    om = (ci.r - params.mass) / params.mass
    po = co.sample(_psi_o(field, params), t0, co.h)
    source = co.to(co.box(po, co.h) - co.null_form(po, co.h), ct_radius(ci.nodes, params))
    pi = ci.sample(_psi_i(field, params), t0, ci.h)
    f, ft, fr, _ = ci.derivs(pi, ci.h)
    y = fr - ft / ci.D
    terms = horizon_form_terms(ci.r, f, ft, y, ci.null_form(pi, ci.h), params, variant)
    rhs = sum(terms.values()) + source / om**3
    return float(np.max(np.abs(ci.box(pi, ci.h) - rhs)))


# ---------------------------------------------------------------------------
# algebraic identities in the far chart
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightIdentityReport:
    samples: int
    max_abs_error: float
    max_rel_error: float
    passed: bool


def ct_weight_identity_check(params: SpacetimeParams = SpacetimeParams(), r_prime=None,
                             tol: float = 1e-13) -> WeightIdentityReport:
    """Check ``2 Omega/r'^3 - 2/(M r'^2) = -2/r'^3`` with ``Omega = (r' - M)/M``."""
    M = params.mass
    rp = np.logspace(np.log10(M * (1 + 1e-6)), np.log10(1e6 * M), 1000) if r_prime is None else np.asarray(r_prime, float)
    if np.any(rp <= M):
        raise DomainError("r' samples must exceed M")
    omega = (rp - M) / M
    lhs = 2.0 * omega / rp**3 - 2.0 / (M * rp**2)
    rhs = -2.0 / rp**3
    err = np.abs(lhs - rhs)
    # cancellation in lhs is relative to its largest term
    scale = np.maximum(np.abs(rhs), 2.0 / (M * rp**2))
    rel = float(np.max(err / scale))
    return WeightIdentityReport(len(rp), float(err.max()), rel, rel <= tol)


def null_form_phi_expansion(phi, phi_u, phi_r, grad_phi2, r_prime, params: SpacetimeParams = SpacetimeParams(),
                            variant: str = "corrected"):
    """``g_O(d psi, d psi)`` in outgoing coordinates, written with ``phi = r' psi``.

    ``grad_phi2`` is ``|slashed-nabla phi|^2`` (already carrying ``1/r'^2``).
    ``variant="rejected"`` uses ``+2D/r'^2`` and ``-D phi^4/r'^4`` in place
    of ``-2D/r'^3`` and ``+D phi^2/r'^4``.
    """
    M = params.mass
    rp = np.asarray(r_prime, float)
    D = ((rp - M) / rp) ** 2
    common = D * phi_r**2 / rp**2 - 2.0 * phi_u * phi_r / rp**2 + grad_phi2 / rp**2 + 2.0 * phi_u * phi / rp**3
    if variant == "corrected":
        return common - 2.0 * D * phi_r * phi / rp**3 + D * phi**2 / rp**4
    if variant == "rejected":
        return common + 2.0 * D * phi_r * phi / rp**2 - D * phi**4 / rp**4
    raise ValueError(f"variant must be 'corrected' or 'rejected', got {variant!r}")


def _phi_expansion_error(params, variant, samples=200, seed=7):
    rng = np.random.default_rng(seed)
    M = params.mass
    rp = M * (1.0 + 10.0 ** rng.uniform(-2, 4, samples))
    psi, psi_u, psi_r, grad2 = rng.normal(size=(4, samples))
    D = ((rp - M) / rp) ** 2
    direct = -2.0 * psi_u * psi_r + D * psi_r**2 + grad2
    phi, phi_u = rp * psi, rp * psi_u
    phi_r = psi + rp * psi_r
    expanded = null_form_phi_expansion(phi, phi_u, phi_r, rp**2 * grad2, rp, params, variant)
    return float(np.max(np.abs(expanded - direct) / (np.abs(direct) + np.abs(expanded) + 1e-300)))


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------

def _orders(values):
    v = np.asarray(values, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return [float(x) for x in np.log2(v[:-1] / v[1:])]


NOTES = (
    "horizon-chart null form: the zeroth-order term is +sqrt(D) psi_I^2 / (M r); "
    "the form -sqrt(D) psi_I^2 / M does not satisfy the identity (see rejected residuals)",
    "far-chart expansion in phi = r' psi: the phi d_r' phi term carries -2D/r'^3 (not +2D/r'^2) "
    "and the last term is +D phi^2/r'^4 (not -D phi^4/r'^4)",
    "reverse transformation: the last two terms are +(2D/M) psi_O d_r' psi_O and "
    "+(r' - M)/(M r'^2) psi_O^2; checked symbolically in the test suite, recorded here",
)


def ct_audit(params: SpacetimeParams = SpacetimeParams(), resolutions=(100, 200, 400),
             field: CTTestField = CTTestField(), order_threshold: float = 3.5) -> dict:
    """Run every identity check and return a JSON-serialisable report."""
    M = params.mass
    rng = np.random.default_rng(2024)
    # band-limited profiles on the Phi-invariant interval [1.5M, 3M]
    r = np.linspace(1.5 * M, 3.0 * M, 801)
    inv_exact, inv_interp = 0.0, 0.0
    for _ in range(20):
        k = rng.uniform(0.5, 3.0, 3)
        c = rng.normal(size=3)
        prof = RadialField(r, sum(ci * np.sin(ki * r / M + ci) for ci, ki in zip(c, k)), ChartTag.NEAR_INFINITY)
        inv_exact = max(inv_exact, involution_error(prof, params))
        inv_interp = max(inv_interp, involution_error(prof, params, target=r))
    weight = ct_weight_identity_check(params)
    conf = [ct_conformal_residual(field, params, n) for n in resolutions]
    hor = [ct_nullform_transform_residual(field, params, n) for n in resolutions]
    hor_rejected = [ct_nullform_transform_residual(field, params, n, variant="rejected") for n in resolutions]
    conf_orders, hor_orders = _orders(conf), _orders(hor)
    checks = {
        "involution_exact_nodes": {"max_error": inv_exact, "tolerance": 1e-12, "passed": inv_exact <= 1e-12},
        "involution_interpolated": {"max_error": inv_interp, "tolerance": 1e-10, "passed": inv_interp <= 1e-10},
        "weight_identity": {**asdict(weight), "tolerance": 1e-13},
        "conformal_covariance": {
            "resolutions": list(resolutions), "residuals": conf, "orders": conf_orders,
            "passed": min(conf_orders) >= order_threshold,
        },
        "horizon_null_form": {
            "resolutions": list(resolutions), "residuals": hor, "orders": hor_orders,
            "passed": min(hor_orders) >= order_threshold,
        },
        "horizon_null_form_rejected": {
            "resolutions": list(resolutions), "residuals": hor_rejected, "orders": _orders(hor_rejected),
            "converges": min(_orders(hor_rejected)) >= order_threshold,
        },
        "phi_expansion": {
            "corrected_max_rel_error": _phi_expansion_error(params, "corrected"),
            "rejected_max_rel_error": _phi_expansion_error(params, "rejected"),
        },
    }
    checks["phi_expansion"]["passed"] = checks["phi_expansion"]["corrected_max_rel_error"] < 1e-12
    passed = all(v.get("passed", True) for v in checks.values())
    return {"mass": M, "passed": passed, "checks": checks, "notes": list(NOTES)}


def write_audit_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
