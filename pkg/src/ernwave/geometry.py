"""
Background geometry of the extremal Reissner-Nordstrom exterior.

Everything here is a closed-form function of the areal radius ``r`` and the
mass ``M``. The charge never appears explicitly: extremality fixes ``|e| = M``
so the horizon factor is always

    D(r) = ((r - M) / r)**2,

which has a double root at the (degenerate) horizon ``r = M``.

The Couch-Torrence map ``r -> M + M**2 / (r - M)`` and its conformal factor
``Omega = (r - M) / M`` are also defined here; the field-level transformation
lives in :mod:`ernwave.couch_torrence`.

All functions accept scalars or numpy arrays and raise :class:`DomainError`
when asked about points inside the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "SpacetimeParams",
    "FoliationSpec",
    "horizon_factor",
    "horizon_factor_deriv",
    "sqrt_horizon_factor",
    "tortoise",
    "ct_radius",
    "ct_omega",
    "photon_sphere_radius",
]


class DomainError(ValueError):
    """Raised for radii outside the modelled region ``r >= M``."""


@dataclass(frozen=True)
class SpacetimeParams:
    """Extremal RN background, geometric units G = c = 1."""

    mass: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.mass) or self.mass <= 0:
            raise ValueError(f"mass must be positive and finite, got {self.mass!r}")


@dataclass(frozen=True)
class FoliationSpec:
    """Split of a slice into a compact part ``r <= R0`` and a far-field part.

    Parameters
    ----------
    split_radius : float
        ``R0``; must lie strictly outside the photon sphere ``r = 2M``.
    r_max : float
        Outer edge of the computational domain.
    """

    split_radius: float
    r_max: float

    def validate(self, params: SpacetimeParams) -> list[str]:
        errors = []
        if not self.split_radius > 2.0 * params.mass:
            errors.append(
                f"photon-sphere constraint violated: R0 = {self.split_radius} must "
                f"exceed 2M = {2.0 * params.mass}"
            )
        if not self.r_max > self.split_radius:
            errors.append(f"r_max = {self.r_max} must exceed R0 = {self.split_radius}")
        return errors

    def check(self, params: SpacetimeParams) -> None:
        errors = self.validate(params)
        if errors:
            raise ValueError("; ".join(errors))


def photon_sphere_radius(params: SpacetimeParams) -> float:
    return 2.0 * params.mass


def _radius(r, params, *, strict):
    r = np.asarray(r, dtype=float)
    M = params.mass
    bad = r <= M if strict else r < M
    if np.any(bad):
        where = "r <= M" if strict else "r < M"
        raise DomainError(f"radius outside the exterior ({where}): min r = {r.min()}, M = {M}")
    return r


def _out(x):
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


def horizon_factor(r, params: SpacetimeParams):
    """``D(r) = ((r - M)/r)**2``, vanishing exactly at ``r = M``."""
    r = _radius(r, params, strict=False)
    x = (r - params.mass) / r
    return _out(x * x)


def sqrt_horizon_factor(r, params: SpacetimeParams):
    """``sqrt(D) = (r - M)/r``; the weight carried by the nonlinearity."""
    r = _radius(r, params, strict=False)
    return _out((r - params.mass) / r)


def horizon_factor_deriv(r, params: SpacetimeParams):
    """``dD/dr = 2 M (r - M) / r**3``; zero at the degenerate horizon."""
    r = _radius(r, params, strict=False)
    M = params.mass
    return _out(2.0 * M * (r - M) / r**3)


def tortoise(r, params: SpacetimeParams):
    """Tortoise coordinate with ``dr*/dr = 1/D``, normalised so ``r*(2M) = 0``.

    ``r* = r + 2M log((r - M)/M) - M**2/(r - M) + C`` with ``C = -M``.
    Diverges to ``-inf`` at the horizon.
    """
    r = _radius(r, params, strict=True)
    M = params.mass
    y = r - M
    return _out(r + 2.0 * M * np.log(y / M) - M * M / y - M)


def ct_radius(r, params: SpacetimeParams):
    """Couch-Torrence radius ``r' = M + M**2/(r - M)``.

    An involution of ``(M, inf)`` exchanging the horizon with infinity and
    fixing the photon sphere.
    """
    r = _radius(r, params, strict=True)
    M = params.mass
    return _out(M + M * M / (r - M))


def ct_omega(r, params: SpacetimeParams):
    """Conformal factor ``Omega = (r - M)/M``; ``Omega(r) * Omega(r') = 1``."""
    r = _radius(r, params, strict=True)
    return _out((r - params.mass) / params.mass)
