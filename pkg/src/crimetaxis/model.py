"""Model constants, the taxis cutoff family and the pointwise reaction terms.

The simulated system is

    u_t = Δu - χ ∇·(η_ε(u) u/v ∇v) - uv + ρu - μu^{2+γ}
    v_t = Δv - v + uv

with homogeneous Neumann conditions.  ``gamma = 0`` is the plain logistic
case, ``gamma > 0`` the strengthened one, and ``eps = 0`` switches the cutoff
off (η ≡ 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError


@dataclass(frozen=True)
class Parameters:
    rho: float = 2.0
    mu: float = 1.0
    chi: float = 2.0
    gamma: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        for name in ("rho", "mu", "chi", "gamma", "eps"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if not self.mu > 0:
            raise DomainError(f"mu > 0 required, got {self.mu!r}")
        if not self.chi > 0:
            raise DomainError(f"chi > 0 required, got {self.chi!r}")
        if not self.gamma >= 0:
            raise DomainError(f"gamma >= 0 required, got {self.gamma!r}")
        if not 0 <= self.eps <= 1:
            raise DomainError(f"0 <= eps <= 1 required, got {self.eps!r}")


def _smoothstep5(z):
    return z * z * z * (z * (6.0 * z - 15.0) + 10.0)


def cutoff_eta(eps: float, s):
    """Taxis cutoff η_ε evaluated at ``s >= 0`` (scalar or array).

    Equal to 1 on ``[0, 1/eps - 1]``, 0 on ``[1/eps, inf)`` and a quintic
    smoothstep in between.  ``eps = 0`` returns 1 everywhere.  On the plateau
    the value is exactly 1.0, so runs whose densities never leave it are
    bit-identical across ``eps``.
    """
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("cutoff_eta is defined for s >= 0 only")
    if eps < 0 or eps > 1:
        raise DomainError(f"eps must lie in [0, 1], got {eps!r}")
    if eps == 0:
        out = np.ones_like(arr)
    else:
        z = arr - (1.0 / eps - 1.0)
        zc = np.clip(z, 0.0, 1.0)
        out = np.where(z <= 0.0, 1.0, np.where(z >= 1.0, 0.0, 1.0 - _smoothstep5(zc)))
    if np.ndim(s) == 0:
        return float(out)
    return out


def reaction_u(u, v, p: Parameters):
    """Source of the first equation: ``-uv + rho u - mu u^(2+gamma)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if p.gamma == 0:
        logistic = u * u
    else:
        logistic = u ** (2.0 + p.gamma)
    out = -u * v + p.rho * u - p.mu * logistic
    return float(out) if out.ndim == 0 else out


def reaction_v(u, v):
    """Source of the second equation: ``-v + uv``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = -v + u * v
    return float(out) if out.ndim == 0 else out


def taxis_coefficient(u, v, p: Parameters):
    """Cutoff-weighted singular sensitivity ``chi * eta_eps(u) * u / v``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise SingularityError("taxis coefficient requires v > 0")
    out = p.chi * cutoff_eta(p.eps, u) * u / v
    return float(out) if np.ndim(out) == 0 else out


def homogeneous_fixed_point(p: Parameters) -> tuple[float, float] | None:
    """Spatially constant equilibrium with positive attractiveness.

    ``v (u - 1) = 0`` with ``v > 0`` forces ``u = 1``; the first equation then
    gives ``v = rho - mu`` independently of ``gamma``.
    """
    if p.rho > p.mu:
        return 1.0, p.rho - p.mu
    return None


@dataclass(frozen=True)
class BoundConstants:
    """Explicit ceilings for the L1 mass and the space-time integrals of u.

    ``c1`` and ``k1_weak`` follow the closed forms of the a priori estimates.
    ``k1_weak_sharp`` is the exact supremum of ``((1+|rho|) y - mu y^(2+gamma)) |Omega|``
    over ``y >= 0``; it coincides with ``k1_weak`` at ``gamma = 0`` and is the
    constant actually needed for the strengthened system (``k1_weak`` falls
    below the supremum once ``gamma > 0``).
    """

    c1: float
    k1_weak: float
    k1_weak_sharp: float
    initial_mass: float
    area: float
    rho: float
    mu: float
    gamma: float

    @property
    def c1_weak(self) -> float:
        return max(self.k1_weak_sharp, self.initial_mass)

    @property
    def l1_ceiling(self) -> float:
        """L1 ceiling valid for the configured ``gamma``."""
        return self.c1 if self.gamma == 0 else self.c1_weak

    def c2_of_T(self, T: float) -> float:
        """Ceiling for ``int_0^T int u^2``.

        For ``gamma > 0`` the bound is obtained from :meth:`c2g_of_T` by
        Hölder's inequality on ``Omega x (0, T)``.
        """
        if self.gamma == 0:
            return (self.initial_mass + T * abs(self.rho) * self.c1) / self.mu
        g = self.gamma
        if T == 0:
            return 0.0
        return (self.area * T) ** (g / (2.0 + g)) * self.c2g_of_T(T) ** (2.0 / (2.0 + g))

    def c2g_of_T(self, T: float) -> float:
        """Ceiling for ``int_0^T int u^(2+gamma)``."""
        return (self.initial_mass + T * abs(self.rho) * self.l1_ceiling) / self.mu


def bound_constants(p: Parameters, omega_area: float, initial_mass: float) -> BoundConstants:
    if not omega_area > 0:
        raise DomainError("omega_area must be positive")
    if initial_mass < 0:
        raise DomainError("initial_mass must be nonnegative")
    a = abs(p.rho) + 1.0
    g = p.gamma
    c1 = max(a * a * omega_area / (4.0 * p.mu), initial_mass)
    k1_weak = (a / (2.0 + g)) ** (2.0 + g) * (1.0 + g) / p.mu ** (1.0 + g) * omega_area
    # sup_y (a y - mu y^(2+g)) attained at y* = (a / (mu (2+g)))^(1/(1+g))
    y_star = (a / (p.mu * (2.0 + g))) ** (1.0 / (1.0 + g))
    k1_sharp = a * y_star * (1.0 + g) / (2.0 + g) * omega_area
    return BoundConstants(
        c1=c1,
        k1_weak=k1_weak,
        k1_weak_sharp=k1_sharp,
        initial_mass=float(initial_mass),
        area=float(omega_area),
        rho=p.rho,
        mu=p.mu,
        gamma=g,
    )
