"""Comparison functions of the constant-curvature model spaces.

``sn(k, t)`` is the solution of ``f'' + k f = 0`` with ``f(0) = 0`` and
``f'(0) = 1``; its logarithmic derivative solves the scalar Riccati equation
``rho' + rho**2 = -k``.  Everything a model space form contributes to a
comparison (sphere mean curvature, ball volume) is built from these two.
"""

from __future__ import annotations

import math

from scipy import integrate

# below this value of |k| t**2 the closed forms lose digits; use Taylor data
TAYLOR_SWITCH = 1e-8


class DomainError(ValueError):
    """Raised when a radius lies outside ``(0, domain_end(k))``."""


def domain_end(k: float) -> float:
    """First positive zero of ``sn_k``; ``math.inf`` when ``k <= 0``."""
    if k > 0:
        return math.pi / math.sqrt(k)
    return math.inf


def sn(k: float, t: float) -> float:
    if abs(k) * t * t < TAYLOR_SWITCH:
        return t * (1.0 - k * t * t / 6.0)
    if k > 0:
        s = math.sqrt(k)
        return math.sin(s * t) / s
    s = math.sqrt(-k)
    return math.sinh(s * t) / s


def sn_prime(k: float, t: float) -> float:
    if abs(k) * t * t < TAYLOR_SWITCH:
        return 1.0 - k * t * t / 2.0
    if k > 0:
        return math.cos(math.sqrt(k) * t)
    return math.cosh(math.sqrt(-k) * t)


def _check_open_domain(k: float, t: float) -> None:
    if not (0.0 < t < domain_end(k)):
        raise DomainError(f"t={t!r} outside (0, {domain_end(k)!r}) for k={k!r}")


def sn_ratio(k: float, t: float) -> float:
    """``sn_k'(t) / sn_k(t)``, defined on ``(0, domain_end(k))``."""
    _check_open_domain(k, t)
    if abs(k) * t * t < TAYLOR_SWITCH:
        return 1.0 / t - k * t / 3.0
    if k > 0:
        s = math.sqrt(k)
        return s / math.tan(s * t)
    s = math.sqrt(-k)
    return s / math.tanh(s * t)


def sphere_area(n: int) -> float:
    """Measure of the unit sphere ``S^{n-1}`` in ``R^n``."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def model_mean_curvature(n: int, k: float, r: float) -> float:
    """Mean curvature of the radius-``r`` geodesic sphere of the space form."""
    return (n - 1) * sn_ratio(k, r)


def _sin_power_integral(m: int, x: float) -> float:
    # int_0^x sin(u)**m du by the standard reduction formula
    if m == 0:
        return x
    if m == 1:
        return 2.0 * math.sin(x / 2.0) ** 2
    return (-math.sin(x) ** (m - 1) * math.cos(x) + (m - 1) * _sin_power_integral(m - 2, x)) / m


def _sinh_power_integral(m: int, x: float) -> float:
    if m == 0:
        return x
    if m == 1:
        return 2.0 * math.sinh(x / 2.0) ** 2
    return (math.sinh(x) ** (m - 1) * math.cosh(x) - (m - 1) * _sinh_power_integral(m - 2, x)) / m


def model_ball_volume(n: int, k: float, r: float) -> float:
    """Volume of the radius-``r`` geodesic ball in the n-dimensional space form.

    Uses the closed antiderivative of ``sn_k**(n-1)`` after rescaling ``k`` to
    ``{-1, 0, 1}``; for ``|k| r**2`` small (where the rescaled recurrence
    cancels badly) it falls back to adaptive Gauss-Kronrod quadrature.
    """
    if n < 2:
        raise ValueError("dimension must be >= 2")
    if not (0.0 < r <= domain_end(k)):
        raise DomainError(f"r={r!r} outside (0, {domain_end(k)!r}] for k={k!r}")
    m = n - 1
    if k == 0:
        radial = r**n / n
    elif abs(k) * r * r < 1e-3:
        radial, _ = integrate.quad(lambda t: sn(k, t) ** m, 0.0, r, epsabs=1e-10, epsrel=1e-13, limit=200)
    elif k > 0:
        s = math.sqrt(k)
        radial = _sin_power_integral(m, s * r) / s ** (m + 1)
    else:
        s = math.sqrt(-k)
        radial = _sinh_power_integral(m, s * r) / s ** (m + 1)
    return sphere_area(n) * radial
