"""Model manifolds seen from a base point, through the radial curvature operator.

A manifold is described only by what the polar-coordinate flow consumes: the
operator ``X -> Rm(X, d_r) d_r`` on the tangent space of the geodesic sphere,
written in the stereographic chart of the unit sphere of directions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

SYMMETRY_TOL = 1e-8


class ValidationError(ValueError):
    """A manifold description or curvature table fails its invariants."""


# -- direction chart ---------------------------------------------------------


@dataclass(frozen=True)
class DirectionChartPoint:
    """Stereographic coordinates of a unit direction.

    ``pole="north"`` projects from ``(0, ..., 0, 1)`` and therefore misses that
    direction; ``pole="south"`` is the antipodal copy of the chart.
    """

    theta: tuple[float, ...]
    pole: str = "north"

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(x) for x in self.theta))
        if self.pole not in ("north", "south"):
            raise ValidationError(f"unknown chart pole {self.pole!r}")

    @property
    def dim(self) -> int:
        return len(self.theta)


def direction(theta: DirectionChartPoint) -> np.ndarray:
    t = np.asarray(theta.theta, dtype=float)
    s = float(t @ t)
    last = (s - 1.0) / (s + 1.0)
    if theta.pole == "south":
        last = -last
    return np.concatenate([2.0 * t / (s + 1.0), [last]])


def chart_inverse(xi: Sequence[float], pole: str | None = None) -> DirectionChartPoint:
    """Chart coordinates of a unit vector.

    With ``pole=None`` the chart is picked so the point stays away from the
    projection pole (south copy for the upper hemisphere).
    """
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    if pole is None:
        pole = "south" if xi[-1] > 0 else "north"
    if pole == "north":
        theta = xi[:-1] / (1.0 - xi[-1])
    else:
        theta = xi[:-1] / (1.0 + xi[-1])
    return DirectionChartPoint(tuple(theta), pole)


def sphere_metric(theta: DirectionChartPoint) -> np.ndarray:
    t = np.asarray(theta.theta, dtype=float)
    return 4.0 / (1.0 + float(t @ t)) ** 2 * np.eye(len(t))


# -- warped profiles ---------------------------------------------------------


@dataclass(frozen=True)
class WarpedProfile:
    """Radial profile ``f`` of the metric ``dr^2 + f(r)^2 g_sphere``.

    ``f``, ``df`` and ``ddf`` must be closed-form and numpy-vectorised.
    ``curvature`` may give ``-f''/f`` directly where the quotient is 0/0 at
    the zeros of ``f``.
    """

    name: str
    f: Callable
    df: Callable
    ddf: Callable
    first_zero: float = math.inf
    curvature: Callable | None = None

    def radial_curvature(self, r):
        if self.curvature is not None:
            return self.curvature(r)
        return -self.ddf(r) / self.f(r)


def _sin_profile() -> WarpedProfile:
    return WarpedProfile("sin", np.sin, np.cos, lambda r: -np.sin(r), math.pi, lambda r: np.ones_like(np.asarray(r, float)))


def _sinh_profile() -> WarpedProfile:
    return WarpedProfile("sinh", np.sinh, np.cosh, np.sinh, math.inf, lambda r: -np.ones_like(np.asarray(r, float)))


def _linear_profile() -> WarpedProfile:
    return WarpedProfile(
        "linear",
        lambda r: np.asarray(r, float) * 1.0,
        lambda r: np.ones_like(np.asarray(r, float)),
        lambda r: np.zeros_like(np.asarray(r, float)),
        math.inf,
        lambda r: np.zeros_like(np.asarray(r, float)),
    )


def _poly_cubic_profile() -> WarpedProfile:
    # f = r + r^3, -f''/f = -6/(1 + r^2)
    return WarpedProfile(
        "poly_cubic",
        lambda r: r + r**3,
        lambda r: 1.0 + 3.0 * r**2,
        lambda r: 6.0 * r,
        math.inf,
        lambda r: -6.0 / (1.0 + np.asarray(r, float) ** 2),
    )


def _perturbed_sin_profile(eps: float) -> WarpedProfile:
    # f = sin + eps sin^3 keeps f(0)=0, f'(0)=1 and the zero at pi;
    # -f''/f = (1 - eps (6 cos^2 - 3 sin^2)) / (1 + eps sin^2)
    def curv(r):
        s, c = np.sin(r), np.cos(r)
        return (1.0 - eps * (6.0 * c**2 - 3.0 * s**2)) / (1.0 + eps * s**2)

    return WarpedProfile(
        f"perturbed_sin({eps!r})",
        lambda r: np.sin(r) + eps * np.sin(r) ** 3,
        lambda r: np.cos(r) * (1.0 + 3.0 * eps * np.sin(r) ** 2),
        lambda r: -np.sin(r) + eps * (6.0 * np.sin(r) * np.cos(r) ** 2 - 3.0 * np.sin(r) ** 3),
        math.pi,
        curv,
    )


_PROFILE_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$")


def builtin_profile(name: str) -> WarpedProfile:
    """Look up a named profile: ``sin``, ``sinh``, ``linear``, ``poly_cubic``,
    ``perturbed_sin(eps)``."""
    m = _PROFILE_RE.match(name)
    if not m:
        raise ValidationError(f"malformed profile name {name!r}")
    base, arg = m.group(1), m.group(2)
    simple = {"sin": _sin_profile, "sinh": _sinh_profile, "linear": _linear_profile, "poly_cubic": _poly_cubic_profile}
    if base in simple and arg is None:
        return simple[base]()
    if base == "perturbed_sin" and arg is not None:
        try:
            eps = float(arg)
        except ValueError as exc:
            raise ValidationError(f"perturbed_sin needs a numeric argument, got {arg!r}") from exc
        return _perturbed_sin_profile(eps)
    raise ValidationError(f"unknown profile {name!r}")


# -- manifold kinds ----------------------------------------------------------


@dataclass(frozen=True)
class SpaceForm:
    k: float


@dataclass(frozen=True)
class WarpedProduct:
    profile: WarpedProfile


@dataclass(frozen=True)
class CustomProfile:
    """Curvature supplied pointwise as an ``(n-1) x (n-1)`` table ``R_a^b``.

    Runs on these specs are profile-level: only symmetry is validated, not
    that an ambient Riemannian metric realises the table.
    """

    provider: Callable[[DirectionChartPoint, float], np.ndarray]
    label: str = "custom"
    anisotropic: bool = False


Kind = Union[SpaceForm, WarpedProduct, CustomProfile]


@dataclass(frozen=True)
class ManifoldSpec:
    n: int
    kind: Kind
    cut_equals_conjugate: bool = False
    label: str = field(default="")

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValidationError(f"dimension must be an integer >= 2, got {self.n!r}")
        if isinstance(self.kind, WarpedProduct):
            _validate_profile(self.kind.profile)

    @property
    def working_end(self) -> float:
        """Largest radius the curvature can be evaluated at."""
        if isinstance(self.kind, WarpedProduct) and self.kind.profile.curvature is None:
            return self.kind.profile.first_zero
        return math.inf

    @property
    def is_isotropic(self) -> bool:
        return not isinstance(self.kind, CustomProfile)

    def isotropic_curvature(self, r):
        """Scalar ``c(r)`` with ``R = c(r) Id``; vectorised over ``r``."""
        if isinstance(self.kind, SpaceForm):
            return np.full_like(np.asarray(r, float), float(self.kind.k))
        if isinstance(self.kind, WarpedProduct):
            return np.asarray(self.kind.profile.radial_curvature(np.asarray(r, float)), float)
        raise TypeError("custom profiles are not isotropic")


def _validate_profile(p: WarpedProfile) -> None:
    r = 1e-6
    if abs(float(p.f(r)) / r - 1.0) > 1e-4 or abs(float(p.df(r)) - 1.0) > 1e-4:
        raise ValidationError(f"profile {p.name} must satisfy f(0)=0, f'(0)=1")
    probe = np.linspace(1e-3, min(p.first_zero, 10.0) * 0.999, 64)
    if np.any(p.f(probe) <= 0):
        raise ValidationError(f"profile {p.name} is not positive before its first zero")


def space_form(n: int, k: float) -> ManifoldSpec:
    return ManifoldSpec(n, SpaceForm(float(k)), cut_equals_conjugate=True, label=f"space_form(k={k!r})")


def warped(n: int, profile: WarpedProfile | str) -> ManifoldSpec:
    if isinstance(profile, str):
        profile = builtin_profile(profile)
    return ManifoldSpec(n, WarpedProduct(profile), cut_equals_conjugate=True, label=f"warped({profile.name})")


def constant_table(table, anisotropic: bool | None = None) -> CustomProfile:
    """Custom profile whose table does not depend on direction or radius."""
    arr = np.array(table, dtype=float)
    if arr.ndim == 1:
        arr = np.diag(arr)
    if anisotropic is None:
        anisotropic = not np.allclose(arr, arr[0, 0] * np.eye(len(arr)))
    arr.setflags(write=False)
    return CustomProfile(lambda theta, r: arr, label=f"constant{arr.tolist()}", anisotropic=anisotropic)


# -- radial curvature --------------------------------------------------------


@dataclass(frozen=True)
class RadialCurvatureTable:
    R: np.ndarray
    r: float


def radial_curvature(spec: ManifoldSpec, theta: DirectionChartPoint, r: float) -> RadialCurvatureTable:
    m = spec.n - 1
    if isinstance(spec.kind, CustomProfile):
        R = np.array(spec.kind.provider(theta, r), dtype=float)
        if R.shape != (m, m):
            raise ValidationError(f"curvature table must be {m}x{m}, got {R.shape}")
        low = R @ sphere_metric(theta)
        if np.max(np.abs(low - low.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(low))):
            raise ValidationError(f"curvature table at r={r!r} is not symmetric")
        return RadialCurvatureTable(R, r)
    c = float(spec.isotropic_curvature(r))
    return RadialCurvatureTable(c * np.eye(m), r)


def ricci_radial(spec: ManifoldSpec, theta: DirectionChartPoint, r: float) -> float:
    """``Ric(d_r, d_r)``, the trace of the radial curvature operator."""
    return float(np.trace(radial_curvature(spec, theta, r).R))


def radial_curvature_bounds(spec: ManifoldSpec, theta: DirectionChartPoint, r: float) -> tuple[float, float]:
    """Smallest and largest sectional curvature of radial 2-planes at ``(theta, r)``."""
    R = radial_curvature(spec, theta, r).R
    # R is self-adjoint for the chart metric, so its spectrum is real
    w = np.linalg.eigvals(R).real
    return float(np.min(w)), float(np.max(w))
