"""Checks of the comparison inequalities on integrated traces.

Every checker first validates its curvature hypothesis on the samples it
uses, raising :class:`HypothesisViolated` when it fails, and only then tests
the conclusion.  Sectional-curvature hypotheses are read as bounds on the
eigenvalues of the radial curvature operator, i.e. on radial 2-planes; every
verdict says so in its notes.

Slack model: a conclusion ``lhs <= rhs`` is violated at a sample by
``max(0, lhs - rhs - RTOL |rhs|)`` and the verdict holds when the worst such
excess is at most ``ATOL``.  Where ``|rhs|`` exceeds ``RECIPROCAL_SWITCH``
(next to a zero of ``sn_k``) both sides are compared as reciprocals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import integrate

from . import spaceform as sf
from .flow import DEFAULT_EPSILON, FlowTrace, StepControl, integrate_lanes
from .manifold import (
    DirectionChartPoint,
    ManifoldSpec,
    SpaceForm,
    radial_curvature_bounds,
    ricci_radial,
    sphere_metric,
)

ATOL = 1e-5
RTOL = 1e-4
RECIPROCAL_SWITCH = 1e3
DIVERGENCE_THRESHOLD = -1e6
OVERSHOOT = 0.05
EVENT_TOL = 1e-3
HYPOTHESIS_TOL = 1e-10
MONOTONE_TOL = 1e-8

RADIAL_NOTE = "Sec hypotheses checked on radial 2-planes only (eigenvalues of R)"
PROFILE_NOTE = "profile-level run: curvature table validated for symmetry only"


@dataclass(frozen=True)
class ComparisonVerdict:
    name: str
    holds: bool
    max_violation: float
    at_r: float
    tolerance: float
    notes: str = ""

    def row(self) -> list[str]:
        return [self.name, "true" if self.holds else "false", "%.17g" % self.max_violation, "%.17g" % self.at_r, "%.17g" % self.tolerance]


class HypothesisViolated(ValueError):
    """The curvature hypothesis of a comparison statement fails; checking the
    conclusion would be vacuous."""

    def __init__(self, name: str, message: str, excess: float = math.inf, at_r: float = math.nan):
        super().__init__(f"{name}: hypothesis violated: {message}")
        self.name = name
        self.excess = excess
        self.at_r = at_r

    def verdict(self) -> ComparisonVerdict:
        return ComparisonVerdict(self.name, False, self.excess, self.at_r, HYPOTHESIS_TOL, f"hypothesis violated: {self.args[0]}")


def _excess_le(lhs: float, rhs: float, rtol: float = RTOL) -> float:
    """Excess of ``lhs <= rhs`` beyond the relative slack."""
    if abs(rhs) > RECIPROCAL_SWITCH and lhs * rhs > 0:
        a, b = 1.0 / rhs, 1.0 / lhs
        return max(0.0, a - b - rtol * abs(a))
    return max(0.0, lhs - rhs - rtol * abs(rhs))


def _verdict(name, radii, excess, tol, notes) -> ComparisonVerdict:
    excess = np.asarray(excess, dtype=float)
    if excess.size == 0:
        return ComparisonVerdict(name, True, 0.0, math.nan, tol, notes + "; no samples in range")
    i = int(np.argmax(excess))
    worst = float(excess[i])
    return ComparisonVerdict(name, worst <= tol, worst, float(radii[i]), tol, notes)


def _combine(name: str, parts: Sequence[ComparisonVerdict], tol: float, notes: str) -> ComparisonVerdict:
    """Merge sub-verdicts, rescaling each violation to the common tolerance."""
    scaled = [(p.max_violation * (tol / p.tolerance), i) for i, p in enumerate(parts)]
    worst, i = max(scaled)
    holds = all(p.holds for p in parts)
    failed = [p for p in parts if not p.holds]
    detail = "; ".join(f"{p.name}: FAIL ({p.max_violation:.3g} at r={p.at_r:.6g})" for p in failed)
    notes = "; ".join(x for x in (notes, detail) if x)
    return ComparisonVerdict(name, holds, worst, parts[i].at_r, tol, notes)


def _curvature_samples(trace: FlowTrace):
    spec, theta = trace.spec, trace.theta
    return [(s.r, *radial_curvature_bounds(spec, theta, s.r)) for s in trace.states]


def _require_upper_curvature(name, trace, K):
    for r, _, hi in _curvature_samples(trace):
        if hi > K + HYPOTHESIS_TOL * max(1.0, abs(K)):
            raise HypothesisViolated(name, f"radial curvature {hi:.6g} > K={K!r} at r={r:.6g}", hi - K, r)


def _require_lower_curvature(name, trace, k):
    for r, lo, _ in _curvature_samples(trace):
        if lo < k - HYPOTHESIS_TOL * max(1.0, abs(k)):
            raise HypothesisViolated(name, f"radial curvature {lo:.6g} < k={k!r} at r={r:.6g}", k - lo, r)


def _require_ricci(name, spec, theta, radii, k):
    bound = (spec.n - 1) * k
    for r in radii:
        ric = ricci_radial(spec, theta, r)
        if ric < bound - HYPOTHESIS_TOL * max(1.0, abs(bound)):
            raise HypothesisViolated(name, f"Ric(dr,dr)={ric:.6g} < (n-1)k={bound:.6g} at r={r:.6g}", bound - ric, r)


def _notes(spec: ManifoldSpec, *extra: str) -> str:
    parts = [spec.label] if spec.label else []
    parts += [e for e in extra if e]
    if not spec.is_isotropic:
        parts.append(PROFILE_NOTE)
    return "; ".join(parts)


# -- Riccati comparison ------------------------------------------------------


def two_sided_grid(t0: float, b: float, n: int, gap: float | None = None) -> np.ndarray:
    """Grid on ``[t0, b - gap]`` refined geometrically towards both ends.

    With ``b = inf`` (or ``gap=None`` and a regular right end) only the left
    end is refined.  Finite differences on such a grid resolve both the
    ``1/t`` layer at the origin and a ``1/(b - t)`` blow-up at ``b``.
    """
    if gap is None or not math.isfinite(b):
        return np.geomspace(t0, b, n)
    mid = 0.5 * b
    left = np.geomspace(t0, mid, n // 2)
    right = b - np.geomspace(gap, b - mid, n - n // 2)[::-1]
    return np.unique(np.concatenate([left, right]))



def riccati_compare(
    t,
    rho1,
    rho2,
    *,
    atol: float = ATOL,
    rtol: float = RTOL,
    hypothesis_factor: float = 1e-3,
    asymptotic_tol: float = 1e-2,
    monotone_tol: float = MONOTONE_TOL,
    name: str = "riccati_compare",
) -> ComparisonVerdict:
    """Check ``rho2 >= rho1`` for two sampled solutions of Riccati inequalities.

    Hypotheses (checked by finite differences on the common grid ``t``):
    ``rho1' + rho1^2 <= rho2' + rho2^2`` up to
    ``hypothesis_factor * (1 + rho1^2 + rho2^2)``, and ``rho_i - 1/t`` small at
    the first sample.  Besides the conclusion, the monotone quantity
    ``(rho2 - rho1) exp(F)`` with ``F`` the running integral of
    ``rho1 + rho2`` must not decrease by more than ``monotone_tol`` relative
    to its largest magnitude.
    """
    t = np.asarray(t, dtype=float)
    r1 = np.asarray(rho1, dtype=float)
    r2 = np.asarray(rho2, dtype=float)
    if t.ndim != 1 or len(t) < 3 or r1.shape != t.shape or r2.shape != t.shape:
        raise ValueError("rho1, rho2 and t must be 1-D arrays of equal length >= 3")
    if np.any(np.diff(t) <= 0) or t[0] <= 0:
        raise ValueError("grid must be positive and strictly increasing")
    lhs = np.gradient(r1, t, edge_order=2) + r1**2
    rhs = np.gradient(r2, t, edge_order=2) + r2**2
    slack = hypothesis_factor * (1.0 + r1**2 + r2**2)
    gap = lhs - rhs - slack
    if np.any(gap > 0):
        i = int(np.argmax(gap))
        raise HypothesisViolated(name, f"rho1'+rho1^2 exceeds rho2'+rho2^2 by {lhs[i] - rhs[i]:.3g} at t={t[i]:.6g}", float(gap[i]), float(t[i]))
    for label, r in (("rho1", r1), ("rho2", r2)):
        dev = abs(r[0] - 1.0 / t[0])
        if dev > asymptotic_tol:
            raise HypothesisViolated(name, f"{label} - 1/t = {dev:.3g} at t={t[0]:.3g}", dev, float(t[0]))

    excess = np.array([_excess_le(a, b, rtol) for a, b in zip(r1, r2)])
    conclusion = _verdict(f"{name}:rho2>=rho1", t, excess, atol, "")

    F = integrate.cumulative_simpson(r1 + r2, x=t, initial=0.0)
    Q = (r2 - r1) * np.exp(F - F.max())
    scale = float(np.max(np.abs(Q)))
    drops = np.maximum(0.0, -(np.diff(Q))) / scale if scale > 0 else np.zeros(len(t) - 1)
    monotone = _verdict(f"{name}:monotone", t[1:], drops, monotone_tol, "")
    return _combine(name, [conclusion, monotone], atol, "Riccati comparison principle")


# -- Hessian and mean comparison ---------------------------------------------


def _states_in_domain(trace: FlowTrace, k: float):
    end = sf.domain_end(k)
    return [s for s in trace.states if s.r < end]


def check_hessian_lower(trace: FlowTrace, K: float) -> ComparisonVerdict:
    """Under radial curvature <= K: ``mu_min(r) >= sn_K'/sn_K (r)``."""
    name = f"hessian_lower(K={K!r})"
    _require_upper_curvature(name, trace, K)
    states = _states_in_domain(trace, K)
    excess = [_excess_le(sf.sn_ratio(K, s.r), s.mu_min) for s in states]
    return _verdict(name, [s.r for s in states], excess, ATOL, _notes(trace.spec, RADIAL_NOTE))


def check_hessian_upper(trace: FlowTrace, k: float) -> ComparisonVerdict:
    """Under radial curvature >= k: ``mu_max(r) <= sn_k'/sn_k (r)``."""
    name = f"hessian_upper(k={k!r})"
    _require_lower_curvature(name, trace, k)
    states = _states_in_domain(trace, k)
    excess = [_excess_le(s.mu_max, sf.sn_ratio(k, s.r)) for s in states]
    return _verdict(name, [s.r for s in states], excess, ATOL, _notes(trace.spec, RADIAL_NOTE))


def check_mean(trace: FlowTrace, k: float, n: int | None = None) -> ComparisonVerdict:
    """Under ``Ric(dr,dr) >= (n-1)k``: ``H(r) <= (n-1) sn_k'/sn_k (r)``."""
    n = n or trace.spec.n
    name = f"mean(k={k!r})"
    _require_ricci(name, trace.spec, trace.theta, [s.r for s in trace.states], k)
    states = _states_in_domain(trace, k)
    excess = [_excess_le(s.H, sf.model_mean_curvature(n, k, s.r)) for s in states]
    return _verdict(name, [s.r for s in states], excess, ATOL, _notes(trace.spec, "Ricci hypothesis along the ray"))


def constant_curvature_check(trace: FlowTrace, k: float, tol: float = ATOL, r_range: tuple[float, float] | None = None) -> ComparisonVerdict:
    """``g(r) / sn_k(r)^2`` must equal the round metric of the direction sphere.

    The violation at a sample is the max-norm deviation relative to the
    max-norm of the round metric.
    """
    name = f"constant_curvature(k={k!r})"
    gS = sphere_metric(trace.theta)
    lo, hi = r_range or (0.0, math.inf)
    states = [s for s in _states_in_domain(trace, k) if lo <= s.r <= hi]
    excess = [float(np.max(np.abs(s.g / sf.sn(k, s.r) ** 2 - gS)) / np.max(np.abs(gS))) for s in states]
    curv = _curvature_samples(trace)
    measured = f"measured radial curvature in [{min(c[1] for c in curv):.6g}, {max(c[2] for c in curv):.6g}]"
    claimed = "space form" if isinstance(trace.spec.kind, SpaceForm) else "claimed constant curvature"
    return _verdict(name, [s.r for s in states], excess, tol, _notes(trace.spec, claimed, measured))


# -- applications ------------------------------------------------------------


def default_directions(n: int) -> list[DirectionChartPoint]:
    """A few directions spread over the sphere, including one in the south chart."""
    m = n - 1
    base = [0.0] * m
    pts = [
        DirectionChartPoint(tuple(base)),
        DirectionChartPoint(tuple([0.5] + [0.0] * (m - 1))),
        DirectionChartPoint(tuple([-1.3, 0.7, 0.2][:m] + [0.1] * max(0, m - 3))),
        DirectionChartPoint(tuple([0.25] * m), pole="south"),
    ]
    return pts


def _traces(spec, directions, epsilon, r_max, grid, control):
    directions = list(directions) if directions is not None else default_directions(spec.n)
    return integrate_lanes(spec, directions, epsilon, r_max, grid, control)


def bonnet_myers_scan(
    spec: ManifoldSpec,
    k: float,
    directions: Sequence[DirectionChartPoint] | None = None,
    epsilon: float = DEFAULT_EPSILON,
    grid=401,
    control: StepControl | None = None,
) -> ComparisonVerdict:
    """Degeneration must occur by ``pi/sqrt(k)`` when ``Ric >= (n-1)k > 0``.

    Each direction is integrated to ``pi/sqrt(k) + OVERSHOOT``; its first
    conjugate radius must satisfy ``r0 <= pi/sqrt(k) + EVENT_TOL`` and the mean
    curvature must stay below ``(n-1) sqrt(k) cot(sqrt(k) r)``.
    """
    if not k > 0:
        raise ValueError(f"Bonnet-Myers needs k > 0, got {k!r}")
    name = f"bonnet_myers(k={k!r})"
    end = sf.domain_end(k)
    traces = _traces(spec, directions, epsilon, end + OVERSHOOT, grid, control)
    parts = []
    for tr in traces:
        _require_ricci(name, spec, tr.theta, [s.r for s in tr.states], k)
        if tr.conjugate is None:
            ev = ComparisonVerdict("event", False, math.inf, tr.terminal.r, EVENT_TOL, "no degeneration")
        else:
            excess = max(0.0, tr.conjugate.r0 - end)
            ev = ComparisonVerdict("event", excess <= EVENT_TOL, excess, tr.conjugate.r0, EVENT_TOL, "")
        parts += [ev, check_mean(tr, k)]
    r0s = ", ".join(f"{tr.conjugate.r0:.9g}" if tr.conjugate else "none" for tr in traces)
    return _combine(name, parts, EVENT_TOL, _notes(spec, f"diameter bound pi/sqrt(k)={end:.9g}", f"r0 per direction: {r0s}"))


def synge_check(
    spec: ManifoldSpec,
    k: float,
    directions: Sequence[DirectionChartPoint] | None = None,
    epsilon: float = DEFAULT_EPSILON,
    grid=401,
    control: StepControl | None = None,
) -> ComparisonVerdict:
    """Under radial curvature >= k > 0, ``mu_max <= sn_k'/sn_k`` and the ray
    stops minimizing by ``pi/sqrt(k)``.

    Stopping is witnessed by ``mu_max`` falling below ``DIVERGENCE_THRESHOLD``
    before ``pi/sqrt(k) + EVENT_TOL``; if an earlier conjugate point halts the
    ray first (anisotropic curvature), that earlier event is accepted and noted.
    """
    if not k > 0:
        raise ValueError(f"Synge's lemma needs k > 0, got {k!r}")
    name = f"synge(k={k!r})"
    end = sf.domain_end(k)
    control = replace(control or StepControl(), lambda_halt=0.0)
    traces = _traces(spec, directions, epsilon, end + OVERSHOOT, grid, control)
    parts = []
    witnesses = []
    for tr in traces:
        parts.append(check_hessian_upper(tr, k))
        _require_lower_curvature(name, tr, k)
        term = tr.terminal
        if term.mu_max < DIVERGENCE_THRESHOLD and term.r <= end + EVENT_TOL:
            parts.append(ComparisonVerdict("divergence", True, 0.0, term.r, EVENT_TOL, ""))
            witnesses.append(f"mu_max={term.mu_max:.3g} at r={term.r:.9g}")
        elif tr.conjugate is not None and tr.conjugate.r0 <= end + EVENT_TOL:
            parts.append(ComparisonVerdict("divergence", True, 0.0, tr.conjugate.r0, EVENT_TOL, ""))
            witnesses.append(f"earlier conjugate point r0={tr.conjugate.r0:.9g}")
        else:
            parts.append(ComparisonVerdict("divergence", False, math.inf, term.r, EVENT_TOL, ""))
            witnesses.append(f"no divergence up to r={term.r:.9g}")
    return _combine(name, parts, ATOL, _notes(spec, RADIAL_NOTE, "; ".join(witnesses)))


def cartan_hadamard_check(
    spec: ManifoldSpec,
    r_max: float,
    directions: Sequence[DirectionChartPoint] | None = None,
    epsilon: float = DEFAULT_EPSILON,
    grid=401,
    control: StepControl | None = None,
    lambda_tol: float = 1e-6,
) -> ComparisonVerdict:
    """Nonpositive radial curvature: no conjugate point up to ``r_max``,
    ``mu_min >= 1/r`` and ``lambda_min`` nondecreasing."""
    name = "cartan_hadamard"
    traces = _traces(spec, directions, epsilon, r_max, grid, control)
    parts = []
    for tr in traces:
        _require_upper_curvature(name, tr, 0.0)
        if tr.conjugate is not None:
            parts.append(ComparisonVerdict("no_event", False, math.inf, tr.conjugate.r0, EVENT_TOL, ""))
        else:
            parts.append(ComparisonVerdict("no_event", True, 0.0, tr.terminal.r, EVENT_TOL, ""))
        parts.append(check_hessian_lower(tr, 0.0))
        r = tr.radii
        lam = tr.column("lambda_min")
        slope = np.diff(lam) / np.diff(r)
        parts.append(_verdict("lambda_min_nondecreasing", r[1:], np.maximum(0.0, -slope), lambda_tol, ""))
    return _combine(name, parts, ATOL, _notes(spec, RADIAL_NOTE, f"r_max={r_max!r}"))


def identity_check(
    trace: FlowTrace,
    dlog_tol: float = 1e-4,
    asym_tol: float = 1e-8,
    limit_tol: float = 1e-3,
) -> ComparisonVerdict:
    """Structural identities along one trace.

    ``d/dr log G = H``, symmetry of ``h = S g``, and the start-up limit
    ``r H / (n-1) -> 1`` read at ``r = 10 eps``.
    """
    from .flow import consistency_report, integrate

    rep = consistency_report(trace)
    r10 = 10.0 * trace.epsilon
    try:
        s10 = trace.state_at(r10)
    except KeyError:
        s10 = integrate(trace.spec, trace.theta, trace.epsilon, r10, [r10], trace.control).state_at(r10)
    limit = abs(r10 * s10.H / (trace.spec.n - 1) - 1.0)
    parts = [
        ComparisonVerdict("dlogG_eq_H", rep.dlogG_residual <= dlog_tol, rep.dlogG_residual, rep.dlogG_at_r, dlog_tol),
        ComparisonVerdict("h_symmetric", rep.h_asymmetry <= asym_tol, rep.h_asymmetry, rep.h_asymmetry_at_r, asym_tol),
        ComparisonVerdict("initial_limit", limit <= limit_tol, limit, r10, limit_tol),
    ]
    return _combine("identities", parts, dlog_tol, _notes(trace.spec, f"{rep.points} states"))
