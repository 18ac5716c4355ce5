"""Radial flow of the geodesic-sphere metric and shape operator.

Along the ray ``r -> exp_p(r xi(theta))`` the chart components obey

    d/dr g = 2 S g,        d/dr S = -S S - R,

with ``g ~ r^2 g_sphere`` and ``S ~ Id / r`` as ``r -> 0+``.  The system is
started at a small radius ``eps`` from those leading-order data and
integrated with an embedded Dormand-Prince 5(4) pair.  Several directions can
be integrated in lock-step ("lanes") so volume quadrature stays cheap; a
single trace is the one-lane case.

Internally ``q = g / eps^2`` is integrated so the metric block starts at
O(1) whatever ``eps`` is, plus ``W = int_eps^r sqrt(det q) dt`` which the
volume code turns into the radial integral of the density.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .manifold import (
    CustomProfile,
    DirectionChartPoint,
    ManifoldSpec,
    radial_curvature,
    sphere_metric,
)

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-3
TAIL_LENGTH = 16

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_LOW


class FlowError(RuntimeError):
    """Numerical failure of the flow; ``last_r`` is the last good radius."""

    def __init__(self, message: str, last_r: float):
        super().__init__(f"{message} (last good r = {last_r:.17g})")
        self.last_r = last_r


class StepSizeUnderflow(FlowError):
    pass


@dataclass(frozen=True)
class StepControl:
    rtol: float = 1e-9
    atol: float = 1e-12
    # step <= step_cap / (1 + |S|): resolves the 1/r and 1/(r0 - r) layers
    step_cap: float = 0.25
    s_halt: float = 1e8
    lambda_halt: float = 1e-10
    max_steps: int = 2_000_000
    min_step: float = 1e-15


@dataclass(frozen=True)
class RadialState:
    r: float
    g: np.ndarray
    S: np.ndarray
    G: float
    H: float
    mu_min: float
    mu_max: float
    lambda_min: float
    lambda_max: float
    # int_eps^r G dt along this ray
    G_integral: float = 0.0

    @property
    def h(self) -> np.ndarray:
        """Second fundamental form ``h_ab = S_a^c g_cb``."""
        return self.S @ self.g


@dataclass(frozen=True)
class ConjugateEvent:
    r0: float
    estimator_error: float
    exponent: float


@dataclass(frozen=True)
class FlowTrace:
    spec: ManifoldSpec
    theta: DirectionChartPoint
    epsilon: float
    states: tuple
    terminal: RadialState
    halt_reason: str
    tail: tuple = ()
    control: StepControl = field(default_factory=StepControl)
    conjugate: ConjugateEvent | None = None

    @property
    def radii(self) -> np.ndarray:
        return np.array([s.r for s in self.states])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.states])

    def state_at(self, r: float) -> RadialState:
        for s in self.states:
            if s.r == r:
                return s
        raise KeyError(f"no state at r={r!r}")


# -- curvature for lanes -----------------------------------------------------


def _lane_curvature(spec: ManifoldSpec, thetas: Sequence[DirectionChartPoint]):
    """Return ``curv(r, idx) -> (len(idx), m, m)`` for lane indices ``idx``."""
    m = spec.n - 1
    eye = np.eye(m)
    if spec.is_isotropic:

        def curv(r, idx):
            c = np.broadcast_to(spec.isotropic_curvature(r), (len(idx),))
            return c[:, None, None] * eye

        return curv

    provider = spec.kind.provider

    def curv(r, idx):
        rr = np.broadcast_to(np.asarray(r, float), (len(idx),))
        return np.stack([np.asarray(provider(thetas[i], float(rr[j])), float) for j, i in enumerate(idx)])

    return curv


def _rhs(r, y, idx, curv, m):
    mm = m * m
    q = y[:, :mm].reshape(-1, m, m)
    S = y[:, mm : 2 * mm].reshape(-1, m, m)
    dq = 2.0 * S @ q
    dS = -S @ S - curv(r, idx)
    dW = np.sqrt(np.clip(np.linalg.det(q), 0.0, None))
    return np.concatenate([dq.reshape(-1, mm), dS.reshape(-1, mm), dW[:, None]], axis=1)


def _make_state(r: float, y: np.ndarray, eps: float, m: int) -> RadialState:
    mm = m * m
    q = y[:mm].reshape(m, m)
    S = y[mm : 2 * mm].reshape(m, m).copy()
    g = eps * eps * q
    det = float(np.linalg.det(q))
    G = eps**m * math.sqrt(det) if det > 0 else 0.0
    mu = np.sort(np.linalg.eigvals(S).real)
    lam = np.linalg.eigvalsh(0.5 * (g + g.T))
    return RadialState(
        r=float(r),
        g=g,
        S=S,
        G=G,
        H=float(np.trace(S)),
        mu_min=float(mu[0]),
        mu_max=float(mu[-1]),
        lambda_min=float(lam[0]),
        lambda_max=float(lam[-1]),
        G_integral=eps**m * float(y[2 * mm]),
    )


# -- public operations -------------------------------------------------------


def initialize(spec: ManifoldSpec, theta: DirectionChartPoint, epsilon: float = DEFAULT_EPSILON) -> RadialState:
    """Leading-order data at radius ``epsilon``: ``g = eps^2 g_sphere``, ``S = Id/eps``."""
    if not (0.0 < epsilon <= 1e-2):
        raise ValueError(f"epsilon must lie in (0, 1e-2], got {epsilon!r}")
    if theta.dim != spec.n - 1:
        raise ValueError(f"direction chart point has {theta.dim} coordinates, expected {spec.n - 1}")
    m = spec.n - 1
    y = np.concatenate([sphere_metric(theta).ravel(), (np.eye(m) / epsilon).ravel(), [0.0]])
    return _make_state(epsilon, y, epsilon, m)


def _output_grid(epsilon: float, r_max: float, grid) -> np.ndarray:
    if grid is None:
        grid = 201
    if isinstance(grid, (int, np.integer)):
        pts = np.linspace(epsilon, r_max, int(grid))
    else:
        pts = np.asarray(grid, dtype=float)
    pts = np.unique(np.concatenate([[epsilon], pts[(pts > epsilon) & (pts <= r_max)]]))
    return pts


@dataclass
class _Lane:
    states: list
    tail: deque
    lam_ref: float
    halt_reason: str = "r_max"
    terminal_y: np.ndarray | None = None
    terminal_r: float = 0.0


def integrate_lanes(
    spec: ManifoldSpec,
    thetas: Sequence[DirectionChartPoint],
    epsilon: float = DEFAULT_EPSILON,
    r_max: float = 1.0,
    grid=None,
    control: StepControl | None = None,
) -> list[FlowTrace]:
    """Integrate several directions in lock-step with a shared step sequence."""
    control = control or StepControl()
    if not epsilon < r_max:
        raise ValueError(f"need epsilon < r_max, got {epsilon!r} >= {r_max!r}")
    if r_max > spec.working_end:
        raise ValueError(f"r_max={r_max!r} beyond the working interval end {spec.working_end!r}")
    m = spec.n - 1
    mm = m * m
    thetas = list(thetas)
    for th in thetas:
        initialize(spec, th, epsilon)
    if isinstance(spec.kind, CustomProfile):
        for th in thetas:
            radial_curvature(spec, th, epsilon)
    stops = _output_grid(epsilon, r_max, grid)
    curv = _lane_curvature(spec, thetas)
    B = len(thetas)
    y = np.stack(
        [np.concatenate([sphere_metric(th).ravel(), (np.eye(m) / epsilon).ravel(), [0.0]]) for th in thetas]
    )
    lanes = []
    for b in range(B):
        st = _make_state(epsilon, y[b], epsilon, m)
        lanes.append(_Lane(states=[st], tail=deque([(epsilon, st.G, st.H)], maxlen=TAIL_LENGTH), lam_ref=st.lambda_min))
    active = np.arange(B)
    r = epsilon
    stop_i = 1
    h = min(control.step_cap / (1.0 + np.max(np.linalg.norm(y[:, mm : 2 * mm], axis=1))), 1e-2 * epsilon)
    k1 = _rhs(r, y, active, curv, m)
    steps = 0
    while len(active) and stop_i < len(stops):
        steps += 1
        if steps > control.max_steps:
            raise FlowError("step budget exhausted", r)
        s_norm = np.max(np.linalg.norm(y[:, mm : 2 * mm], axis=1))
        h = min(h, control.step_cap / (1.0 + s_norm))
        target = stops[stop_i]
        landing = False
        if r + h >= target - 1e-14 * max(1.0, abs(target)):
            h = target - r
            landing = True
        if h < control.min_step * max(1.0, r):
            raise StepSizeUnderflow("step size underflow", r)
        ks = [k1]
        for s in range(1, 7):
            ys = y + h * sum(_A[s][j] * ks[j] for j in range(s) if _A[s][j] != 0.0)
            ks.append(_rhs(r + _C[s] * h, ys, active, curv, m))
        y_new = y + h * sum(_B[j] * ks[j] for j in range(7) if _B[j] != 0.0)
        err_vec = h * sum(_E[j] * ks[j] for j in range(7))
        scale = control.atol + control.rtol * np.maximum(np.abs(y), np.abs(y_new))
        with np.errstate(invalid="ignore"):
            err = float(np.max(np.abs(err_vec) / scale))
        if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
            h *= 0.25
            continue
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            continue
        # accepted
        r = target if landing else r + h
        y = y_new
        k1 = ks[6]
        if landing:
            stop_i += 1
        q = y[:, :mm].reshape(-1, m, m)
        det = np.linalg.det(q)
        G = epsilon**m * np.sqrt(np.clip(det, 0.0, None))
        H = np.trace(y[:, mm : 2 * mm].reshape(-1, m, m), axis1=1, axis2=2)
        lam = epsilon**2 * np.linalg.eigvalsh(0.5 * (q + q.transpose(0, 2, 1)))[:, 0]
        s_fro = np.linalg.norm(y[:, mm : 2 * mm], axis=1)
        keep = []
        for j, b in enumerate(active):
            lane = lanes[b]
            lane.tail.append((r, float(G[j]), float(H[j])))
            if r <= 1.0:
                lane.lam_ref = float(lam[j])
            degenerate = (
                det[j] <= 0.0
                or s_fro[j] > control.s_halt
                or (control.lambda_halt > 0 and lam[j] < control.lambda_halt * lane.lam_ref)
            )
            if landing and not degenerate:
                lane.states.append(_make_state(r, y[j], epsilon, m))
            if degenerate:
                lane.halt_reason = "degenerate"
                lane.terminal_y = y[j].copy()
                lane.terminal_r = r
            else:
                keep.append(j)
        if len(keep) < len(active):
            active = active[keep]
            y = y[keep]
            k1 = k1[keep]
        fac = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
        h = h * fac
    traces = []
    for b, lane in enumerate(lanes):
        if lane.terminal_y is None:
            j = int(np.searchsorted(active, b))
            lane.terminal_y = y[j].copy()
            lane.terminal_r = r
        terminal = _make_state(lane.terminal_r, lane.terminal_y, epsilon, m)
        tr = FlowTrace(
            spec=spec,
            theta=thetas[b],
            epsilon=epsilon,
            states=tuple(lane.states),
            terminal=terminal,
            halt_reason=lane.halt_reason,
            tail=tuple(lane.tail),
            control=control,
        )
        traces.append(replace(tr, conjugate=detect_conjugate(tr)))
    log.debug("integrated %d lanes to r=%g in %d steps", B, r, steps)
    return traces


def integrate(
    spec: ManifoldSpec,
    theta: DirectionChartPoint,
    epsilon: float = DEFAULT_EPSILON,
    r_max: float = 1.0,
    grid=None,
    control: StepControl | None = None,
) -> FlowTrace:
    """Integrate one ray from ``epsilon`` to ``r_max`` (or its first degeneration).

    ``grid`` is either a number of equally spaced output radii or an explicit
    sequence; the integrator lands exactly on each output radius.
    """
    return integrate_lanes(spec, [theta], epsilon, r_max, grid, control)[0]


def detect_conjugate(trace: FlowTrace) -> ConjugateEvent | None:
    """Estimate the first conjugate radius from the degeneration of ``G``.

    ``G**(1/m)`` is fitted by a straight line over the last accepted steps
    (``m = n - 1``, or 1 for anisotropic custom profiles) and extrapolated to
    its zero.  The fit is repeated on the most recent half of those steps, and
    compared with the mean-curvature estimate ``r0 ~ r + m / (-H)``; the
    spread plus a tolerance-proportional term is reported as the error.
    """
    if trace.halt_reason != "degenerate":
        return None
    spec = trace.spec
    m = 1 if isinstance(spec.kind, CustomProfile) and spec.kind.anisotropic else spec.n - 1
    tail = [t for t in trace.tail if t[1] > 0.0]
    if len(tail) < 4:
        return ConjugateEvent(trace.terminal.r, math.inf, m)
    rs = np.array([t[0] for t in tail])
    ys = np.array([t[1] for t in tail]) ** (1.0 / m)
    r_last = rs[-1]

    def root(sel):
        x = rs[sel] - r_last
        slope, icpt = np.polyfit(x, ys[sel], 1)
        if slope >= 0:
            return math.inf
        return r_last - icpt / slope

    r_all = root(slice(None))
    r_recent = root(slice(len(rs) // 2, None))
    H_last = tail[-1][2]
    r_mean = r_last + m / (-H_last) if H_last < 0 else math.inf
    r0 = r_recent
    err = abs(r_all - r_recent) + abs(r_mean - r_recent) + 10.0 * trace.control.rtol * max(1.0, r0)
    if not math.isfinite(r0):
        r0, err = float(trace.terminal.r), math.inf
    if r0 < r_last:
        r0 = float(r_last)
    return ConjugateEvent(float(r0), float(err), float(m))


@dataclass(frozen=True)
class ConsistencyReport:
    dlogG_residual: float
    dlogG_at_r: float
    h_asymmetry: float
    h_asymmetry_at_r: float
    points: int


def _probe_log_density(spec, theta, states, eta=4e-3):
    """Forward derivative of ``log G`` at each state by short RK4 probes.

    The probe step ``eta / sigma`` scales with the local curvature scale
    ``sigma = max(1/r, |S|)`` so the stencil stays resolved on both the
    ``1/r`` layer at the origin and the layer before a conjugate point.
    """
    m = spec.n - 1
    mm = m * m
    curv = _lane_curvature(spec, [theta])
    idx = np.zeros(len(states), dtype=int)
    r0 = np.array([s.r for s in states])
    sigma = np.array([max(1.0, 1.0 / s.r, float(np.linalg.norm(s.S))) for s in states])
    hs = eta / sigma
    y = np.stack([np.concatenate([s.g.ravel(), s.S.ravel(), [0.0]]) for s in states])

    def f(rr, yy):
        return _rhs(rr, yy, idx, curv, m)

    def logG(yy):
        q = yy[:, :mm].reshape(-1, m, m)
        return 0.5 * np.linalg.slogdet(q)[1]

    vals = [logG(y)]
    rr = r0.copy()
    for _ in range(4):
        hh = hs[:, None]
        k1 = f(rr, y)
        k2 = f(rr + hs / 2, y + hh / 2 * k1)
        k3 = f(rr + hs / 2, y + hh / 2 * k2)
        k4 = f(rr + hs, y + hh * k3)
        y = y + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        rr = rr + hs
        vals.append(logG(y))
    f0, f1, f2, f3, f4 = vals
    return (-25 * f0 + 48 * f1 - 36 * f2 + 16 * f3 - 3 * f4) / (12 * hs), hs


def consistency_report(trace: FlowTrace) -> ConsistencyReport:
    """Residuals of ``d/dr log G = H`` and of the symmetry of ``h = S g``."""
    states = [s for s in trace.states]
    if len(states) < 3:
        raise ValueError("consistency report needs at least three states")
    deriv, hs = _probe_log_density(trace.spec, trace.theta, states)
    H = np.array([s.H for s in states])
    res = np.abs(deriv - H)
    i = int(np.argmax(res))
    asym = np.array([float(np.max(np.abs(s.h - s.h.T))) for s in states])
    j = int(np.argmax(asym))
    return ConsistencyReport(float(res[i]), states[i].r, float(asym[j]), states[j].r, len(states))


def richardson_initialization(
    spec: ManifoldSpec,
    theta: DirectionChartPoint,
    epsilon: float,
    r: float,
    control: StepControl | None = None,
) -> tuple[np.ndarray, float]:
    """Extrapolate ``g(r)`` from runs started at ``eps`` and ``eps/2``.

    The leading-order start carries an O(eps^2) error, so
    ``(4 g_{eps/2} - g_eps) / 3`` removes it; the returned scalar is the
    estimated initialization error of the ``eps`` run (max-norm, relative).
    """
    a = integrate(spec, theta, epsilon, r, [r], control).state_at(r).g
    b = integrate(spec, theta, epsilon / 2, r, [r], control).state_at(r).g
    extrap = (4.0 * b - a) / 3.0
    return extrap, float(np.max(np.abs(a - extrap)) / np.max(np.abs(extrap)))


# -- export ------------------------------------------------------------------


def trace_header(m: int) -> list[str]:
    cols = ["r", "G", "H", "mu_min", "mu_max", "lambda_min", "lambda_max"]
    cols += [f"g_{a}{b}" for a in range(1, m + 1) for b in range(1, m + 1)]
    cols += [f"S_{a}{b}" for a in range(1, m + 1) for b in range(1, m + 1)]
    return cols


def trace_rows(trace: FlowTrace):
    for s in trace.states:
        yield [s.r, s.G, s.H, s.mu_min, s.mu_max, s.lambda_min, s.lambda_max, *s.g.ravel(), *s.S.ravel()]


def write_trace_csv(trace: FlowTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(trace.spec.n - 1))
        for row in trace_rows(trace):
            w.writerow(["%.17g" % v for v in row])
