"""Geodesic-ball volumes by direction quadrature, and Bishop-type checks.

``vol(B_r(p))`` is the integral over directions of ``int_0^{tbar} G dt`` with
``tbar = min(r, c(xi))``.  The cut time ``c`` is replaced by the first
conjugate radius of the ray, which is why volume runs are refused for specs
whose ``cut_equals_conjugate`` flag is off.

Quadrature weights are area weights on the unit sphere; each node's density
is divided by ``sqrt(det g_sphere)`` at that node, turning chart Lebesgue
measure into area measure.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from . import spaceform as sf
from .comparison import ATOL, MONOTONE_TOL, ComparisonVerdict, _combine, _excess_le, _notes, _require_ricci, _verdict
from .flow import DEFAULT_EPSILON, StepControl, integrate_lanes
from .manifold import ManifoldSpec, chart_inverse, sphere_metric

CHUNK = 256


class VolumeGateError(ValueError):
    """Volume operations are refused for this spec."""


@dataclass(frozen=True)
class QuadratureScheme:
    n: int
    nodes: tuple
    weights: np.ndarray

    def integrate(self, fn) -> float:
        """Integrate ``fn(unit_vector)`` over the sphere of directions."""
        from .manifold import direction

        return math.fsum(w * fn(direction(th)) for th, w in zip(self.nodes, self.weights))


def build_quadrature(n: int, order: int) -> QuadratureScheme:
    """Product rule on ``S^{n-1}``, ``2 <= n <= 4``.

    n=2: ``order`` equispaced angles.  n=3: Gauss-Legendre in ``cos(polar)``
    times ``order`` equispaced azimuths.  n=4: Gauss-Chebyshev (second kind) in
    the cosine of the first hyperspherical angle, then the n=3 rule.  Nodes in the
    upper hemisphere use the antipodal chart so no node sits near a pole of
    its own chart.
    """
    if not 2 <= n <= 4:
        raise ValueError(f"quadrature supports 2 <= n <= 4, got n={n}")
    if order < 2:
        raise ValueError("order must be >= 2")
    phi = 2.0 * np.pi * (np.arange(order) + 0.5) / order
    if n == 2:
        pts = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        w = np.full(order, 2.0 * np.pi / order)
    else:
        z, wz = np.polynomial.legendre.leggauss(order)
        rho = np.sqrt(1.0 - z**2)
        pts3 = np.array([[rr * math.cos(p), rr * math.sin(p), zz] for zz, rr in zip(z, rho) for p in phi])
        w3 = np.array([wi * 2.0 * np.pi / order for wi in wz for _ in phi])
        if n == 3:
            pts, w = pts3, w3
        else:
            # sin^2(psi) dpsi = sqrt(1 - u^2) du: Gauss-Chebyshev of the second kind
            u, wu = special.roots_chebyu(order)
            psi = np.arccos(u)
            pts = np.array([[*(math.sin(a) * p3), math.cos(a)] for a in psi for p3 in pts3])
            w = np.array([wa * wb for wa in wu for wb in w3])
    nodes = tuple(chart_inverse(p) for p in pts)
    return QuadratureScheme(n, nodes, np.asarray(w))


@dataclass(frozen=True)
class VolumeCurve:
    radii: np.ndarray
    volumes: np.ndarray
    # first conjugate radius per node (inf when none within the run)
    stop_radii: np.ndarray
    # G / sqrt(det g_sphere) per node and radius, zero past the stop radius
    densities: np.ndarray

    def tbar(self, r: float) -> np.ndarray:
        return np.minimum(r, self.stop_radii)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RICCATI_LAB_THREADS", "1")))
    except ValueError:
        return 1


def _radial_integrals(spec, nodes, radii, epsilon, control):
    """Per-node ``int_0^{min(r, r0)} G dt / sqrt(det g_sphere)`` and densities."""
    stub = epsilon**spec.n / spec.n
    chunks = [nodes[i : i + CHUNK] for i in range(0, len(nodes), CHUNK)]

    def run(chunk):
        return integrate_lanes(spec, chunk, epsilon, float(radii[-1]), radii, control)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        traces = [tr for batch in pool.map(run, chunks) for tr in batch]
    I = np.zeros((len(nodes), len(radii)))
    D = np.zeros((len(nodes), len(radii)))
    stops = np.full(len(nodes), math.inf)
    for j, tr in enumerate(traces):
        norm = math.sqrt(np.linalg.det(sphere_metric(tr.theta)))
        by_r = {s.r: s for s in tr.states}
        if tr.conjugate is not None:
            stops[j] = tr.conjugate.r0
        for i, r in enumerate(radii):
            s = by_r.get(float(r))
            if s is not None:
                I[j, i] = stub + s.G_integral / norm
                D[j, i] = s.G / norm
            else:
                I[j, i] = stub + tr.terminal.G_integral / norm
    return I, D, stops


def volume_curve(
    spec: ManifoldSpec,
    radii: Sequence[float],
    scheme: QuadratureScheme,
    epsilon: float = DEFAULT_EPSILON,
    control: StepControl | None = None,
    richardson: bool = True,
) -> VolumeCurve:
    """Ball volumes on an increasing radius grid.

    With ``richardson=True`` the run is repeated from ``epsilon/2`` and the
    O(eps^2) start-up error is extrapolated away.
    """
    if not spec.cut_equals_conjugate:
        raise VolumeGateError("spec is not flagged cut_equals_conjugate; the conjugate-time proxy for the cut time is not justified")
    if spec.n > 4 or spec.n != scheme.n:
        raise VolumeGateError(f"volume runs need n <= 4 and a matching quadrature (n={spec.n}, scheme n={scheme.n})")
    radii = np.asarray(sorted(float(r) for r in radii))
    if radii[0] <= epsilon:
        raise ValueError(f"radii must exceed epsilon={epsilon!r}")
    w = scheme.weights

    def total(I):
        return np.array([math.fsum(w * I[:, i]) for i in range(len(radii))])

    I, D, stops = _radial_integrals(spec, scheme.nodes, radii, epsilon, control)
    vols = total(I)
    if richardson:
        I2, D, stops = _radial_integrals(spec, scheme.nodes, radii, epsilon / 2, control)
        vols = (4.0 * total(I2) - vols) / 3.0
    return VolumeCurve(radii, vols, stops, D)


def ball_volume(spec: ManifoldSpec, r: float, scheme: QuadratureScheme, epsilon: float = DEFAULT_EPSILON, control: StepControl | None = None) -> float:
    return float(volume_curve(spec, [r], scheme, epsilon, control).volumes[0])


def _model_volumes(n, k, radii):
    end = sf.domain_end(k)
    if np.any(radii > end):
        raise ValueError(f"model comparison needs radii <= pi/sqrt(k) = {end!r}")
    return np.array([sf.model_ball_volume(n, k, float(r)) for r in radii])


def _require_ricci_on_curve(name, spec, scheme, curve, k):
    for th, stop in zip(scheme.nodes, curve.stop_radii):
        _require_ricci(name, spec, th, [float(r) for r in curve.radii if r < stop], k)


def bishop_check(
    spec: ManifoldSpec,
    k: float,
    radii: Sequence[float],
    scheme: QuadratureScheme,
    epsilon: float = DEFAULT_EPSILON,
    control: StepControl | None = None,
    curve: VolumeCurve | None = None,
) -> ComparisonVerdict:
    """``vol(B_r) <= vol_k(B_r)`` on the grid, and ``G <= G_k`` at every node."""
    name = f"bishop(k={k!r})"
    curve = curve or volume_curve(spec, radii, scheme, epsilon, control)
    _require_ricci_on_curve(name, spec, scheme, curve, k)
    m = spec.n - 1
    model = _model_volumes(spec.n, k, curve.radii)
    integrated = _verdict("volume", curve.radii, [_excess_le(v, mv) for v, mv in zip(curve.volumes, model)], ATOL, "")
    Gk = np.array([sf.sn(k, float(r)) ** m for r in curve.radii])
    excess = np.array([[_excess_le(d, gk) for d, gk in zip(row, Gk)] for row in curve.densities])
    worst = excess.max(axis=0)
    pointwise = _verdict("density", curve.radii, worst, ATOL, "")
    return _combine(name, [integrated, pointwise], ATOL, _notes(spec, f"{len(scheme.nodes)} quadrature nodes", "cut time replaced by first conjugate radius"))


def bishop_gromov_check(
    spec: ManifoldSpec,
    k: float,
    radii: Sequence[float],
    scheme: QuadratureScheme,
    epsilon: float = DEFAULT_EPSILON,
    control: StepControl | None = None,
    curve: VolumeCurve | None = None,
    small_r_tol: float = 1e-2,
) -> ComparisonVerdict:
    """``vol(B_r) / vol_k(B_r)`` is nonincreasing and tends to 1 as ``r -> 0+``."""
    name = f"bishop_gromov(k={k!r})"
    curve = curve or volume_curve(spec, radii, scheme, epsilon, control)
    _require_ricci_on_curve(name, spec, scheme, curve, k)
    ratio = curve.volumes / _model_volumes(spec.n, k, curve.radii)
    rise = np.maximum(0.0, np.diff(ratio))
    mono = _verdict("nonincreasing", curve.radii[1:], rise, MONOTONE_TOL, "")
    head = min(2, len(ratio))
    limit = _verdict("ratio_to_one", curve.radii[:head], np.abs(ratio[:head] - 1.0), small_r_tol, "")
    return _combine(name, [mono, limit], MONOTONE_TOL, _notes(spec, f"ratio at r={curve.radii[0]:.6g}: {ratio[0]:.12g}"))


def volume_rows(curve: VolumeCurve, n: int, k: float):
    model = _model_volumes(n, k, curve.radii)
    for r, v, mv in zip(curve.radii, curve.volumes, model):
        yield [r, v, mv, v / mv]


def write_volume_csv(curve: VolumeCurve, n: int, k: float, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "volume", "model_volume", "ratio"])
        for row in volume_rows(curve, n, k):
            w.writerow(["%.17g" % x for x in row])
