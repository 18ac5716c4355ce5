"""Independent reference values for the test-suite.

Nothing here imports the flow integrator or :mod:`riccati_lab.spaceform`.
``sn_k`` is evaluated from its single power series

    sn_k(t) = sum_j (-k)**j t**(2j+1) / (2j+1)!

which is valid for every real ``k``; the truncation error is bounded by the
first omitted term times a geometric tail factor once terms decrease.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OracleResult:
    name: str
    value: float
    method: str
    accuracy: float


def _series(coeff_of, x2: float, start_term: float, tol: float = 1e-18, max_terms: int = 400) -> tuple[float, float]:
    """Sum ``a_0 + a_1 + ...`` with ``a_{j+1} = a_j * coeff_of(j) * x2``.

    Returns ``(value, error_bound)``.  The bound is ``|a_J| / (1 - q)`` where
    ``q < 1`` bounds every later ratio ``|a_{j+1}/a_j|``.
    """
    terms = [start_term]
    a = start_term
    for j in range(max_terms):
        ratio = coeff_of(j) * x2
        a = a * ratio
        terms.append(a)
        nxt = abs(coeff_of(j + 1) * x2)
        if nxt < 0.5 and abs(a) <= tol * max(1.0, abs(math.fsum(terms))):
            value = math.fsum(terms)
            return value, abs(a) * nxt / (1.0 - nxt) + 4e-16 * max(abs(t) for t in terms) * len(terms)
    raise ArithmeticError("power series did not converge")


def series_sn(k: float, t: float) -> tuple[float, float]:
    """``sn_k(t)`` and an error bound, from the odd power series."""
    return _series(lambda j: -k / ((2 * j + 2) * (2 * j + 3)), t * t, t)


def series_sn_prime(k: float, t: float) -> tuple[float, float]:
    return _series(lambda j: -k / ((2 * j + 1) * (2 * j + 2)), t * t, 1.0)


def series_sn_power_integral(k: float, m: int, r: float, nterms: int = 120) -> float:
    """``int_0^r sn_k(t)**m dt`` by Cauchy products of coefficient lists."""
    base = [0.0] * nterms
    c = 1.0
    for j in range(nterms):
        deg = 2 * j + 1
        if deg >= nterms:
            break
        base[deg] = c
        c *= -k / ((deg + 1) * (deg + 2))
    poly = [1.0] + [0.0] * (nterms - 1)
    for _ in range(m):
        out = [0.0] * nterms
        for i, a in enumerate(poly):
            if a == 0.0:
                continue
            for j, b in enumerate(base[: nterms - i]):
                if b != 0.0:
                    out[i + j] += a * b
        poly = out
    return math.fsum(a * r ** (d + 1) / (d + 1) for d, a in enumerate(poly) if a != 0.0)


def unit_sphere_measure(n: int) -> float:
    # |S^{n-1}| by the recursion |S^{n-1}| = 2 pi / (n-2) |S^{n-3}|
    if n == 2:
        return 2.0 * math.pi
    if n == 3:
        return 4.0 * math.pi
    return 2.0 * math.pi / (n - 2) * unit_sphere_measure(n - 2)


def closed_form_space_form(n: int, k: float, r: float) -> dict[str, float]:
    """Reference scalars of the radius-``r`` geodesic sphere in the space form."""
    end = math.pi / math.sqrt(k) if k > 0 else math.inf
    if not (0.0 < r < end):
        raise ValueError(f"r={r!r} outside (0, {end!r})")
    s, _ = series_sn(k, r)
    ds, _ = series_sn_prime(k, r)
    ratio = ds / s
    return {
        "g_scale": s * s,
        "S_scale": ratio,
        "H": (n - 1) * ratio,
        "G_scale": s ** (n - 1),
        "volume": unit_sphere_measure(n) * series_sn_power_integral(k, n - 1, r),
    }


def _stencil_weights(offsets):
    """First-derivative weights at offset 0 for the given sample offsets
    (solves the Vandermonde moment system, one row per power)."""
    k = offsets.shape[-1]
    powers = np.arange(k)[:, None]
    V = offsets[..., None, :] ** powers
    rhs = np.zeros(k)
    rhs[1] = 1.0
    return np.linalg.solve(V, np.broadcast_to(rhs[:, None], V.shape[:-1] + (1,)))[..., 0]


def finite_difference_riccati_residual(t, rho, k: float) -> float:
    """Max over interior samples of ``|rho' + rho**2 + k|`` by central differences.

    Five-point central stencils (fourth order, valid on non-uniform grids),
    so the two samples at each end serve only as neighbours; with fewer than
    five samples a three-point stencil is used instead.
    """
    t = np.asarray(t, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if len(t) < 3:
        raise ValueError("need at least three samples")
    width = 2 if len(t) >= 5 else 1
    idx = np.arange(width, len(t) - width)
    cols = idx[:, None] + np.arange(-width, width + 1)[None, :]
    offsets = t[cols] - t[idx][:, None]
    scale = np.max(np.abs(offsets), axis=1, keepdims=True)
    w = _stencil_weights(offsets / scale) / scale
    d = np.sum(w * rho[cols], axis=1)
    return float(np.max(np.abs(d + rho[idx] ** 2 + k)))


def oracle_table() -> list[OracleResult]:
    """Every derived reference number the test-suite freezes."""
    rows: list[OracleResult] = []

    def add(name, value, method, acc):
        rows.append(OracleResult(name, value, method, acc))

    v, e = series_sn(-1.0, 1.0)
    add("sn(-1,1)", v, "odd power series of sinh", e)
    c, ec = series_sn_prime(1.0, 3.0)
    s, es = series_sn(1.0, 3.0)
    add("cot(3.0)", c / s, "ratio of cos/sin series", (ec + abs(c / s) * es) / abs(s))
    add("model_mean_curvature(3,1,3.0)", 2.0 * c / s, "2*cot(3) from series", 2.0 * (ec + abs(c / s) * es) / abs(s))
    ch, _ = series_sn_prime(-1.0, 1.0)
    sh, _ = series_sn(-1.0, 1.0)
    add("coth(1)", ch / sh, "cosh/sinh series", 1e-15)
    add("ball(2,0,1)", unit_sphere_measure(2) * series_sn_power_integral(0.0, 1, 1.0), "term-wise integrated series", 1e-15)
    add("ball(2,1,pi)", unit_sphere_measure(2) * series_sn_power_integral(1.0, 1, math.pi), "term-wise integrated series", 1e-13)
    add("ball(3,0,1)", unit_sphere_measure(3) * series_sn_power_integral(0.0, 2, 1.0), "term-wise integrated series", 1e-15)
    add("ball(2,1,pi/2)", unit_sphere_measure(2) * series_sn_power_integral(1.0, 1, math.pi / 2), "term-wise integrated series", 1e-14)
    for r in (0.5, 1.0, 2.0, 3.0, math.pi):
        add(f"ball(2,1,{r:.17g})", unit_sphere_measure(2) * series_sn_power_integral(1.0, 1, r), "term-wise integrated series", 1e-13)
    sinr, _ = series_sn(1.0, 1.0)
    add("sin(1)", sinr, "odd power series", 1e-16)
    add("direction(n=2,theta=1)", (2.0 * 1.0) / (1.0 + 1.0), "inverse stereographic first coordinate", 0.0)
    add("-f''/f poly_cubic r=1", -6.0 / (1.0 + 1.0), "exact rational", 0.0)
    return rows


def dump_oracles(stream: io.TextIOBase | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "value", "method", "accuracy"])
    for row in oracle_table():
        w.writerow([row.name, "%.17g" % row.value, row.method, "%.3g" % row.accuracy])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text
