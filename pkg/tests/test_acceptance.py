"""Acceptance criteria, one test (or parametrised family) per criterion.

Tolerances are the stated ones; each criterion prints a PASS/FAIL line in
the terminal summary (see conftest.py).
"""

import functools
import json
import math
import time

import numpy as np
import pytest

from frozen_oracles import FROZEN, ball_2_1
from riccati_lab import spaceform as sf
from riccati_lab.cli import main
from riccati_lab.comparison import (
    bonnet_myers_scan,
    cartan_hadamard_check,
    check_hessian_lower,
    check_hessian_upper,
    check_mean,
    constant_curvature_check,
    default_directions,
    riccati_compare,
    two_sided_grid,
)
from riccati_lab.flow import consistency_report, integrate_lanes
from riccati_lab.manifold import space_form, sphere_metric, warped
from riccati_lab.volume import bishop_check, bishop_gromov_check, build_quadrature, volume_curve

EPS = 1e-3
PI = math.pi
criterion = pytest.mark.acceptance


@functools.lru_cache(maxsize=None)
def traces(kind: str, n: int, param, r_max: float, grid: int = 401):
    spec = space_form(n, param) if kind == "space_form" else warped(n, param)
    return tuple(integrate_lanes(spec, default_directions(n), EPS, r_max, grid))


C5_GRID = tuple(sorted(set(np.linspace(EPS, PI - 1e-3, 400).tolist() + [3.0])))

# every (kind, n, param, r_max[, grid]) used by criteria 1-9; criterion 10 revisits them
def _c1_rmax(k):
    return min(3.0, 0.95 * sf.domain_end(k))


RUNS = (
    [("space_form", n, k, _c1_rmax(k)) for k in (-1.0, 0.0, 1.0) for n in (2, 3)]
    + [("space_form", n, 1.0, PI + 0.05) for n in (2, 3)]
    + [("space_form", n, 4.0, PI / 2 + 0.05) for n in (2, 3)]
    + [("space_form", n, k, 10.0) for k in (-1.0, 0.0) for n in (2, 3)]
    + [("warped", 3, "poly_cubic", 5.0), ("warped", 3, "poly_cubic", 10.0)]
    + [("space_form", 3, 1.0, PI - 1e-3, C5_GRID)]
)


# -- 1 -----------------------------------------------------------------------


@criterion(1, "constant-curvature rigidity: g = sn_k^2 g_sphere within 1e-5, < 5 s per case")
@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("k", [-1.0, 0.0, 1.0])
def test_c1_constant_curvature(k, n):
    r_max = _c1_rmax(k)
    t0 = time.perf_counter()
    trs = traces("space_form", n, k, r_max)
    verdicts = [constant_curvature_check(tr, k, tol=1e-5, r_range=(0.05, r_max)) for tr in trs]
    elapsed = time.perf_counter() - t0
    assert all(v.holds for v in verdicts), verdicts
    for tr in trs:
        gS = sphere_metric(tr.theta)
        for s in tr.states:
            if 0.05 <= s.r <= r_max:
                rel = np.max(np.abs(s.g - sf.sn(k, s.r) ** 2 * gS)) / (sf.sn(k, s.r) ** 2 * np.max(np.abs(gS)))
                assert rel <= 1e-5
    assert elapsed < 5.0


# -- 2 -----------------------------------------------------------------------


@criterion(2, "conjugate radius: pi (k=1), pi/2 (k=4) within 1e-3; none to r=10 for k<=0")
@pytest.mark.parametrize("n,k,r0", [(2, 1.0, PI), (3, 1.0, PI), (3, 4.0, PI / 2)])
def test_c2_conjugate_time(n, k, r0):
    for tr in traces("space_form", n, k, r0 + 0.05):
        assert tr.conjugate is not None
        assert abs(tr.conjugate.r0 - r0) <= 1e-3


@criterion(2, "conjugate radius: pi (k=1), pi/2 (k=4) within 1e-3; none to r=10 for k<=0")
@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("k", [-1.0, 0.0])
def test_c2_no_event(k, n):
    for tr in traces("space_form", n, k, 10.0):
        assert tr.conjugate is None and tr.radii[-1] == 10.0


# -- 3 -----------------------------------------------------------------------


@criterion(3, "Riccati comparison: oracle pairs pass, equality <= 1e-10, monotone quantity within 1e-8")
def test_c3_riccati():
    t = two_sided_grid(EPS, 3.0, 3000)
    assert riccati_compare(t, 1 / np.tan(t), 1 / t, monotone_tol=1e-8).holds
    t = two_sided_grid(EPS, 10.0, 3000)
    assert riccati_compare(t, 1 / t, 1 / np.tanh(t), monotone_tol=1e-8).holds
    t = two_sided_grid(EPS, PI, 4000, 1e-3)
    assert riccati_compare(t, 1 / np.tan(t), 1 / np.tanh(t), monotone_tol=1e-8).holds
    rho = np.array([sf.sn_ratio(1.0, x) for x in t])
    v = riccati_compare(t, rho, rho, monotone_tol=1e-8)
    assert v.holds and v.max_violation <= 1e-10


# -- 4 -----------------------------------------------------------------------


@criterion(4, "Hessian comparison: equality cases <= 1e-5; r+r^3 vs K=0 passes with mu_min >= 1/r on (0,5]")
@pytest.mark.parametrize("k", [-1.0, 0.0, 1.0])
def test_c4_hessian_equality(k):
    for tr in traces("space_form", 3, k, _c1_rmax(k)):
        assert check_hessian_lower(tr, k).max_violation <= 1e-5
        assert check_hessian_upper(tr, k).max_violation <= 1e-5


@criterion(4, "Hessian comparison: equality cases <= 1e-5; r+r^3 vs K=0 passes with mu_min >= 1/r on (0,5]")
def test_c4_hessian_strict():
    for tr in traces("warped", 3, "poly_cubic", 5.0):
        assert check_hessian_lower(tr, 0.0).holds
        assert all(s.mu_min >= 1 / s.r for s in tr.states)


# -- 5 -----------------------------------------------------------------------


@criterion(5, "mean comparison: 2 cot r <= 2/r on (0,pi); H(3.0) = -14.031 +/- 0.01")
def test_c5_mean():
    for tr in traces("space_form", 3, 1.0, PI - 1e-3, C5_GRID):
        assert check_mean(tr, 0.0).holds
        assert abs(tr.state_at(3.0).H - FROZEN["model_mean_curvature(3,1,3.0)"]) <= 0.01
        assert abs(FROZEN["model_mean_curvature(3,1,3.0)"] - (-14.031)) <= 0.01


# -- 6 -----------------------------------------------------------------------


@criterion(6, "Bonnet-Myers: event by pi/sqrt(k) + 1e-3 on all directions, < 10 s per manifold")
@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("k", [1.0, 4.0])
def test_c6_bonnet_myers(k, n):
    t0 = time.perf_counter()
    v = bonnet_myers_scan(space_form(n, k), k)
    elapsed = time.perf_counter() - t0
    assert v.holds, v
    assert elapsed < 10.0
    for tr in traces("space_form", n, k, sf.domain_end(k) + 0.05):
        assert tr.conjugate.r0 <= sf.domain_end(k) + 1e-3


# -- 7 -----------------------------------------------------------------------


@criterion(7, "Cartan-Hadamard: no event to r=10, mu_min >= 1/r - 1e-5, lambda_min' >= -1e-6")
@pytest.mark.parametrize("kind,n,param", [("space_form", 3, -1.0), ("space_form", 3, 0.0), ("warped", 3, "poly_cubic")])
def test_c7_cartan_hadamard(kind, n, param):
    spec = space_form(n, param) if kind == "space_form" else warped(n, param)
    assert cartan_hadamard_check(spec, 10.0, lambda_tol=1e-6).holds
    for tr in traces(kind, n, param, 10.0):
        assert tr.conjugate is None
        r = tr.radii
        assert np.min(tr.column("mu_min") - 1 / r) >= -1e-5
        lam = tr.column("lambda_min")
        assert np.min(np.diff(lam) / np.diff(r)) >= -1e-6


# -- 8, 9 --------------------------------------------------------------------

BISHOP_RADII = [0.5, 1.0, 2.0, 3.0, PI]
# the r -> 0 check reads the two smallest radii, so 0.01 gets a neighbour
BG_RADII = [0.01, 0.02] + BISHOP_RADII


@functools.lru_cache(maxsize=None)
def round_disc_curve():
    q = build_quadrature(2, 64)
    return q, volume_curve(space_form(2, 1.0), BG_RADII, q, EPS)


@criterion(8, "Bishop: 2 pi (1 - cos r) <= pi r^2 on the grid, volumes within 1e-4, G <= G_k at every node")
def test_c8_bishop():
    q, curve = round_disc_curve()
    v = bishop_check(space_form(2, 1.0), 0.0, BISHOP_RADII, q, curve=curve)
    assert v.holds, v
    for r, vol in zip(curve.radii, curve.volumes):
        if r in BISHOP_RADII:
            assert abs(vol - ball_2_1(r)) <= 1e-4
            assert vol <= PI * r * r
    for row in curve.densities:
        assert np.all(row <= curve.radii + 1e-12)


@criterion(9, "Bishop-Gromov: ratio nonincreasing within 1e-8, ratio(0.01) = 1 within 1e-2")
def test_c9_bishop_gromov():
    q, curve = round_disc_curve()
    v = bishop_gromov_check(space_form(2, 1.0), 0.0, BG_RADII, q, curve=curve)
    assert v.holds, v
    ratio = curve.volumes / (PI * curve.radii**2)
    assert np.all(np.diff(ratio) <= 1e-8)
    assert abs(ratio[0] - 1) <= 1e-2


# -- 10 ----------------------------------------------------------------------


@criterion(10, "identities: |d log G/dr - H| <= 1e-4, h-asymmetry <= 1e-8, |r H/(n-1) - 1| <= 1e-3 at r = 10 eps")
@pytest.mark.parametrize("run", RUNS, ids=[f"{r[0]}-{r[1]}-{r[2]}-{r[3]:.4g}" for r in RUNS])
def test_c10_identities(run):
    for tr in traces(*run):
        rep = consistency_report(tr)
        assert rep.dlogG_residual <= 1e-4, rep
        assert rep.h_asymmetry <= 1e-8, rep
        s = integrate_lanes(tr.spec, [tr.theta], EPS, 10 * EPS, [10 * EPS])[0].state_at(10 * EPS)
        assert abs(s.r * s.H / (tr.spec.n - 1) - 1) <= 1e-3


@criterion(10, "identities: |d log G/dr - H| <= 1e-4, h-asymmetry <= 1e-8, |r H/(n-1) - 1| <= 1e-3 at r = 10 eps")
def test_c10_identities_volume_rays():
    q = build_quadrature(2, 64)
    for tr in integrate_lanes(space_form(2, 1.0), q.nodes, EPS, PI, 401):
        rep = consistency_report(tr)
        assert rep.dlogG_residual <= 1e-4 and rep.h_asymmetry <= 1e-8


# -- 11 ----------------------------------------------------------------------


@criterion(11, "determinism: repeated runs give byte-identical CSVs")
@pytest.mark.parametrize(
    "command,cfg",
    [
        ("flow", {"dimension": 3, "kind": "space_form", "k": 1, "r_max": 3.2}),
        ("check", {"dimension": 3, "kind": "space_form", "k": 1, "checks": ["constant_curvature", "bonnet_myers", "identities"]}),
        ("check", {"dimension": 3, "kind": "warped", "profile": "poly_cubic", "compare": {"K": 0}, "r_max": 10, "checks": ["cartan_hadamard", "hessian_lower"]}),
        ("volume", {"dimension": 2, "kind": "space_form", "k": 1, "compare": {"k": 0}, "order": 64, "r_max": PI, "radii": BG_RADII}),
        ("scan", {"dimension": 2, "kind": "space_form", "k": 1, "r_max": 3.3, "scan": {"values": [1, 2, 4]}}),
    ],
)
def test_c11_determinism(tmp_path, command, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main([command, "--config", str(path), "--out", str(out), "--quiet"]) in (0, 2)
        outs.append(out)
    files = sorted(p.name for p in outs[0].glob("*.csv"))
    assert files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f
