"""Pullback graph, fiber sets, synchronization, and their failure modes."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from ergograph._rng import make_rng
from ergograph.attractor import covering_verify
from ergograph.fiber_family import PlateauFamily, get_family
from ergograph.geometry import (DiskDomain, GridSet, SolenoidPoint,
                                solenoid_metric)
from ergograph.invariant_graph import (GraphSample, backward_coords,
                                       base_fiber_cloud, bony_histogram_csv,
                                       bony_scan, fiber_diameters, fiber_set,
                                       graph_table, invariance_residual,
                                       pullback_batch, pullback_gamma,
                                       sync_test, usc_probe, _neighbor)
from ergograph.skew_product import sample_solenoid


# ---------------------------------------------------------------------------
# backward coordinates and pullback


def test_backward_coords_exact():
    out = backward_coords([0.5], [[3, 7]], k=8)
    assert out[0, 0] == 3.5 / 8.0
    assert out[0, 1] == (3.5 / 8.0 + 7.0) / 8.0


def test_backward_coords_digit_consistency():
    rng = make_rng(1, 0)
    t = rng.random(5)
    digits = rng.integers(0, 8, size=(5, 12))
    out = backward_coords(t, digits, k=8)
    # one forward step recovers the digit and the previous coordinate
    back = out[:, 1:] * 8.0
    assert np.allclose(np.floor(back), digits[:, 1:])
    assert np.allclose(back - digits[:, 1:], out[:, :-1], atol=1e-12)


def test_pullback_certified_and_start_independent(fam):
    pts = sample_solenoid(20, depth=2048, seed=1)
    t = np.array([p.t for p in pts])
    digits = np.array([p.digits for p in pts])
    g1, depth, tail, conv = pullback_batch(fam, t, digits, tol=1e-8)
    g2, _, _, _ = pullback_batch(fam, t, digits, tol=1e-8, start=(-2.0, 0.5))
    assert conv.all()
    assert (tail < 1e-8).all()
    assert depth.max() < 600
    assert np.abs(g1 - g2).max() < 2e-8


def test_pullback_short_digits_flagged_unconverged(fam):
    pts = sample_solenoid(4, depth=8, seed=2)
    t = np.array([p.t for p in pts])
    digits = np.array([p.digits for p in pts])
    g, depth, tail, conv = pullback_batch(fam, t, digits, tol=1e-8)
    assert not conv.any()
    assert (depth == 8).all()
    assert (tail > 1.0).all()  # bound still far from tol at depth 8
    assert np.isfinite(g).all()


def test_pullback_gamma_wraps_batch(fam):
    s = sample_solenoid(1, depth=1024, seed=3)[0]
    gs = pullback_gamma(fam, s)
    assert isinstance(gs, GraphSample)
    assert gs.converged
    assert gs.tail_bound < 1e-8
    g, _, _, _ = pullback_batch(fam, [s.t], [list(s.digits)], 1e-8)
    assert np.array_equal(gs.gamma, g[0])


def test_graph_table_format(fam):
    samples = [pullback_gamma(fam, s) for s in sample_solenoid(3, 1024, seed=4)]
    table = graph_table(fam, samples)
    lines = table.strip().split("\n")
    assert lines[0] == "t0,digits_digest,gamma_x1,gamma_x2,depth,tail"
    assert len(lines) == 4
    cols = lines[1].split(",")
    assert len(cols) == 6
    assert len(cols[1]) == 16  # digest width
    float(cols[2]), float(cols[3])  # parse


# ---------------------------------------------------------------------------
# continuity along the solenoid


def test_graph_continuity_certified_pairs(fam):
    # points sharing a digit prefix are close; the tail product bounds the
    # graph deviation, with the observed value far below it
    rng = make_rng(9, 2)
    s = sample_solenoid(1, depth=2048, seed=102)[0]
    coords = backward_coords([s.t], [list(s.digits)], 8)[0]
    cum = np.cumprod(np.asarray(fam.lip_sup(coords)))
    for L in (12, 30, 100):
        tail = tuple(int(v) for v in rng.integers(0, 8, size=s.depth - L))
        s2 = SolenoidPoint(t=s.t, digits=s.digits[:L] + tail, k=8)
        g, _, _, _ = pullback_batch(fam, [s.t, s.t],
                                    [list(s.digits), list(s2.digits)], 1e-10)
        dev = float(np.linalg.norm(g[0] - g[1]))
        bound = 2.0 * fam.domain.diam * cum[L - 1]
        assert dev <= bound + 1e-12
    assert dev < 0.06  # modulus at the deepest prefix


# ---------------------------------------------------------------------------
# invariance


def test_invariance_residual_passes(fam):
    rep = invariance_residual(fam, n_samples=30, seed=0)
    assert rep.ok
    assert rep.stats["max_residual"] < 1e-6
    assert rep.stats["all_certified"]


def test_invariance_residual_fails_without_certification(fam):
    rep = invariance_residual(fam, n_samples=20, seed=0, sample_depth=8)
    assert rep.verdict == "FAIL"
    assert not rep.stats["all_certified"]


# ---------------------------------------------------------------------------
# fiber sets


def test_fiber_diameters_dual_route(fam):
    pts = sample_solenoid(10, depth=256, seed=2)
    t = np.array([p.t for p in pts])
    digits = np.array([p.digits for p in pts])
    cert, obs = fiber_diameters(fam, t, digits, depth=200)
    assert np.all(obs <= cert + 1e-12)
    assert cert.max() < 1e-3


def _cloud_diam(c):
    d = c[:, None, :] - c[None, :, :]
    return float(np.sqrt((d * d).sum(-1)).max())


def test_fiber_set_diameters_shrink_with_depth(fam):
    s = sample_solenoid(1, depth=256, seed=2)[0]
    fs = fiber_set(fam, s, depth=40, checkpoints=(5, 10, 20, 40))
    diams = [_cloud_diam(fs[cp]) for cp in sorted(fs)]
    assert all(b <= a + 1e-15 for a, b in zip(diams, diams[1:]))
    assert diams[0] > 1e-3 > diams[-1]


def test_bony_scan_default_passes(fam):
    rep = bony_scan(fam, n_fibers=50, depth=200, seed=0)
    assert rep.ok
    assert rep.stats["fraction_below_tol"] == 1.0
    assert rep.stats["max_certified"] < rep.stats["diam_tol"]
    assert sum(rep.stats["hist_counts"]) == 50


def test_bony_histogram_csv(fam):
    rep = bony_scan(fam, n_fibers=20, depth=100, seed=1)
    csv = bony_histogram_csv(rep)
    lines = csv.strip().split("\n")
    assert lines[0] == "diam_bin,count"
    assert len(lines) == len(rep.stats["hist_edges"])  # bins + header
    assert sum(int(l.split(",")[1]) for l in lines[1:]) == 20


# ---------------------------------------------------------------------------
# upper semicontinuity


def test_usc_probe_passes_generic_point(fam):
    s = sample_solenoid(1, depth=256, seed=11)[0]
    rep = usc_probe(fam, s, eps=0.06)
    assert rep.ok
    assert rep.stats["delta"] > 0
    assert rep.stats["worst_directed"] <= 0.06


def test_usc_probe_wrap_point(fam):
    # base coordinate at the wrap seam; neighbors must borrow digits
    s = SolenoidPoint(t=0.0, digits=(3,) * 64, k=8)
    rng = make_rng(0, 1)
    for _ in range(100):
        s2 = _neighbor(s, 2.0 ** -4, rng, 8)
        assert solenoid_metric(s2, s, n_terms=64) < 2.0 ** -4
    rep = usc_probe(fam, s, eps=0.06)
    assert rep.ok


def test_usc_probe_rejects_subgrid_eps(fam):
    s = SolenoidPoint(t=0.25, digits=(1,) * 32, k=8)
    with pytest.raises(ValueError, match="eps"):
        usc_probe(fam, s, eps=1e-3)


class _JumpTheta(PlateauFamily):
    # angle profile with a genuine jump: fibers across it stay far apart
    def theta(self, t):
        t = np.asarray(t, float)
        return np.where(t < 0.5, 0.0, 0.5)


def test_usc_probe_fails_at_discontinuity():
    fam = _JumpTheta()
    s = SolenoidPoint(t=0.0, digits=(4,) + (2,) * 255, k=8)  # c_1 = 0.5 exactly
    rep = usc_probe(fam, s, eps=0.06)
    assert rep.verdict == "FAIL"
    assert rep.stats["delta"] == 0.0
    assert rep.notes


# ---------------------------------------------------------------------------
# synchronization


def test_sync_test_passes(fam):
    rep = sync_test(fam, n_triples=20, tol=1e-8, max_steps=3000, seed=0)
    assert rep.ok
    assert rep.stats["fraction_synced"] == 1.0
    assert rep.stats["median_steps"] < 500


def test_sync_tighter_tol_needs_more_steps(fam):
    a = sync_test(fam, n_triples=20, tol=1e-8, max_steps=3000, seed=0)
    b = sync_test(fam, n_triples=20, tol=1e-12, max_steps=3000, seed=0)
    assert b.stats["median_steps"] >= a.stats["median_steps"]


# ---------------------------------------------------------------------------
# base-coverage scan


class _SquareIFS:
    """Four-branch 0.6-scale corner system; attractor covers the unit square."""

    k = 4

    def __init__(self):
        self.domain = DiskDomain((0.5, 0.5), 0.8)
        self.offs = np.array([[0.0, 0.0], [0.0, 0.4], [0.4, 0.0], [0.4, 0.4]])
        self.config = SimpleNamespace(x0=(0.5, 0.5))

    def f(self, t, x):
        t = np.atleast_1d(np.asarray(t, float))
        c = self.offs[np.minimum((t * 4).astype(int), 3)]
        return 0.6 * np.asarray(x, float) + c

    def lip_sup(self, t):
        return np.full(np.shape(np.atleast_1d(t)), 0.6)


def _unit_square(n=32):
    return GridSet(0.0, 0.0, 1.0 / n, np.ones((n, n), bool))


def test_base_fiber_cloud_requires_certificate():
    rep = base_fiber_cloud(_SquareIFS(), _unit_square(), t=0.3)
    assert rep.verdict == "INCONCLUSIVE"
    assert "covering" in rep.notes


def test_base_fiber_cloud_rejects_failed_certificate():
    sq = _SquareIFS()
    bad = covering_verify([lambda p: np.asarray(p, float) / 3.0], _unit_square())
    assert bad.verdict == "FAIL"
    rep = base_fiber_cloud(sq, _unit_square(), t=0.3, covering=bad)
    assert rep.verdict == "INCONCLUSIVE"


def test_base_fiber_cloud_covers_with_certificate():
    sq = _SquareIFS()
    maps = [lambda p, c=c: 0.6 * np.asarray(p, float) + c for c in sq.offs]
    cert = covering_verify(maps, _unit_square())
    assert cert.ok
    rep = base_fiber_cloud(sq, _unit_square(), t=0.3, n_branches=10_000,
                           depth=64, covering=cert)
    assert rep.ok
    assert rep.stats["covered_fraction"] > 0.9
