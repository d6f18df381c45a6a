"""Perturbation fields, C^1 distances, domination, robustness re-checks."""

import numpy as np
import pytest

from ergograph._rng import make_rng
from ergograph.ergodics import lyapunov_top
from ergograph.fiber_family import get_family
from ergograph.geometry import DiskDomain, as_points
from ergograph.perturbation import (PerturbationError, PerturbationSpec,
                                    TrigField, c1_distance, c1_distance_parts,
                                    dominated_splitting_check, perturb_family,
                                    robustness_suite)


# ---------------------------------------------------------------------------
# the field


def test_trig_field_deterministic(fam):
    a = TrigField(PerturbationSpec(1e-3, seed=7), fam.domain)
    b = TrigField(PerturbationSpec(1e-3, seed=7), fam.domain)
    assert np.array_equal(a.cc, b.cc)
    assert np.array_equal(a.sl, b.sl)
    x = fam.domain.sample(50, make_rng(2))
    assert np.array_equal(a.eval(0.3, x), b.eval(0.3, x))


def test_trig_field_normalized(fam):
    tf = TrigField(PerturbationSpec(0.0, seed=3), fam.domain)
    rng = make_rng(9)
    xs = fam.domain.sample(400, rng)
    # normalized on a sampled grid; fresh points may exceed 1 only slightly
    for t in rng.random(40):
        assert np.linalg.norm(tf.eval(t, xs), axis=1).max() < 1.2
        assert np.linalg.norm(tf.jac_x(t, xs), ord=2, axis=(1, 2)).max() < 1.2


def test_trig_field_jacobian_matches_fd(fam):
    tf = TrigField(PerturbationSpec(0.0, seed=3), fam.domain)
    x = fam.domain.sample(5, make_rng(4))
    t, h = 0.37, 1e-6
    J = tf.jac_x(t, x)
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    fd = np.stack(
        [(tf.eval(t, x + h * e1) - tf.eval(t, x - h * e1)) / (2 * h),
         (tf.eval(t, x + h * e2) - tf.eval(t, x - h * e2)) / (2 * h)], axis=2)
    assert np.abs(J - fd).max() < 1e-8


# ---------------------------------------------------------------------------
# perturbed family


def test_eps_zero_is_identity(fam):
    p = perturb_family(fam, PerturbationSpec(0.0))
    rng = make_rng(1)
    ts = rng.random(200)
    xs = fam.domain.sample(200, rng)
    assert np.array_equal(p.f(ts, xs), fam.f(ts, xs))
    assert np.array_equal(p.jac(ts, xs), fam.jac(ts, xs))
    assert c1_distance(fam, p, n_samples=512) == 0.0


def test_negative_eps_rejected(fam):
    with pytest.raises(PerturbationError, match="nonnegative"):
        perturb_family(fam, PerturbationSpec(-1e-3))


def test_huge_eps_rejected(fam):
    with pytest.raises(PerturbationError, match="radius"):
        perturb_family(fam, PerturbationSpec(10.0))


def test_perturbed_inverse_roundtrip(fam):
    p = perturb_family(fam, PerturbationSpec(1e-3))
    rng = make_rng(5)
    ts = rng.random(100)
    xs = fam.domain.sample(100, rng)
    y = p.f(ts, xs)
    assert np.abs(p.f(ts, p.f_inv(ts, y)) - y).max() < 1e-12


def test_perturbed_lip_sup_shift(fam):
    p = perturb_family(fam, PerturbationSpec(1e-3))
    ts = np.array([0.0, 0.2, 0.5, 0.9])
    assert np.allclose(np.asarray(p.lip_sup(ts)) - np.asarray(fam.lip_sup(ts)),
                       1e-3, atol=1e-15)


def test_perturbed_jacobian_keeps_orientation(fam):
    # base family is orientation preserving; a C^1-small field cannot flip it
    p = perturb_family(fam, PerturbationSpec(1e-3))
    rng = make_rng(5)
    ts = rng.random(2000)
    xs = fam.domain.sample(2000, rng)
    assert np.linalg.det(fam.jac(ts, xs)).min() > 0.0
    assert np.linalg.det(p.jac(ts, xs)).min() > 0.0


# ---------------------------------------------------------------------------
# C^1 distance


class _Shift:
    """Constant translation of a family: known discrepancy parts."""

    delta = np.array([0.01, -0.02])

    def __init__(self, base):
        self.base = base

    def step_with_jac(self, t, x):
        out, J = self.base.step_with_jac(t, x)
        return out + self.delta, J

    def jac(self, t, x):
        return self.base.jac(t, x)

    def f_inv(self, t, y):
        return self.base.f_inv(t, as_points(y) - self.delta)


def test_c1_parts_constant_shift_oracle(fam):
    parts = c1_distance_parts(fam, _Shift(fam), n_samples=256)
    assert parts["value"] == pytest.approx(np.linalg.norm(_Shift.delta),
                                           abs=1e-12)
    assert parts["jacobian"] == 0.0
    assert parts["inverse_value"] > 0.0
    assert parts["c1_estimate"] == max(parts["value"], parts["jacobian"],
                                       parts["inverse_value"])


def test_c1_distance_tracks_eps(fam):
    ds = [c1_distance(fam, perturb_family(fam, PerturbationSpec(e)),
                      n_samples=1024) for e in (1e-4, 1e-3, 1e-2)]
    assert ds[0] < ds[1] < ds[2]
    # normalized field: the estimate sits within a decade of eps
    assert 1e-4 < ds[1] < 1e-2


def test_c1_parts_report_inverse_jacobian_separately(fam):
    p = perturb_family(fam, PerturbationSpec(1e-3))
    parts = c1_distance_parts(fam, p, n_samples=1024)
    # amplified by inverse conditioning, hence excluded from the headline
    assert parts["inverse_jacobian"] > parts["c1_estimate"]


# ---------------------------------------------------------------------------
# dominated splitting


def test_splitting_base_family(fam):
    rep = dominated_splitting_check(fam, n_samples=5000)
    assert rep.ok
    assert rep.stats["L"] < 8.0
    assert rep.stats["margin"] == pytest.approx(8.0 - rep.stats["L"], abs=1e-12)
    assert rep.stats["sup_dx_direct"] <= 1.0 + 1e-9


def test_splitting_perturbed_family(fam):
    p = perturb_family(fam, PerturbationSpec(1e-3))
    rep = dominated_splitting_check(p, n_samples=5000)
    assert rep.ok
    assert rep.stats["L"] < 8.0


class _Stretch:
    """Fiber expansion 9 beats the base expansion 8: domination must fail."""

    k = 8

    def __init__(self):
        self.domain = DiskDomain((0.0, 0.0), 3.0)

    def f(self, t, x):
        return 9.0 * as_points(x)

    def jac(self, t, x):
        return np.tile(9.0 * np.eye(2), (len(as_points(x)), 1, 1))


def test_splitting_fails_on_fiber_expansion():
    rep = dominated_splitting_check(_Stretch(), n_samples=500)
    assert rep.verdict == "FAIL"
    assert rep.stats["L"] == pytest.approx(9.0, abs=1e-9)
    assert rep.stats["margin"] < 0.0


# ---------------------------------------------------------------------------
# robustness suite


def test_robustness_suite_small_eps():
    reports, summary = robustness_suite(None, PerturbationSpec(1e-3),
                                        budget=0.08)
    assert summary.ok
    assert summary.stats["failed"] == []
    assert set(summary.stats["verdicts"]) == {
        "sync", "lyapunov", "bony", "usc", "invariance", "srb"}


def test_robustness_suite_eps_zero_matches_base(fam):
    reports, summary = robustness_suite(None, PerturbationSpec(0.0),
                                        budget=0.08)
    assert summary.ok
    direct = lyapunov_top(fam, n_starts=8, n_steps=1600, seed=0)
    assert reports["lyapunov"].stats["lambda1"] == direct.stats["lambda1"]
