"""C^1-small perturbations of a fiber family and robustness re-checks.

The perturbation is a trig-polynomial vector field V(t, x) (low base
frequencies, affine in x), normalized so its sampled C^0 and C^1 norms are
at most 1; the perturbed family is f~_t = f_t + eps * V(t, .).  Validity
gates reject perturbations large enough to push images out of the domain
or degenerate the Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .geometry import DiagnosticReport, FAIL, PASS, as_points
from .fiber_family import get_family, PlateauFamily


class PerturbationError(ValueError):
    pass


@dataclass(frozen=True)
class PerturbationSpec:
    """Size, stream seed, and base-frequency cutoff of the field."""

    eps: float
    seed: int = 0
    modes: int = 4


class TrigField:
    """V(t, x) = sum_p trig(2 pi p t) * (affine in (x - z)/R), C^1 norm <= 1."""

    def __init__(self, spec: PerturbationSpec, domain):
        rng = make_rng(spec.seed, 97)
        m = spec.modes
        self.center = np.asarray(domain.center)
        self.scale = float(domain.radius)
        self.cc = rng.normal(size=(m + 1, 2))       # cos const term
        self.cl = rng.normal(size=(m + 1, 2, 2))    # cos linear term
        self.sc = rng.normal(size=(m + 1, 2))
        self.sl = rng.normal(size=(m + 1, 2, 2))
        self.sc[0] = 0.0
        self.sl[0] = 0.0
        self._norm = 1.0
        self._norm = self._sampled_c1_norm(domain)

    def _sampled_c1_norm(self, domain) -> float:
        ts = np.linspace(0.0, 1.0, 257)[:-1]
        xs = np.vstack([domain.boundary(64), [domain.center]])
        worst = 0.0
        for t in ts:
            v = self.eval(t, xs)
            j = self.jac_x(t, xs)
            worst = max(worst, float(np.linalg.norm(v, axis=1).max()),
                        float(np.linalg.norm(j, ord=2, axis=(1, 2)).max()))
        return worst if worst > 0 else 1.0

    def _trigs(self, t):
        p = np.arange(self.cc.shape[0])
        a = 2.0 * np.pi * np.multiply.outer(np.asarray(t, dtype=np.float64), p)
        return np.cos(a), np.sin(a)  # (..., P)

    def eval(self, t, x) -> np.ndarray:
        x = as_points(x)
        xi = (x - self.center) / self.scale
        ct, st = self._trigs(t)
        if ct.ndim == 1:
            ct = np.broadcast_to(ct, (len(x),) + ct.shape)
            st = np.broadcast_to(st, (len(x),) + st.shape)
        const = ct @ self.cc + st @ self.sc
        lin = np.einsum("np,pij,nj->ni", ct, self.cl, xi) + \
            np.einsum("np,pij,nj->ni", st, self.sl, xi)
        return (const + lin) / self._norm

    def jac_x(self, t, x) -> np.ndarray:
        x = as_points(x)
        ct, st = self._trigs(t)
        if ct.ndim == 1:
            ct = np.broadcast_to(ct, (len(x),) + ct.shape)
            st = np.broadcast_to(st, (len(x),) + st.shape)
        J = np.einsum("np,pij->nij", ct, self.cl) + \
            np.einsum("np,pij->nij", st, self.sl)
        return J / (self._norm * self.scale)


class PerturbedFamily:
    """f~_t = f_t + eps V(t, .); inverse by damped Newton from y."""

    def __init__(self, base, spec: PerturbationSpec):
        self.base = get_family(base)
        self.spec = spec
        self.config = self.base.config
        self.domain = self.base.domain
        self.k = self.base.k
        self.m = self.base.m
        self.field = TrigField(spec, self.domain)
        self._gate()

    def _gate(self):
        eps = self.spec.eps
        if eps < 0:
            raise PerturbationError("eps must be nonnegative")
        if eps == 0:
            return
        rng = make_rng(self.spec.seed, 101)
        ts = rng.random(512)
        xs = np.vstack([self.domain.boundary(256),
                        self.domain.sample(256, rng)])
        worst_r = 0.0
        worst_sv = math.inf
        for t in ts[:128]:
            img = self.f(t, xs)
            worst_r = max(worst_r, float(
                np.linalg.norm(img - self.center_arr, axis=1).max()))
            sv = np.linalg.svd(self.jac(t, xs), compute_uv=False)
            worst_sv = min(worst_sv, float(sv[..., -1].min()))
        if worst_r > self.domain.radius - 0.05:
            raise PerturbationError(
                f"perturbed images reach radius {worst_r:.3f}; the family "
                f"must stay inside the domain with clearance")
        if worst_sv < 0.02:
            raise PerturbationError(
                f"perturbed Jacobian nearly singular (min sv {worst_sv:.2e})")

    @property
    def center_arr(self):
        return np.asarray(self.domain.center)

    # -- family protocol ----------------------------------------------------

    def f(self, t, x):
        x = as_points(x)
        out = self.base.f(t, x)
        if self.spec.eps:
            out = out + self.spec.eps * self.field.eval(t, x)
        else:
            out = out + 0.0
        return out

    def jac(self, t, x):
        out = self.base.jac(t, x)
        if self.spec.eps:
            out = out + self.spec.eps * self.field.jac_x(t, as_points(x))
        return out

    def step_with_jac(self, t, x):
        out, J = self.base.step_with_jac(t, x)
        if self.spec.eps:
            out = out + self.spec.eps * self.field.eval(t, as_points(x))
            J = J + self.spec.eps * self.field.jac_x(t, as_points(x))
        return out, J

    def f_scalar(self, t, x, y):
        fx, fy = self.base.f_scalar(t, x, y)
        if self.spec.eps:
            v = self.field.eval(t, np.array([[x, y]]))[0]
            fx += self.spec.eps * float(v[0])
            fy += self.spec.eps * float(v[1])
        return fx, fy

    def f_inv(self, t, y):
        y = as_points(y)
        x = self.base.f_inv(t, y)  # unperturbed inverse as Newton start
        for _ in range(60):
            F = self.f(t, x) - y
            if np.abs(F).max() < 1e-13:
                break
            J = self.jac(t, x)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            dx = (J[:, 1, 1] * F[:, 0] - J[:, 0, 1] * F[:, 1]) / det
            dy = (-J[:, 1, 0] * F[:, 0] + J[:, 0, 0] * F[:, 1]) / det
            x = x - np.column_stack([dx, dy])
        return x

    def lip_sup(self, t):
        extra = self.spec.eps  # sampled sup ||D_x V|| <= 1 by normalization
        return np.asarray(self.base.lip_sup(t)) + extra

    def eta(self, tau):
        return self.base.eta(tau)

    def theta(self, t):
        return self.base.theta(t)

    def generators(self):
        # arc-center snapshots; under perturbation the maps are no longer
        # frozen across each arc, so these are representatives only
        return self.base.generators()

    def fixed_point(self, tau, **kw):
        return self.base.fixed_point(tau, **kw)


def perturb_family(family, spec: PerturbationSpec) -> PerturbedFamily:
    return PerturbedFamily(family, spec)


# ---------------------------------------------------------------------------
# distances and splitting


def c1_distance_parts(base, pert, n_samples: int = 4096,
                      seed: int = 0) -> dict:
    """Sampled sup discrepancies between two families, split into parts:
    direct values/Jacobians and inverse values/Jacobians.

    Monte-Carlo sups are lower bounds for the true sups.  The headline
    ``c1_estimate`` excludes the inverse-Jacobian part: that part is
    amplified by the squared inverse conditioning (~ ||J^-1||^2, about 30
    here) and would swamp the field-normalized scale of the others.
    """
    base = get_family(base)
    rng = make_rng(seed, 103)
    ts = rng.random(n_samples)
    xs = base.domain.sample(n_samples, rng)
    f0, J0 = base.step_with_jac(ts, xs)
    f1, J1 = pert.step_with_jac(ts, xs)
    d_val = float(np.linalg.norm(f1 - f0, axis=1).max())
    d_jac = float(np.linalg.norm(J1 - J0, ord=2, axis=(1, 2)).max())

    ys = f0  # in both images up to eps; inverse branches compared there
    b0 = base.f_inv(ts, ys)
    b1 = pert.f_inv(ts, ys)
    d_inv = float(np.linalg.norm(b1 - b0, axis=1).max())
    Ji0 = np.linalg.inv(base.jac(ts, b0))
    Ji1 = np.linalg.inv(pert.jac(ts, b1))
    d_ijac = float(np.linalg.norm(Ji1 - Ji0, ord=2, axis=(1, 2)).max())
    return {"value": d_val, "jacobian": d_jac, "inverse_value": d_inv,
            "inverse_jacobian": d_ijac,
            "c1_estimate": max(d_val, d_jac, d_inv),
            "n_samples": n_samples}


def c1_distance(base, pert, n_samples: int = 4096, seed: int = 0) -> float:
    return c1_distance_parts(base, pert, n_samples, seed)["c1_estimate"]


def dominated_splitting_check(family, n_samples: int = 20_000, seed: int = 0,
                              fd_step: float = 1e-5) -> DiagnosticReport:
    """Sampled domination bound L = max(1/k + sup||df/ds||, sup||df/dx||) < k.

    Base-direction derivatives are taken per unit arc length of the unit
    circle (s = 2 pi t) by central finite differences.  The gate uses the
    direct maps; inverse-branch sups are reported as statistics (their
    base-direction sensitivity is amplified by the inverse Jacobian and is
    not part of the gate).
    """
    fam = get_family(family)
    rng = make_rng(seed, 107)
    ts = rng.random(n_samples)
    xs = fam.domain.sample(n_samples, rng)
    d_t = (fam.f((ts + fd_step) % 1.0, xs) - fam.f((ts - fd_step) % 1.0, xs)) \
        / (2.0 * fd_step)
    dt_arc = np.linalg.norm(d_t, axis=1) / (2.0 * np.pi)
    J = fam.jac(ts, xs)
    dx = np.linalg.norm(J, ord=2, axis=(1, 2))
    Jinv = np.linalg.inv(J)
    dx_inv = np.linalg.norm(Jinv, ord=2, axis=(1, 2))
    dt_inv_arc = np.linalg.norm(
        np.einsum("nij,nj->ni", Jinv, d_t), axis=1) / (2.0 * np.pi)

    k = fam.k
    L = max(1.0 / k + float(dt_arc.max()), float(dx.max()))
    verdict = PASS if L < k else FAIL
    stats = {"L": L, "k": k, "margin": k - L,
             "sup_dt_direct_arc": float(dt_arc.max()),
             "sup_dx_direct": float(dx.max()),
             "sup_dt_inverse_arc": float(dt_inv_arc.max()),
             "sup_dx_inverse": float(dx_inv.max()),
             "n_samples": n_samples}
    note = ("gate uses direct-map derivatives with base arc-length "
            "normalization; inverse sups reported only")
    return DiagnosticReport("dominated_splitting_check", verdict, stats, note)


# ---------------------------------------------------------------------------
# robustness


def robustness_suite(family, spec: PerturbationSpec, seed: int = 0,
                     budget: float = 1.0) -> tuple[dict, DiagnosticReport]:
    """Re-run the dynamic certifications on the perturbed family.

    Returns ({name: report}, summary).  With eps = 0 every verdict (and
    every statistic of the forward-path checks) matches the base family's.
    """
    from .invariant_graph import (bony_scan, invariance_residual, sync_test,
                                  usc_probe)
    from .skew_product import sample_solenoid
    from .ergodics import lyapunov_top, srb_independence

    fam = perturb_family(family, spec)
    n = lambda v: max(8, int(v * budget))
    reports = {
        "sync": sync_test(fam, n_triples=n(100), tol=1e-8,
                          max_steps=5000, seed=seed),
        "lyapunov": lyapunov_top(fam, n_starts=n(20), n_steps=n(20_000),
                                 seed=seed),
        "bony": bony_scan(fam, n_fibers=n(100), depth=200, seed=seed),
        "usc": usc_probe(fam, sample_solenoid(1, depth=400, seed=seed,
                                              k=fam.k)[0],
                         eps=1e-2 * fam.domain.diam, seed=seed),
        "invariance": invariance_residual(fam, n_samples=n(50), tol=1e-6,
                                          seed=seed, sample_depth=1024),
        "srb": srb_independence(fam, n_starts=n(16), n_steps=n(20_000),
                                seed=seed),
    }
    bad = [k for k, r in reports.items() if r.verdict != PASS]
    verdict = PASS if not bad else FAIL
    stats = {"eps": spec.eps, "failed": bad,
             "verdicts": {k: r.verdict for k, r in reports.items()}}
    return reports, DiagnosticReport("robustness_suite", verdict, stats)
