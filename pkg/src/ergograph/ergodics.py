"""Ergodic diagnostics along digit-stream orbits.

Lyapunov exponents by tangent propagation with per-step renormalization,
Birkhoff averages, SRB start-independence, correlation decay with circular
block-bootstrap error bars, and the contraction-on-average certificate.
All long orbits ride the symbolic base model (see skew_product), so base
statistics stay faithful at any horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._rng import make_rng
from .geometry import (DiagnosticReport, EmpiricalMeasure, FAIL, INCONCLUSIVE,
                       PASS)
from .fiber_family import get_family
from .invariant_graph import pullback_batch
from .skew_product import digit_stream_orbit, sample_solenoid


@dataclass(frozen=True)
class Observable:
    """Named scalar function of the skew-product state (t, x)."""

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, t, x):
        return self.fn(np.asarray(t), np.asarray(x))


def coordinate(i: int) -> Observable:
    return Observable(f"x{i + 1}", lambda t, x, i=i: x[:, i])


def gaussian_bump(center=(1.0, 0.0), sigma: float = 0.8) -> Observable:
    c = np.asarray(center, dtype=np.float64)

    def fn(t, x, c=c, s2=2.0 * sigma * sigma):
        d = x - c
        return np.exp(-(d * d).sum(axis=-1) / s2)

    return Observable(f"gauss({center[0]},{center[1]},{sigma})", fn)


def trig_product(p: int = 1, q: int = 1) -> Observable:
    return Observable(
        f"trig({p},{q})",
        lambda t, x, p=p, q=q: np.cos(p * x[:, 0]) * np.sin(q * x[:, 1]))


def base_cos(freq: int = 1) -> Observable:
    return Observable(f"base_cos({freq})",
                      lambda t, x, f=freq: np.cos(2.0 * np.pi * f * np.asarray(t)))


def builtin_observables() -> dict[str, Observable]:
    """The closed built-in library used by the CLI and the default suites."""
    out = [coordinate(0), coordinate(1), gaussian_bump(), trig_product(),
           base_cos()]
    d = {o.name: o for o in out}
    d.update({"x1": out[0], "x2": out[1], "gauss": out[2], "trig": out[3],
              "base_cos": out[4]})
    return d


def default_srb_observables() -> list[Observable]:
    return [coordinate(0), gaussian_bump(), trig_product()]


# ---------------------------------------------------------------------------
# Lyapunov


def lyapunov_top(family, n_starts: int = 50, n_steps: int = 100_000,
                 seed: int = 0, two_exponent: bool = False,
                 n_boot: int = 2000) -> DiagnosticReport:
    """Top (optionally both) Lyapunov exponents of the fiber cocycle.

    One tangent vector (or orthonormalized 2-frame) per start is propagated
    with per-step renormalization; the verdict asks the bootstrap 95% CI of
    the mean top exponent to sit strictly below zero.
    """
    fam = get_family(family)
    rng = make_rng(seed, 71)
    t, _ = digit_stream_orbit(n_steps, rng, fam.k, n_orbits=n_starts)
    x = fam.domain.sample(n_starts, rng)
    ang = 2.0 * np.pi * rng.random(n_starts)
    v1 = np.column_stack([np.cos(ang), np.sin(ang)])
    v2 = np.column_stack([-np.sin(ang), np.cos(ang)])
    log1 = np.zeros(n_starts)
    log2 = np.zeros(n_starts)
    for j in range(n_steps):
        x, J = fam.step_with_jac(t[:, j], x)
        w1 = np.einsum("bij,bj->bi", J, v1)
        r1 = np.linalg.norm(w1, axis=1)
        log1 += np.log(r1)
        v1 = w1 / r1[:, None]
        if two_exponent:
            w2 = np.einsum("bij,bj->bi", J, v2)
            w2 -= (w2 * v1).sum(axis=1)[:, None] * v1
            r2 = np.linalg.norm(w2, axis=1)
            log2 += np.log(r2)
            v2 = w2 / r2[:, None]
    lam1 = log1 / n_steps
    point = float(lam1.mean())
    brng = make_rng(seed, 73)
    idx = brng.integers(0, n_starts, size=(n_boot, n_starts))
    boots = lam1[idx].mean(axis=1)
    lo, hi = (float(q) for q in np.quantile(boots, [0.025, 0.975]))
    verdict = PASS if hi < 0.0 else FAIL
    stats = {"lambda1": point, "ci95": [lo, hi],
             "per_start": lam1.tolist(), "n_starts": n_starts,
             "n_steps": n_steps, "spread": float(lam1.std())}
    if two_exponent:
        lam2 = log2 / n_steps
        stats["lambda2"] = float(lam2.mean())
        stats["sum_pointwise"] = float((lam1 + lam2).mean())
    return DiagnosticReport("lyapunov_top", verdict, stats)


# ---------------------------------------------------------------------------
# Birkhoff / SRB


def birkhoff_average(family, observables: Sequence[Observable],
                     n_starts: int = 50, n_steps: int = 100_000,
                     burn: int = 1000, seed: int = 0, block: int = 100,
                     starts=None):
    """Time averages per (observable, start), with block-based SEs.

    Returns (avg (O,S), se (O,S)).  SEs come from non-overlapping block
    means of length ``block``, which absorbs the short-range correlation of
    the orbit.
    """
    fam = get_family(family)
    rng = make_rng(seed, 79)
    total = burn + n_steps
    t, _ = digit_stream_orbit(total, rng, fam.k, n_orbits=n_starts)
    x = fam.domain.sample(n_starts, rng) if starts is None else np.array(starts)
    n_obs = len(observables)
    n_blocks = n_steps // block
    bm = np.zeros((n_obs, n_starts, n_blocks))
    acc = np.zeros((n_obs, n_starts))
    filled = 0
    for j in range(total):
        ts = t[:, j]
        if j >= burn:
            for oi, obs in enumerate(observables):
                acc[oi] += obs(ts, x)
            filled += 1
            if filled % block == 0 and (filled // block) <= n_blocks:
                bi = filled // block - 1
                bm[:, :, bi] = acc / block
                acc[:] = 0.0
        x = fam.f(ts, x)
    avg = bm.mean(axis=2)
    se = bm.std(axis=2, ddof=1) / math.sqrt(n_blocks)
    return avg, se


def srb_independence(family, observables: Sequence[Observable] | None = None,
                     n_starts: int = 50, n_steps: int = 100_000,
                     burn: int = 1000, seed: int = 0) -> DiagnosticReport:
    """Start-independence of time averages: every orbit's average within
    3 Monte-Carlo SEs of the grand mean, for every observable."""
    observables = default_srb_observables() if observables is None else list(observables)
    avg, se = birkhoff_average(family, observables, n_starts, n_steps, burn, seed)
    grand = avg.mean(axis=1, keepdims=True)
    dev = np.abs(avg - grand)
    z = dev / np.maximum(se, 1e-300)
    worst = float(z.max())
    verdict = PASS if worst <= 3.0 else FAIL
    stats = {"worst_z": worst,
             "spread_by_obs": (avg.max(axis=1) - avg.min(axis=1)).tolist(),
             "grand_means": grand.ravel().tolist(),
             "median_se": float(np.median(se)),
             "observables": [o.name for o in observables],
             "n_starts": n_starts, "n_steps": n_steps}
    return DiagnosticReport("srb_independence", verdict, stats)


# ---------------------------------------------------------------------------
# graph measure


def graph_measure_sample(family, n: int = 10_000, seed: int = 0,
                         depth: int = 768, pull_tol: float = 1e-8) -> EmpiricalMeasure:
    """Empirical projection of the invariant-graph measure: gamma at
    independent uniform solenoid samples."""
    fam = get_family(family)
    pts = sample_solenoid(n, depth=depth, seed=seed, k=fam.k)
    t = np.array([p.t for p in pts])
    digits = np.array([p.digits for p in pts])
    g, _, _, conv = pullback_batch(fam, t, digits, pull_tol)
    if not conv.all():
        raise RuntimeError("pullback depth too small for requested tolerance")
    return EmpiricalMeasure.uniform(g)


# ---------------------------------------------------------------------------
# correlation decay


def _orbit_series(fam, n_total: int, seed: int, start):
    """One literal orbit over a digit-stream base; returns (t, positions)."""
    rng = make_rng(seed, 83)
    t, _ = digit_stream_orbit(n_total, rng, fam.k, n_orbits=1)
    tl = t[0].tolist()
    x0 = start if start is not None else fam.config.x0
    x, y = float(x0[0]), float(x0[1])
    xs = np.empty(n_total)
    ys = np.empty(n_total)
    step = fam.f_scalar
    for j in range(n_total):
        xs[j] = x
        ys[j] = y
        x, y = step(tl[j], x, y)
    return t[0], np.column_stack([xs, ys])


def correlation_decay(family, obs1: Observable, obs2: Observable | None = None,
                      n_max: int = 50, orbit_len: int = 1_000_000,
                      seed: int = 0, start=None) -> np.ndarray:
    """|C_n| for n = 0..n_max along one long orbit, where
    C_n = <obs1 * (obs2 after n steps)> - <obs1><obs2>."""
    fam = get_family(family)
    obs2 = obs2 if obs2 is not None else obs1
    t, x = _orbit_series(fam, orbit_len + n_max, seed, start)
    a = np.asarray(obs1(t, x), dtype=np.float64)
    b = np.asarray(obs2(t, x), dtype=np.float64)
    n = orbit_len
    am = a[:n].mean()
    out = np.empty(n_max + 1)
    for L in range(n_max + 1):
        w = b[L:L + n]
        out[L] = abs(float(a[:n] @ w) / n - am * w.mean())
    return out


def mixing_report(family, n_max: int = 50, orbit_len: int = 1_000_000,
                  block: int = 100, n_boot: int = 200, seed: int = 0,
                  start=None) -> DiagnosticReport:
    """Mixing trend over the state coordinates (t, x1, x2).

    C_n is the largest absolute entry of the lag-n cross-covariance matrix
    of the three coordinate observables; PASS iff C_{n_max} < C_1 / 5.
    Joint circular block-bootstrap CIs (blocks of ``block`` consecutive
    steps, resampled with shared indices across pairs) accompany both
    gated scalars.
    """
    fam = get_family(family)
    t, x = _orbit_series(fam, orbit_len + n_max, seed, start)
    S = np.column_stack([t, x])
    n = orbit_len
    A = S[:n]
    curves = np.empty((n_max + 1, 3, 3))
    for L in range(n_max + 1):
        B = S[L:L + n]
        # einsum keeps the reduction order fixed regardless of BLAS threads
        cross = np.einsum("ni,nj->ij", A, B) / n
        curves[L] = cross - np.outer(A.mean(axis=0), B.mean(axis=0))
    M = np.abs(curves).max(axis=(1, 2))

    nb = n // block
    brng = make_rng(seed, 89)
    ci = {}
    for L in (1, n_max):
        B = S[L:L + n]
        Ab = A[:nb * block].reshape(nb, block, 3)
        Bb = B[:nb * block].reshape(nb, block, 3)
        pb = np.einsum("kbi,kbj->kij", Ab, Bb) / block
        am = Ab.mean(axis=1)
        bm = Bb.mean(axis=1)
        idx = brng.integers(0, nb, size=(n_boot, nb))
        reps = np.empty(n_boot)
        for r in range(n_boot):
            i = idx[r]
            Cr = pb[i].mean(axis=0) - np.outer(am[i].mean(axis=0),
                                               bm[i].mean(axis=0))
            reps[r] = np.abs(Cr).max()
        ci[L] = [float(q) for q in np.quantile(reps, [0.025, 0.975])]

    ok = M[n_max] < M[1] / 5.0
    stats = {"C1": float(M[1]), "C_last": float(M[n_max]), "n_max": n_max,
             "curve": M.tolist(), "ci_C1": ci[1], "ci_C_last": ci[n_max],
             "matrix_C1": curves[1].tolist(),
             "matrix_C_last": curves[n_max].tolist(),
             "coordinates": ["t", "x1", "x2"],
             "orbit_len": orbit_len, "block": block}
    note = ("C_n is the max-abs entry of the coordinate cross-covariance "
            "matrix at lag n")
    return DiagnosticReport("mixing_report", PASS if ok else FAIL, stats, note)


# ---------------------------------------------------------------------------
# contraction on average


def avg_contraction_check(family, margin: float = 0.01) -> DiagnosticReport:
    """Mean log of the generators' global Lipschitz bounds, with a PASS
    margin keeping boundary families (rates -> 1) out."""
    fam = get_family(family)
    gens = fam.generators()
    logs = [math.log(g.lip) for g in gens]
    s = sum(logs) / len(logs)
    verdict = PASS if s < -margin else FAIL
    stats = {"mean_log_rate": s, "margin": margin,
             "rates": [g.lip for g in gens]}
    return DiagnosticReport("avg_contraction_check", verdict, stats)
