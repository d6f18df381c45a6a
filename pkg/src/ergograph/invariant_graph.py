"""Pullback invariant graph over the solenoid and its certification.

The graph value at a solenoid point is the limit of backward fiber
compositions f_{t_-1} o f_{t_-2} o ... applied to any start.  Convergence
is certified through tracked products of per-map global Lipschitz bounds:
the tail of the limit is within diam(X) * prod(lip) of the truncation, no
uniform contraction rate required.  Fiber sets, their upper
semicontinuity, bony structure, synchronization, and the invariance
identity gamma(G s) = f_t(gamma(s)) are probed on top of the same
machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._rng import make_rng
from .geometry import (DiagnosticReport, EmpiricalMeasure, FAIL, GridSet,
                       INCONCLUSIVE, PASS, SolenoidPoint, as_points, digest,
                       solenoid_metric)
from .fiber_family import get_family
from .skew_product import digit_stream_orbit, sample_solenoid


@dataclass
class GraphSample:
    """One certified graph evaluation."""

    s: SolenoidPoint
    gamma: np.ndarray
    depth_used: int
    tail_bound: float
    converged: bool


def backward_coords(t, digits, k: int = 8) -> np.ndarray:
    """(B, D) backward base coordinates from branch digits (exact divisions)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    digits = np.atleast_2d(np.asarray(digits))
    out = np.empty(digits.shape, dtype=np.float64)
    cur = t.copy()
    for j in range(digits.shape[1]):
        cur = (cur + digits[:, j]) / k
        out[:, j] = cur
    return out


def pullback_batch(family, t, digits, tol: float = 1e-8, start=None):
    """Vectorized certified pullback.

    Returns (gamma (B,2), depth_used (B,), tail_bound (B,), converged (B,)).
    Rows whose Lipschitz-product tail never drops below tol are flagged
    unconverged and evaluated at full depth with the achieved bound.
    """
    fam = get_family(family)
    coords = backward_coords(t, digits, fam.k)
    B, D = coords.shape
    lips = np.asarray(fam.lip_sup(coords.ravel()), dtype=np.float64).reshape(B, D)
    tails = fam.domain.diam * np.exp(np.cumsum(np.log(lips), axis=1))
    ok = tails < tol
    converged = ok.any(axis=1)
    depth_used = np.where(converged, ok.argmax(axis=1) + 1, D)
    tail_bound = tails[np.arange(B), depth_used - 1]

    x = np.tile(np.asarray(start if start is not None else fam.config.x0,
                           dtype=np.float64), (B, 1))
    for j in range(int(depth_used.max()), 0, -1):
        act = depth_used >= j
        x[act] = fam.f(coords[act, j - 1], x[act])
    return x, depth_used, tail_bound, converged


def pullback_gamma(family, s: SolenoidPoint, tol: float = 1e-8,
                   start=None) -> GraphSample:
    """Certified graph value at one solenoid point (see pullback_batch)."""
    g, d, tb, cv = pullback_batch(family, [s.t], [list(s.digits)], tol, start)
    return GraphSample(s=s, gamma=g[0], depth_used=int(d[0]),
                       tail_bound=float(tb[0]), converged=bool(cv[0]))


def graph_table(family, samples: list[GraphSample]) -> str:
    """CSV record ``t0,digest(digits),gamma_x1,gamma_x2,depth,tail``."""
    lines = ["t0,digits_digest,gamma_x1,gamma_x2,depth,tail"]
    for gs in samples:
        dg = digest(",".join(str(d) for d in gs.s.digits))
        lines.append(f"{gs.s.t:.17g},{dg},{gs.gamma[0]:.17g},"
                     f"{gs.gamma[1]:.17g},{gs.depth_used},{gs.tail_bound:.3e}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# fiber sets


def fiber_cloud(family, t: float, digits, depth: int, base_cloud=None,
                n_boundary: int = 64) -> np.ndarray:
    """Backward image of a domain-boundary cloud: approximates the fiber set.

    The fiber maps are diffeomorphisms, so the domain boundary maps onto the
    image boundary and the cloud brackets the true fiber set's extent.
    """
    fam = get_family(family)
    coords = backward_coords([t], [list(digits[:depth])], fam.k)[0]
    cloud = (np.vstack([fam.domain.boundary(n_boundary - 1),
                        [fam.domain.center]])
             if base_cloud is None else as_points(base_cloud).copy())
    for j in range(depth - 1, -1, -1):
        cloud = fam.f(coords[j], cloud)
    return cloud


def fiber_set(family, s: SolenoidPoint, depth: int = 200,
              checkpoints=(25, 50, 100, 200), n_boundary: int = 256) -> dict:
    """Fiber clouds at increasing truncation depths.

    Deeper truncations are subsets of shallower ones up to the certified
    composition tails; returns {depth: cloud} for nesting/diameter checks.
    """
    fam = get_family(family)
    checkpoints = sorted({min(c, depth, s.depth) for c in checkpoints})
    coords = backward_coords([s.t], [list(s.digits)], fam.k)[0]
    base = np.vstack([fam.domain.boundary(n_boundary - 1), [fam.domain.center]])
    out = {}
    for cp in checkpoints:
        cloud = base.copy()
        for j in range(cp - 1, -1, -1):
            cloud = fam.f(coords[j], cloud)
        out[cp] = cloud
    return out


def _cloud_diam(c: np.ndarray) -> float:
    d = c[:, None, :] - c[None, :, :]
    return float(np.sqrt((d * d).sum(-1)).max())


def fiber_diameters(family, t, digits, depth: int = 200,
                    n_boundary: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """(certified, observed) fiber-set diameter bounds for a batch of fibers."""
    fam = get_family(family)
    coords = backward_coords(t, digits, fam.k)[:, :depth]
    B = coords.shape[0]
    lips = np.asarray(fam.lip_sup(coords.ravel())).reshape(B, depth)
    certified = fam.domain.diam * np.exp(np.log(lips).sum(axis=1))
    base = fam.domain.boundary(n_boundary)
    C = base.shape[0]
    clouds = np.tile(base, (B, 1, 1)).reshape(B * C, 2)
    trep = np.repeat(np.arange(B), C)
    for j in range(depth - 1, -1, -1):
        clouds = fam.f(coords[trep, j], clouds)
    clouds = clouds.reshape(B, C, 2)
    observed = np.array([_cloud_diam(c) for c in clouds])
    return certified, observed


# ---------------------------------------------------------------------------
# scans and probes


def bony_scan(family, n_fibers: int = 200, depth: int = 200, seed: int = 0,
              diam_tol: float | None = None) -> DiagnosticReport:
    """Fraction of fibers that are still 'bones' (above diam_tol) at depth."""
    fam = get_family(family)
    h = fam.domain.diam / 1024.0
    diam_tol = 10.0 * h if diam_tol is None else diam_tol
    pts = sample_solenoid(n_fibers, depth=depth, seed=seed, k=fam.k)
    t = np.array([p.t for p in pts])
    digits = np.array([p.digits for p in pts])
    certified, observed = fiber_diameters(fam, t, digits, depth)
    small = certified < diam_tol
    frac_small = float(small.mean())
    edges = np.geomspace(max(certified.min(), 1e-16), max(certified.max(), 1e-15), 13)
    hist, _ = np.histogram(certified, bins=edges)
    verdict = PASS if frac_small >= 0.99 else FAIL
    stats = {"fraction_below_tol": frac_small, "diam_tol": diam_tol,
             "max_certified": float(certified.max()),
             "max_observed": float(observed.max()),
             "hist_edges": edges.tolist(), "hist_counts": hist.tolist(),
             "depth": depth, "n_fibers": n_fibers}
    return DiagnosticReport("bony_scan", verdict, stats)


def bony_histogram_csv(report: DiagnosticReport) -> str:
    lines = ["diam_bin,count"]
    edges = report.stats["hist_edges"]
    for lo, cnt in zip(edges[:-1], report.stats["hist_counts"]):
        lines.append(f"{lo:.6e},{cnt}")
    return "\n".join(lines) + "\n"


def usc_probe(family, s: SolenoidPoint, eps: float, n_neighbors: int = 8,
              depth: int = 200, delta0: float = 2.0 ** -4,
              delta_min: float = 2.0 ** -20, seed: int = 0,
              n_boundary: int = 64) -> DiagnosticReport:
    """Upper-semicontinuity probe at one solenoid point.

    Searches (by halving from delta0) for a delta such that every sampled
    neighbor within solenoid distance delta has its fiber set inside the
    eps-neighborhood of the probe's fiber set (directed cloud distance).
    """
    fam = get_family(family)
    h = fam.domain.diam / 1024.0
    if not eps > 4.0 * h:
        raise ValueError(f"eps must exceed 4 grid cells ({4 * h:.4g})")
    rng = make_rng(seed, 53)
    depth = min(depth, s.depth)
    ref = fiber_cloud(fam, s.t, s.digits, depth, n_boundary=n_boundary)
    delta = delta0
    while delta >= delta_min:
        worst = 0.0
        ok = True
        for _ in range(n_neighbors):
            s2 = _neighbor(s, delta, rng, fam.k)
            assert solenoid_metric(s2, s, n_terms=min(s.depth, s2.depth)) < delta
            cl = fiber_cloud(fam, s2.t, s2.digits, min(depth, s2.depth),
                             n_boundary=n_boundary)
            d = float(cdist(cl, ref).min(axis=1).max())
            worst = max(worst, d)
            if d > eps:
                ok = False
                break
        if ok:
            stats = {"delta": delta, "eps": eps, "worst_directed": worst,
                     "depth": depth, "n_neighbors": n_neighbors}
            return DiagnosticReport("usc_probe", PASS, stats)
        delta *= 0.5
    stats = {"delta": 0.0, "eps": eps, "delta_min": delta_min, "depth": depth}
    return DiagnosticReport("usc_probe", FAIL, stats,
                            "no admissible delta found down to delta_min")


def _neighbor(s: SolenoidPoint, delta: float, rng, k: int) -> SolenoidPoint:
    """Random solenoid point within distance delta of s (by construction).

    When the jittered base coordinate wraps past 0 or 1 the kept digit
    prefix must borrow/carry, otherwise every backward coordinate jumps by
    1/k and the point lands far away on the solenoid.
    """
    L = min(s.depth, max(4, int(math.ceil(-math.log2(max(delta, 1e-30)))) + 2))
    dt = (rng.random() - 0.5) * delta / 2.0
    raw = s.t + dt
    carry = int(math.floor(raw))
    t2 = raw - carry
    prefix = list(s.digits[:L])
    for j in range(len(prefix)):
        if carry == 0:
            break
        v = prefix[j] + carry
        carry = int(math.floor(v / k))
        prefix[j] = v - carry * k
    # a surviving carry falls into the random tail region, which is free
    tail = tuple(int(v) for v in rng.integers(0, k, size=s.depth - L))
    return SolenoidPoint(t=t2, digits=tuple(prefix) + tail, k=k)


def sync_test(family, n_triples: int = 100, tol: float = 1e-8,
              max_steps: int = 5000, seed: int = 0) -> DiagnosticReport:
    """Master–slave synchronization: two fiber starts under a shared base orbit."""
    fam = get_family(family)
    rng = make_rng(seed, 59)
    t, _ = digit_stream_orbit(max_steps, rng, fam.k, n_orbits=n_triples)
    xa = fam.domain.sample(n_triples, rng)
    xb = fam.domain.sample(n_triples, rng)
    sync_at = np.full(n_triples, -1, dtype=np.int64)
    for step in range(max_steps):
        d = np.linalg.norm(xa - xb, axis=1)
        newly = (d < tol) & (sync_at < 0)
        sync_at[newly] = step
        if (sync_at >= 0).all():
            break
        ts = t[:, step]
        xa = fam.f(ts, xa)
        xb = fam.f(ts, xb)
    frac = float((sync_at >= 0).mean())
    med = float(np.median(sync_at[sync_at >= 0])) if frac > 0 else math.inf
    verdict = PASS if frac >= 0.99 else FAIL
    stats = {"fraction_synced": frac, "median_steps": med, "tol": tol,
             "max_steps": max_steps, "n_triples": n_triples}
    return DiagnosticReport("sync_test", verdict, stats)


def invariance_residual(family, n_samples: int = 100, tol: float = 1e-6,
                        seed: int = 0, sample_depth: int = 1024,
                        pull_tol: float = 1e-8) -> DiagnosticReport:
    """|gamma(G s) - f_t(gamma(s))| over sampled solenoid points."""
    fam = get_family(family)
    pts = sample_solenoid(n_samples, depth=sample_depth, seed=seed, k=fam.k)
    t = np.array([p.t for p in pts])
    digits = np.array([p.digits for p in pts])
    g, _, tail, conv = pullback_batch(fam, t, digits, pull_tol)

    # shift forward: push the branch digit of t onto the history
    d0 = np.floor(t * fam.k).astype(np.int64)
    t_next = t * fam.k - d0
    digits_next = np.hstack([d0[:, None], digits])
    g_next, _, tail2, conv2 = pullback_batch(fam, t_next, digits_next, pull_tol)

    residual = np.linalg.norm(g_next - fam.f(t, g), axis=1)
    worst = float(residual.max())
    all_conv = bool(conv.all() and conv2.all())
    verdict = PASS if (worst < tol and all_conv) else FAIL
    stats = {"max_residual": worst, "tol": tol, "n_samples": n_samples,
             "max_tail_bound": float(max(tail.max(), tail2.max())),
             "all_certified": all_conv}
    return DiagnosticReport("invariance_residual", verdict, stats)


def base_fiber_cloud(family, B: GridSet, t: float = 0.0, n_branches: int = 10_000,
                     depth: int = 64, seed: int = 0,
                     covering: DiagnosticReport | None = None) -> DiagnosticReport:
    """Coverage of B by pullback branch points over a fixed base coordinate.

    Only meaningful conditional on a covering certificate; without one the
    scan reports INCONCLUSIVE.
    """
    fam = get_family(family)
    if covering is None or covering.verdict != PASS:
        return DiagnosticReport(
            "base_fiber_cloud", INCONCLUSIVE,
            {"reason": "no covering certificate"},
            "coverage claim is conditional on a verified covering")
    rng = make_rng(seed, 61)
    digits = rng.integers(0, fam.k, size=(n_branches, depth))
    # tol 0 forces evaluation at full depth along every branch
    g, _, _, _ = pullback_batch(fam, np.full(n_branches, t), digits, tol=0.0)
    hit = B.like()
    hit.add_points(g)
    covered = float((hit.mask & B.mask).sum() / max(B.count, 1))
    verdict = PASS if covered >= 0.9 else FAIL
    stats = {"covered_fraction": covered, "n_branches": n_branches,
             "depth": depth, "cells_B": B.count}
    return DiagnosticReport("base_fiber_cloud", verdict, stats)
