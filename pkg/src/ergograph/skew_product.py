"""Skew product over the expanding circle map, and its solenoid extension.

Forward dynamics: (t, x) -> (k*t mod 1, f_t(x)).  The natural extension
augments the base point with its backward branch digits; one forward step
pushes the current branch digit onto the history, one backward step pops it
and applies the fiber inverse.

Long-horizon statistics never iterate ``k*t mod 1`` in floating point:
multiplying by k = 2^3 shifts three mantissa bits out per step, so every
double collapses onto the dyadic orbit of 0 within ~60 steps.  Instead,
orbits of the (Lebesgue) base measure are simulated by sliding a window
over an i.i.d. base-k digit stream, which realizes the exact symbolic model
of the base map; consecutive window values satisfy the base recursion up to
one ulp.
"""

from __future__ import annotations

import math

import numpy as np

from ._rng import make_rng
from .geometry import SolenoidPoint, as_point, as_points, frac
from .fiber_family import get_family

#: digits kept in the sliding reconstruction window (error k^-W < 1 ulp)
DIGIT_WINDOW = 20


def expand_map(t, k: int = 8):
    """The base circle map t -> k*t mod 1, literal float semantics."""
    return frac(np.multiply(t, k))


def step_F(family, t, x):
    """One forward step of the skew product; returns (t', x')."""
    fam = get_family(family)
    single = np.ndim(x) == 1
    x = as_points(x)
    t_next = expand_map(t, fam.k)
    x_next = fam.f(t, x)
    return (t_next, x_next[0] if single else x_next)


def step_G(family, s: SolenoidPoint, x):
    """Forward step of the solenoid extension: push the branch digit."""
    fam = get_family(family)
    d = int(math.floor(s.t * fam.k))
    t_next = s.t * fam.k - d  # exact: k is a power of two
    s_next = SolenoidPoint(t=t_next, digits=(d,) + s.digits, k=fam.k)
    return s_next, fam.f(np.float64(s.t), as_points(x))[0]


def step_G_inv(family, s: SolenoidPoint, x):
    """Backward step: pop the leading digit, apply the fiber inverse."""
    fam = get_family(family)
    if not s.digits:
        raise ValueError("no backward digits left to pop")
    t_prev = (s.t + s.digits[0]) / fam.k
    s_prev = SolenoidPoint(t=t_prev, digits=s.digits[1:], k=fam.k)
    return s_prev, fam.f_inv(np.float64(t_prev), as_points(x))[0]


def sample_solenoid(n: int, depth: int = 64, seed: int = 0,
                    k: int = 8) -> list[SolenoidPoint]:
    """n independent solenoid points: uniform base, uniform branch digits."""
    rng = make_rng(seed, 7)
    ts = rng.random(n)
    digs = rng.integers(0, k, size=(n, depth))
    return [SolenoidPoint(t=float(t), digits=tuple(int(v) for v in row), k=k)
            for t, row in zip(ts, digs)]


# ---------------------------------------------------------------------------
# digit-stream base orbits


def digit_stream_orbit(n_steps: int, rng: np.random.Generator, k: int = 8,
                       n_orbits: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Base orbits under the symbolic model; returns (t, digits).

    ``t`` has shape (n_orbits, n_steps); row-wise, t[:, j+1] equals the
    base image of t[:, j] up to one ulp, and each t[:, j] is uniform on
    [0, 1).  ``digits`` (n_orbits, n_steps + window) is the underlying
    stream: digits[:, j] is the branch digit consumed at step j.
    """
    w = DIGIT_WINDOW
    digits = rng.integers(0, k, size=(n_orbits, n_steps + w), dtype=np.int8)
    pw = np.float64(k) ** -np.arange(1, w + 1)
    # accumulate shifted slices instead of materializing (n, steps, w) windows
    t = np.zeros((n_orbits, n_steps))
    for i in range(w, 0, -1):  # smallest contributions first
        t += pw[i - 1] * digits[:, i:i + n_steps]
    return t, digits


def orbit_table(family, t0: float, x0, n: int) -> str:
    """CSV orbit record ``n,t,x1,x2`` under literal float iteration."""
    fam = get_family(family)
    x = as_point(x0).copy()
    t = float(t0)
    lines = ["n,t,x1,x2"]
    for i in range(n + 1):
        lines.append(f"{i},{t:.17g},{x[0]:.17g},{x[1]:.17g}")
        t, x = step_F(fam, t, x)
        t = float(t)
    return "\n".join(lines) + "\n"


def check_base_uniformity(n: int = 20_000, seed: int = 0, k: int = 8):
    """KS statistic of sampled base coordinates against the uniform law,
    plus per-digit frequency z-scores; used by the sampling self-tests."""
    from scipy import stats

    pts = sample_solenoid(n, depth=16, seed=seed, k=k)
    ts = np.array([p.t for p in pts])
    ks = stats.kstest(ts, "uniform")
    digs = np.array([p.digits for p in pts])
    freq = np.bincount(digs.ravel(), minlength=k) / digs.size
    se = math.sqrt((1.0 / k) * (1 - 1.0 / k) / digs.size)
    z = (freq - 1.0 / k) / se
    return ks, z
