"""The plateau family of planar fiber maps.

A single weakly contracting base map ``g`` (strict contraction toward an
attracting fixed point ``x0`` with neutral horizontal tangency) is blended
with a strength bump ``eta`` and a plateau angle function ``theta``:

    h_tau = (rotation by 2*pi*tau about z) o g_{eta(tau)}
    f_t   = h_{theta(t)}

``theta`` is constant (equal to ``t_i``) on 2m arcs ``I_i`` of the base
circle and interpolates monotonically across the gaps, so each arc carries
a frozen generator map; ``eta`` vanishes at tau in {0, 1/2, 1} and sits at
its full strength ``delta`` away from those angles, making half the
generators uniform contractions and leaving the other half merely weak.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .geometry import (DiagnosticReport, DiskDomain, FAIL, PASS,
                       as_point, as_points, frac)

# center-profile shape constants: s(u) = PROFILE_A*u + PROFILE_B*u/sqrt(1+(u/PROFILE_W)^2)
# strictly increasing, s'(0) = A + B = 1 (neutral tangency), s' >= A everywhere
PROFILE_A = 0.2
PROFILE_B = 0.8
PROFILE_W = 0.2


def smoothstep(s):
    """C^2 quintic ramp: 0 -> 1 on [0, 1] with flat ends."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def profile(u):
    u = np.asarray(u, dtype=np.float64)
    r = u / PROFILE_W
    return PROFILE_A * u + PROFILE_B * u / np.sqrt(1.0 + r * r)


def profile_deriv(u):
    u = np.asarray(u, dtype=np.float64)
    r2 = (u / PROFILE_W) ** 2
    return PROFILE_A + PROFILE_B * (1.0 + r2) ** -1.5


def profile_inverse(w):
    """Solve profile(u) = w by damped Newton; monotone, derivative >= PROFILE_A."""
    w = np.asarray(w, dtype=np.float64)
    u = w / (PROFILE_A + PROFILE_B)  # start at the unit-slope guess
    for _ in range(80):
        d = (profile(u) - w) / profile_deriv(u)
        u = u - d
        if np.all(np.abs(d) <= 1e-16 * (1.0 + np.abs(u))):
            break
    return u


class ConfigError(ValueError):
    """Configuration rejection with a JSON-pointer to the offending field."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        self.message = message
        super().__init__(f"{pointer}: {message}")


# JSON field names, in canonical order (the greek letters are literal keys)
_FIELDS = ("m", "k", "λ", "λ′", "δ", "β", "n_i", "t_i", "I_i", "x0", "z", "domain")


@dataclass(frozen=True)
class FamilyConfig:
    """Frozen parameter set for the plateau family."""

    m: int = 2
    k: int = 8
    lam: float = 0.5
    lam_prime: float = 0.9
    delta: float = 0.1
    beta: float = (math.sqrt(5.0) - 1.0) / 2.0
    n_i: tuple[int, ...] = (0, 2)
    t_i: tuple[float, ...] = ()
    I_i: tuple[tuple[float, float], ...] = ()
    x0: tuple[float, float] = (1.0, 0.0)
    z: tuple[float, float] = (0.0, 0.0)
    domain: DiskDomain = field(default_factory=DiskDomain)

    def __post_init__(self):
        if not self.t_i:
            object.__setattr__(self, "t_i", _derive_plateaus(self))
        if not self.I_i:
            half = 1.0 / (2.0 * self.k)
            object.__setattr__(
                self, "I_i", tuple((t - half, t + half) for t in self.t_i)
            )
        _validate(self)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "m": self.m, "k": self.k, "λ": self.lam, "λ′": self.lam_prime,
            "δ": self.delta, "β": self.beta, "n_i": list(self.n_i),
            "t_i": list(self.t_i), "I_i": [list(ab) for ab in self.I_i],
            "x0": list(self.x0), "z": list(self.z),
            "domain": {"center": list(self.domain.center),
                       "radius": self.domain.radius},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FamilyConfig":
        unknown = set(d) - set(_FIELDS)
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"/{key}", "unknown configuration field")
        kw = {}
        if "m" in d:
            kw["m"] = _expect_int(d["m"], "/m")
        if "k" in d:
            kw["k"] = _expect_int(d["k"], "/k")
        for js, py in (("λ", "lam"), ("λ′", "lam_prime"), ("δ", "delta"), ("β", "beta")):
            if js in d:
                kw[py] = _expect_num(d[js], f"/{js}")
        if "n_i" in d:
            kw["n_i"] = tuple(_expect_int(v, f"/n_i/{i}") for i, v in enumerate(d["n_i"]))
        if "t_i" in d:
            kw["t_i"] = tuple(_expect_num(v, f"/t_i/{i}") for i, v in enumerate(d["t_i"]))
        if "I_i" in d:
            kw["I_i"] = tuple(
                (_expect_num(ab[0], f"/I_i/{i}/0"), _expect_num(ab[1], f"/I_i/{i}/1"))
                for i, ab in enumerate(d["I_i"])
            )
        for key in ("x0", "z"):
            if key in d:
                v = d[key]
                if not (isinstance(v, (list, tuple)) and len(v) == 2):
                    raise ConfigError(f"/{key}", "expected a pair [x, y]")
                kw[key] = (_expect_num(v[0], f"/{key}/0"), _expect_num(v[1], f"/{key}/1"))
        if "domain" in d:
            dom = d["domain"]
            if not isinstance(dom, dict) or set(dom) - {"center", "radius"}:
                raise ConfigError("/domain", "expected {center: [x, y], radius: r}")
            c = dom.get("center", (0.0, 0.0))
            kw["domain"] = DiskDomain(
                (_expect_num(c[0], "/domain/center/0"), _expect_num(c[1], "/domain/center/1")),
                _expect_num(dom.get("radius", 3.0), "/domain/radius"),
            )
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FamilyConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("/", f"invalid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("/", "top level must be an object")
        return cls.from_dict(d)


def _expect_num(v, ptr: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(ptr, f"expected a number, got {type(v).__name__}")
    return float(v)


def _expect_int(v, ptr: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(ptr, f"expected an integer, got {type(v).__name__}")
    return v


def _derive_plateaus(cfg: FamilyConfig) -> tuple[float, ...]:
    if len(cfg.n_i) != cfg.m:
        raise ConfigError("/n_i", f"expected {cfg.m} rotation multiples")
    first = [float(frac(n * cfg.beta)) for n in cfg.n_i]
    return tuple(first + [float(frac(t + 0.5)) for t in first])


def _validate(cfg: FamilyConfig):
    if cfg.m < 1:
        raise ConfigError("/m", "need at least one strong/weak pair")
    if cfg.k != 4 * cfg.m:
        raise ConfigError("/k", f"base expansion factor must equal 4m = {4 * cfg.m}")
    if not (0.0 < cfg.lam < 1.0):
        raise ConfigError("/λ", "vertical contraction must lie in (0, 1)")
    if not (0.0 < cfg.delta < 0.25):
        raise ConfigError("/δ", "bump strength must lie in (0, 1/4)")
    if abs(cfg.lam_prime - (1.0 - cfg.delta)) > 1e-12:
        raise ConfigError("/λ′", "strong horizontal rate must equal 1 − δ")
    if cfg.lam >= cfg.lam_prime:
        raise ConfigError("/λ", "vertical rate must be the strongest: λ < λ′")
    n = 2 * cfg.m
    if len(cfg.t_i) != n:
        raise ConfigError("/t_i", f"expected {n} plateau angles")
    if cfg.t_i[0] != 0.0:
        raise ConfigError("/t_i/0", "the first plateau angle must be exactly 0")
    for i in range(1, n):
        if not cfg.t_i[i] > cfg.t_i[i - 1]:
            raise ConfigError(f"/t_i/{i}", "plateau angles must be strictly increasing")
    if cfg.t_i[-1] >= 1.0:
        raise ConfigError(f"/t_i/{n - 1}", "plateau angles must lie in [0, 1)")
    for i in range(cfg.m):
        j = cfg.m + i
        if abs(cfg.t_i[j] - frac(cfg.t_i[i] + 0.5)) > 1e-12:
            raise ConfigError(f"/t_i/{j}",
                              "second-half plateau angles must be the first half "
                              "shifted by exactly 1/2")
    # every plateau other than the two neutral angles {0, 1/2} must sit where
    # the strength bump is at full height, else its generator is neither
    # uniformly contracting nor angle-frozen
    d = cfg.delta
    for i in range(n):
        if i in (0, cfg.m):
            continue
        t = cfg.t_i[i]
        if not (d <= t <= 0.5 - d or 0.5 + d <= t <= 1.0 - d):
            raise ConfigError(
                f"/t_i/{i}",
                f"plateau angle {t!r} violates the plateau-ordering constraint: "
                f"angles other than 0 and 1/2 must lie in the full-strength bands "
                f"[δ, 1/2−δ] ∪ [1/2+δ, 1−δ] with δ = {d!r}",
            )
    # arcs: centered on the plateau angles, width 1/k, pairwise disjoint
    half = 1.0 / (2.0 * cfg.k)
    if len(cfg.I_i) != n:
        raise ConfigError("/I_i", f"expected {n} arcs")
    for i, (a, b) in enumerate(cfg.I_i):
        if abs(a - (cfg.t_i[i] - half)) > 1e-12 or abs(b - (cfg.t_i[i] + half)) > 1e-12:
            raise ConfigError(f"/I_i/{i}",
                              f"arc must be the plateau angle ± {half!r}")
    for i in range(n):
        gap = (cfg.t_i[i + 1] - cfg.t_i[i]) if i + 1 < n else (1.0 + cfg.t_i[0] - cfg.t_i[i])
        if gap <= 2.0 * half:
            raise ConfigError(f"/I_i/{i}", "arcs must be pairwise disjoint")
    if tuple(cfg.z) != tuple(cfg.domain.center):
        raise ConfigError("/z", "rotation center must coincide with the domain center "
                          "(rotations must preserve the domain)")
    if not cfg.domain.contains([cfg.x0])[0]:
        raise ConfigError("/x0", "fixed point must lie inside the domain")


def default_config() -> FamilyConfig:
    return FamilyConfig()


# ---------------------------------------------------------------------------
# piecewise scaffolding shared by eta and theta


class _Piecewise:
    """Monotone C^2 piecewise map: plateaus + quintic ramps between them."""

    def __init__(self, edges: Sequence[float], kinds: Sequence[int],
                 v0: Sequence[float], v1: Sequence[float]):
        self.edges = np.asarray(edges, dtype=np.float64)
        self.kinds = np.asarray(kinds, dtype=np.int8)       # 0 plateau, 1 ramp
        self.v0 = np.asarray(v0, dtype=np.float64)
        self.v1 = np.asarray(v1, dtype=np.float64)
        # plain-python mirrors for the scalar hot path
        self._edges_l = [float(e) for e in self.edges]
        self._kinds_l = [int(v) for v in self.kinds]
        self._v0_l = [float(v) for v in self.v0]
        self._v1_l = [float(v) for v in self.v1]

    def scalar(self, t: float) -> float:
        """Pure-float evaluation, bit-compatible with the vector path."""
        t = t % 1.0
        i = bisect.bisect_right(self._edges_l, t) - 1
        last = len(self._kinds_l) - 1
        if i > last:
            i = last
        elif i < 0:
            i = 0
        if self._kinds_l[i] == 0:
            return self._v0_l[i]
        a = self._edges_l[i]
        s = (t - a) / (self._edges_l[i + 1] - a)
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
        ss = s * s * s * (s * (6.0 * s - 15.0) + 10.0)
        return self._v0_l[i] + (self._v1_l[i] - self._v0_l[i]) * ss

    def __call__(self, t):
        t = frac(t)
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(t)
        idx = np.clip(np.searchsorted(self.edges, t, side="right") - 1,
                      0, len(self.kinds) - 1)
        a, b = self.edges[idx], self.edges[idx + 1]
        out = self.v0[idx].copy()       # plateau value, exact
        ramp = self.kinds[idx] == 1
        if ramp.any():
            s = (t[ramp] - a[ramp]) / (b[ramp] - a[ramp])
            out[ramp] = self.v0[idx[ramp]] + (
                self.v1[idx[ramp]] - self.v0[idx[ramp]]) * smoothstep(s)
        return out[0] if scalar else out


def _build_eta(delta: float) -> _Piecewise:
    d = delta
    edges = [0.0, d, 0.5 - d, 0.5, 0.5 + d, 1.0 - d, 1.0]
    kinds = [1, 0, 1, 1, 0, 1]
    v0 = [0.0, d, d, 0.0, d, d]
    v1 = [d, d, 0.0, d, d, 0.0]
    return _Piecewise(edges, kinds, v0, v1)


def _build_theta(cfg: FamilyConfig) -> _Piecewise:
    half = 1.0 / (2.0 * cfg.k)
    t = cfg.t_i
    edges, kinds, v0, v1 = [0.0], [], [], []
    # right half of the first arc
    edges.append(half); kinds.append(0); v0.append(0.0); v1.append(0.0)
    for i in range(1, len(t)):
        edges.append(t[i] - half); kinds.append(1); v0.append(t[i - 1]); v1.append(t[i])
        edges.append(t[i] + half); kinds.append(0); v0.append(t[i]); v1.append(t[i])
    # wrap ramp up to 1, then the left half of the first arc at value 1
    edges.append(1.0 - half); kinds.append(1); v0.append(t[-1]); v1.append(1.0)
    edges.append(1.0); kinds.append(0); v0.append(1.0); v1.append(1.0)
    return _Piecewise(edges, kinds, v0, v1)


# ---------------------------------------------------------------------------
# the family


@dataclass(frozen=True)
class GeneratorMap:
    """One frozen plateau map f_i = h_{t_i}, with fast scalar stepping."""

    index: int
    tau: float
    strength: float
    cos_a: float
    sin_a: float
    lam: float
    x0: tuple[float, float]
    z: tuple[float, float]

    def apply(self, pts) -> np.ndarray:
        pts = as_points(pts)
        u = pts[:, 0] - self.x0[0]
        v = pts[:, 1] - self.x0[1]
        gx = self.x0[0] + (1.0 - self.strength) * profile(u) - self.z[0]
        gy = self.x0[1] + self.lam * v - self.z[1]
        return np.column_stack([self.z[0] + self.cos_a * gx - self.sin_a * gy,
                                self.z[1] + self.sin_a * gx + self.cos_a * gy])

    def apply_scalar(self, x: float, y: float) -> tuple[float, float]:
        # pure-float hot path for long sequential orbits
        u = x - self.x0[0]
        r = u / PROFILE_W
        su = PROFILE_A * u + PROFILE_B * u / math.sqrt(1.0 + r * r)
        gx = self.x0[0] + (1.0 - self.strength) * su - self.z[0]
        gy = self.x0[1] + self.lam * (y - self.x0[1]) - self.z[1]
        return (self.z[0] + self.cos_a * gx - self.sin_a * gy,
                self.z[1] + self.sin_a * gx + self.cos_a * gy)

    @property
    def lip(self) -> float:
        return max((1.0 - self.strength), self.lam)


class PlateauFamily:
    """Concrete fiber family; every evaluation routes through eta/theta."""

    def __init__(self, config: FamilyConfig | None = None):
        self.config = config or default_config()
        cfg = self.config
        self.domain = cfg.domain
        self.k = cfg.k
        self.m = cfg.m
        self._eta = _build_eta(cfg.delta)
        self._theta = _build_theta(cfg)
        self._x0 = np.asarray(cfg.x0)
        self._z = np.asarray(cfg.z)
        self._x0f = (float(cfg.x0[0]), float(cfg.x0[1]))
        self._zf = (float(cfg.z[0]), float(cfg.z[1]))
        self._lamf = float(cfg.lam)

    # -- building blocks ----------------------------------------------------

    def eta(self, tau):
        return self._eta(tau)

    def theta(self, t):
        return self._theta(t)

    def g_eval(self, c, x):
        """Profile map g_c about x0: (u, v) -> ((1−c)s(u), λv)."""
        x = as_points(x)
        c = np.asarray(c, dtype=np.float64)
        u = x[:, 0] - self._x0[0]
        v = x[:, 1] - self._x0[1]
        return np.column_stack([self._x0[0] + (1.0 - c) * profile(u),
                                self._x0[1] + self.config.lam * v])

    def g_jac(self, c, x):
        x = as_points(x)
        c = np.asarray(c, dtype=np.float64)
        a = (1.0 - c) * profile_deriv(x[:, 0] - self._x0[0])
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = a
        out[..., 1, 1] = self.config.lam
        return out

    def h_eval(self, tau, x):
        """h_tau = rotation by 2*pi*tau about z, after g_{eta(tau)}."""
        x = as_points(x)
        tau = np.asarray(tau, dtype=np.float64)
        g = self.g_eval(self.eta(tau), x)
        ang = 2.0 * np.pi * (tau % 1.0)
        ca, sa = np.cos(ang), np.sin(ang)
        px = g[:, 0] - self._z[0]
        py = g[:, 1] - self._z[1]
        return np.column_stack([self._z[0] + ca * px - sa * py,
                                self._z[1] + sa * px + ca * py])

    def h_jac(self, tau, x):
        x = as_points(x)
        tau = np.asarray(tau, dtype=np.float64)
        c = self.eta(tau)
        a = (1.0 - c) * profile_deriv(x[:, 0] - self._x0[0])
        lam = self.config.lam
        ang = 2.0 * np.pi * (tau % 1.0)
        ca, sa = np.cos(ang), np.sin(ang)
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = ca * a
        out[..., 0, 1] = -sa * lam
        out[..., 1, 0] = sa * a
        out[..., 1, 1] = ca * lam
        return out

    def h_inv(self, tau, y):
        """Exact-reduction inverse: unrotate, then invert the profile map."""
        y = as_points(y)
        tau = np.asarray(tau, dtype=np.float64)
        c = self.eta(tau)
        ang = 2.0 * np.pi * (tau % 1.0)
        ca, sa = np.cos(ang), np.sin(ang)
        px = y[:, 0] - self._z[0]
        py = y[:, 1] - self._z[1]
        qx = self._z[0] + ca * px + sa * py
        qy = self._z[1] - sa * px + ca * py
        u = profile_inverse((qx - self._x0[0]) / (1.0 - c))
        v = (qy - self._x0[1]) / self.config.lam
        return np.column_stack([self._x0[0] + u, self._x0[1] + v])

    # -- the fiber maps -----------------------------------------------------

    def f(self, t, x):
        return self.h_eval(self.theta(t), x)

    def jac(self, t, x):
        return self.h_jac(self.theta(t), x)

    def f_inv(self, t, y):
        return self.h_inv(self.theta(t), y)

    def step_with_jac(self, t, x) -> tuple[np.ndarray, np.ndarray]:
        """(f_t(x), Df_t(x)) sharing the angle/strength lookups; batch only."""
        x = as_points(x)
        tau = self.theta(t)
        c = self.eta(tau)
        lam = self.config.lam
        u = x[:, 0] - self._x0[0]
        v = x[:, 1] - self._x0[1]
        gx = self._x0[0] + (1.0 - c) * profile(u)
        gy = self._x0[1] + lam * v
        ang = 2.0 * np.pi * (tau % 1.0)
        ca, sa = np.cos(ang), np.sin(ang)
        px = gx - self._z[0]
        py = gy - self._z[1]
        out = np.column_stack([self._z[0] + ca * px - sa * py,
                               self._z[1] + sa * px + ca * py])
        a = (1.0 - c) * profile_deriv(u)
        J = np.empty(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = ca * a
        J[..., 0, 1] = -sa * lam
        J[..., 1, 0] = sa * a
        J[..., 1, 1] = ca * lam
        return out, J

    def f_scalar(self, t: float, x: float, y: float) -> tuple[float, float]:
        """Pure-float fiber step for long sequential orbits."""
        tau = self._theta.scalar(t)
        c = self._eta.scalar(tau)
        u = x - self._x0f[0]
        r = u / PROFILE_W
        su = PROFILE_A * u + PROFILE_B * u / math.sqrt(1.0 + r * r)
        gx = self._x0f[0] + (1.0 - c) * su
        gy = self._x0f[1] + self._lamf * (y - self._x0f[1])
        ang = 2.0 * math.pi * (tau % 1.0)
        ca, sa = math.cos(ang), math.sin(ang)
        px, py = gx - self._zf[0], gy - self._zf[1]
        return (self._zf[0] + ca * px - sa * py,
                self._zf[1] + sa * px + ca * py)

    def lip_sup(self, t):
        """Certified global Lipschitz bound of f_t on the (convex) domain."""
        c = self.eta(self.theta(t))
        return np.maximum(1.0 - c, self.config.lam)

    def sigma_min(self, t):
        """Lower bound for the smallest singular value of Df_t on the domain."""
        c = self.eta(self.theta(t))
        umax = self.domain.radius + abs(self._x0[0] - self.domain.center[0]) \
            + abs(self._x0[1] - self.domain.center[1])
        return np.minimum((1.0 - c) * profile_deriv(umax), self.config.lam)

    # -- frozen generators --------------------------------------------------

    def generators(self) -> list[GeneratorMap]:
        cfg = self.config
        out = []
        for i, ti in enumerate(cfg.t_i):
            c = float(self.eta(ti))
            ang = 2.0 * math.pi * ti
            out.append(GeneratorMap(index=i, tau=ti, strength=c,
                                    cos_a=math.cos(ang), sin_a=math.sin(ang),
                                    lam=cfg.lam, x0=cfg.x0, z=cfg.z))
        return out

    # -- fixed points -------------------------------------------------------

    def fixed_point(self, tau: float, tol: float = 1e-13,
                    max_evals: int = 1_000_000) -> np.ndarray:
        """Unique fixed point of h_tau, from z; successive step < tol.

        Newton accelerates the weakly contracting Picard iteration; at the
        neutral angles the Newton system degenerates near the root, and the
        iteration falls back to Picard polish (whose step is then far below
        tol because the residual is cubic in the remaining error).
        """
        p = np.asarray(self.config.z, dtype=np.float64).copy()
        evals = 0
        for _ in range(50):  # Picard warm-up into the Newton basin
            q = self.h_eval(tau, p[None, :])[0]
            evals += 1
            step = np.linalg.norm(q - p)
            p = q
            if step < tol:
                return p
        for _ in range(200):
            J = self.h_jac(tau, p[None, :])[0]
            F = self.h_eval(tau, p[None, :])[0] - p
            evals += 1
            A = J - np.eye(2)
            det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
            if abs(det) < 1e-13:
                break
            d = np.array([A[1, 1] * F[0] - A[0, 1] * F[1],
                          -A[1, 0] * F[0] + A[0, 0] * F[1]]) / det
            p = p - d
            if np.linalg.norm(d) < 0.5 * tol:
                break
        while evals < max_evals:  # Picard polish; certifies the successive step
            q = self.h_eval(tau, p[None, :])[0]
            evals += 1
            step = np.linalg.norm(q - p)
            p = q
            if step < tol:
                return p
        raise RuntimeError(f"fixed point iteration hit the {max_evals} eval cap "
                           f"(tau={tau!r})")

    def prototype_jacobian(self, c: float) -> np.ndarray:
        """Jacobian of the unrotated profile map g_c at its fixed point x0."""
        return self.g_jac(c, self._x0[None, :])[0]


@lru_cache(maxsize=32)
def _family_for(config: FamilyConfig) -> PlateauFamily:
    return PlateauFamily(config)


def get_family(config: FamilyConfig | PlateauFamily | None = None) -> PlateauFamily:
    if isinstance(config, PlateauFamily) or (
            config is not None and hasattr(config, "f")):
        return config
    return _family_for(config or default_config())


# -- functional front-ends (scalar friendly) --------------------------------

def eta(config, tau):
    return get_family(config).eta(tau)


def theta(config, t):
    return get_family(config).theta(t)


def h_eval(config, tau, x):
    fam = get_family(config)
    single = np.ndim(x) == 1
    out = fam.h_eval(tau, x)
    return out[0] if single else out


def fiber_eval(config, t, x):
    fam = get_family(config)
    single = np.ndim(x) == 1
    out = fam.f(t, x)
    return out[0] if single else out


def fiber_jacobian(config, t, x):
    fam = get_family(config)
    single = np.ndim(x) == 1
    out = fam.jac(t, x)
    return out[0] if single else out


def fiber_inverse(config, t, y):
    fam = get_family(config)
    single = np.ndim(y) == 1
    out = fam.f_inv(t, y)
    return out[0] if single else out


def fixed_point(config, tau, tol: float = 1e-13):
    return get_family(config).fixed_point(tau, tol=tol)


def clearance(family) -> float:
    """Gap between the domain boundary and all fiber images (boundary sampled)."""
    fam = get_family(family)
    bd = fam.domain.boundary(2048)
    cz = np.asarray(fam.domain.center)
    worst = np.inf
    for t in np.linspace(0.0, 1.0, 257):
        img = fam.f(t, bd)
        worst = min(worst, fam.domain.radius - np.hypot(*(img - cz).T).max())
    return float(worst)


def contraction_report(family, n_pairs: int = 100_000, seed: int = 0) -> DiagnosticReport:
    """Sampled certification of weak contraction and strong-fiber uniformity.

    Checks: (a) no sampled pair is expanded beyond ratio 1 + 1e-12 by any
    fiber map; (b) on fibers at full bump strength the Jacobian norm stays
    below max(λ′, λ) + 1e-9.
    """
    from ._rng import make_rng

    fam = get_family(family)
    rng = make_rng(seed, 101)
    x = fam.domain.sample(n_pairs, rng)
    y = fam.domain.sample(n_pairs, rng)
    t = rng.random(n_pairs)
    d0 = np.linalg.norm(x - y, axis=1)
    keep = d0 > 1e-9
    d1 = np.linalg.norm(fam.f(t[keep], x[keep]) - fam.f(t[keep], y[keep]), axis=1)
    ratio = d1 / d0[keep]
    max_ratio = float(ratio.max())

    cfg = fam.config
    strong_t = _strong_band_samples(fam, rng, 4096)
    if strong_t.size:
        xs = fam.domain.sample(strong_t.size, rng)
        J = fam.jac(strong_t, xs)
        sup_j = float(np.linalg.norm(J, ord=2, axis=(1, 2)).max())
    else:
        sup_j = math.nan
    lam_cap = max(cfg.lam_prime, cfg.lam) + 1e-9

    ok = max_ratio <= 1.0 + 1e-12 and (not strong_t.size or sup_j <= lam_cap)
    gap = clearance(fam)
    stats = {"max_ratio": max_ratio, "n_pairs": int(keep.sum()),
             "strong_fiber_sup_jacobian": sup_j, "strong_fiber_cap": lam_cap,
             "clearance": gap}
    verdict = PASS if ok and gap >= 0.5 else FAIL
    notes = "" if verdict == PASS else "contraction or clearance bound violated"
    return DiagnosticReport("contraction_report", verdict, stats, notes)


def _strong_band_samples(fam: PlateauFamily, rng, n: int) -> np.ndarray:
    """Base points whose fiber runs at full bump strength."""
    t = rng.random(4 * n)
    c = fam.eta(fam.theta(t))
    t = t[np.isclose(c, np.max(c), atol=1e-15)] if np.max(c) > 0 else t[:0]
    return t[:n]


def jacobian_consistency_report(family, n_samples: int = 1000, seed: int = 0,
                                fd_step: float = 1e-6,
                                tol: float = 1e-6) -> DiagnosticReport:
    """Analytic Jacobian vs central finite differences at random (t, x)."""
    from ._rng import make_rng

    fam = get_family(family)
    rng = make_rng(seed, 109)
    t = rng.random(n_samples)
    x = fam.domain.sample(n_samples, rng)
    J = fam.jac(t, x)
    ex = np.array([fd_step, 0.0])
    ey = np.array([0.0, fd_step])
    fd = np.empty_like(J)
    fd[:, :, 0] = (fam.f(t, x + ex) - fam.f(t, x - ex)) / (2 * fd_step)
    fd[:, :, 1] = (fam.f(t, x + ey) - fam.f(t, x - ey)) / (2 * fd_step)
    rel = (np.linalg.norm(fd - J, axis=(1, 2))
           / np.linalg.norm(J, axis=(1, 2)))
    worst = float(rel.max())
    stats = {"max_rel_error": worst, "tol": tol, "n_samples": n_samples}
    return DiagnosticReport("jacobian_consistency", PASS if worst < tol else FAIL,
                            stats)


def definition_eigen_report(family, tol: float = 1e-9) -> DiagnosticReport:
    """Eigenvalues of the two prototype Jacobians at the distinguished point:
    weak prototype {1, λ}, uniform prototype {λ′, λ}."""
    fam = get_family(family)
    cfg = fam.config
    checks = {}
    worst = 0.0
    for label, c, expect in (("weak", 0.0, (1.0, cfg.lam)),
                             ("uniform", cfg.delta, (cfg.lam_prime, cfg.lam))):
        ev = np.sort(np.linalg.eigvals(fam.prototype_jacobian(c)).real)[::-1]
        err = float(np.abs(ev - np.array(expect)).max())
        worst = max(worst, err)
        checks[label] = {"eigenvalues": ev.tolist(), "expected": list(expect),
                         "error": err}
    stats = {"checks": checks, "max_error": worst, "tol": tol}
    return DiagnosticReport("definition_eigen", PASS if worst < tol else FAIL,
                            stats)
