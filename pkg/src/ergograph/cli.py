"""Command-line front end: every diagnostic as a subcommand over a JSON
experiment config, emitting deterministic JSON/CSV/PGM artifacts.

Exit codes: 0 iff all verdicts PASS, 1 if any FAIL, 2 on INCONCLUSIVE or
config validation errors.  Heavy imports are deferred so ``--threads`` /
``ERGOGRAPH_THREADS`` can cap BLAS pools before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

_COMMANDS = ("family-check", "attractor", "chaos", "covering", "cusp",
             "graph", "bony", "usc", "sync", "lyapunov", "birkhoff",
             "mixing", "perturb", "render")

# per-command parameter blocks (config "params" entries and flag overrides
# must use these keys)
_DEFAULTS = {
    "family-check": {"n": 100_000},
    "attractor": {"max_iters": 200, "mode": "generators", "tol": None},
    "chaos": {"n": 100_000, "burn_in": 1000},
    "covering": {"center": None, "radius": None, "n_candidates": 48,
                 "grid_n": 512},
    "cusp": {"depth": 50, "n_side": 128},
    "graph": {"n": 256, "depth": 1024, "tol": 1e-8},
    "bony": {"n": 200, "depth": 200, "tol": None},
    "usc": {"n": 20, "depth": 200, "eps": None},
    "sync": {"n": 100, "tol": 1e-8, "max_steps": 5000},
    "lyapunov": {"n": 100_000, "starts": 50},
    "birkhoff": {"n": 100_000, "starts": 50, "burn": 1000},
    "mixing": {"n": 1_000_000, "lags": 50},
    "perturb": {"eps": 1e-3, "modes": 4, "budget": 1.0},
    "render": {},
}

_FLAG_KEYS = {"n": "n", "depth": "depth", "tol": "tol", "eps": "eps"}


def _parse_args(argv):
    p = argparse.ArgumentParser(
        prog="ergograph",
        description="skew-product attractor and invariant-graph diagnostics")
    sub = p.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} diagnostics")
        if name == "perturb":
            sp.add_argument("action", nargs="?", default="suite",
                            choices=("suite", "check"))
        if name == "render":
            sp.add_argument("artifact", help="gridset PGM or measure CSV")
        sp.add_argument("--config", default=None, help="experiment JSON")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--n", type=int, default=None)
        sp.add_argument("--depth", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--eps", type=float, default=None)
    return p.parse_args(argv)


def _apply_threads(n):
    if n is None:
        n = os.environ.get("ERGOGRAPH_THREADS")
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


class ExperimentConfig:
    """family + grid resolution + master seed + per-command parameter blocks.

    Round-trips through JSON losslessly; the canonical-JSON hash is stamped
    into every artifact.
    """

    _KNOWN = ("family", "grid_n", "master_seed", "out_dir", "params")

    def __init__(self, family=None, grid_n: int = 1024, master_seed: int = 0,
                 out_dir: str = ".", params: dict | None = None):
        from .fiber_family import FamilyConfig
        self.family = family if family is not None else FamilyConfig()
        self.grid_n = int(grid_n)
        self.master_seed = int(master_seed)
        self.out_dir = out_dir
        self.params = params or {}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        from .fiber_family import ConfigError, FamilyConfig
        for key in d:
            if key not in cls._KNOWN:
                raise ConfigError(f"/{key}", "unknown experiment field")
        try:
            fam = FamilyConfig.from_dict(d.get("family", {}))
        except ConfigError as e:
            raise ConfigError("/family" + e.pointer, e.message) from None
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("/params", "must be an object")
        for cmd, block in params.items():
            if cmd not in _DEFAULTS:
                raise ConfigError(f"/params/{cmd}", "unknown subcommand block")
            if not isinstance(block, dict):
                raise ConfigError(f"/params/{cmd}", "must be an object")
            for k in block:
                if k not in _DEFAULTS[cmd]:
                    raise ConfigError(f"/params/{cmd}/{k}",
                                      "unknown parameter")
        return cls(fam, d.get("grid_n", 1024), d.get("master_seed", 0),
                   d.get("out_dir", "."), params)

    def to_dict(self) -> dict:
        return {"family": self.family.to_dict(), "grid_n": self.grid_n,
                "master_seed": self.master_seed, "out_dir": self.out_dir,
                "params": self.params}

    def hash(self) -> str:
        from .geometry import digest
        return digest(json.dumps(self.to_dict(), sort_keys=True,
                                 ensure_ascii=False))

    def block(self, command: str, args=None) -> dict:
        from .fiber_family import ConfigError
        out = dict(_DEFAULTS[command])
        out.update(self.params.get(command, {}))
        if args is not None:
            for flag, key in _FLAG_KEYS.items():
                v = getattr(args, flag, None)
                if v is None:
                    continue
                if key not in out:
                    raise ConfigError(f"/params/{command}/{key}",
                                      f"--{flag} not applicable here")
                out[key] = v
        return out


class Artifacts:
    """Writes artifacts with the {config hash, seed, version} provenance."""

    def __init__(self, out_dir: str, config_hash: str, seed: int):
        from . import __version__
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.provenance = (f"config={config_hash} seed={seed} "
                           f"version={__version__}")
        self.config_hash = config_hash
        self.seed = seed
        self.version = __version__
        self.written: list[str] = []

    def path(self, name: str) -> Path:
        return self.dir / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(f"# {self.provenance}\n{text}")
        self.written.append(name)
        return p

    def write_bytes(self, name: str, data: bytes) -> Path:
        p = self.path(name)
        p.write_bytes(data)
        self.written.append(name)
        return p

    def write_report(self, command: str, reports, exit_code: int) -> Path:
        from .geometry import _jsonable
        payload = {
            "command": command, "config_hash": self.config_hash,
            "seed": self.seed, "version": self.version,
            "exit_code": exit_code,
            "reports": [{"name": r.name, "verdict": r.verdict,
                         "stats": _jsonable(r.stats), "notes": r.notes}
                        for r in reports],
        }
        name = command.replace("-", "_") + "_report.json"
        p = self.path(name)
        p.write_text(json.dumps(payload, indent=2, sort_keys=True,
                                ensure_ascii=False) + "\n")
        self.written.append(name)
        return p


def _exit_code(reports) -> int:
    from .geometry import FAIL, INCONCLUSIVE
    verdicts = [r.verdict for r in reports]
    if FAIL in verdicts:
        return 1
    if INCONCLUSIVE in verdicts:
        return 2
    return 0


# ---------------------------------------------------------------------------
# subcommand bodies (each returns a list of DiagnosticReports)


def _cmd_family_check(cfg, fam, seed, p, art):
    from .ergodics import avg_contraction_check
    from .fiber_family import (contraction_report, definition_eigen_report,
                               jacobian_consistency_report)
    return [jacobian_consistency_report(fam, seed=seed),
            definition_eigen_report(fam),
            contraction_report(fam, n_pairs=p["n"], seed=seed),
            avg_contraction_check(fam)]


def _cmd_attractor(cfg, fam, seed, p, art):
    from .attractor import attractor_iterate
    K, rep = attractor_iterate(fam, grid_n=cfg.grid_n, mode=p["mode"],
                               max_iters=p["max_iters"], tol=p["tol"])
    art.write_bytes("attractor.pgm", K.to_pgm(comment=art.provenance))
    hist = rep.stats.get("history", [])
    csv = "iter,hausdorff_step\n" + "".join(
        f"{i},{v:.17g}\n" for i, v in enumerate(hist))
    art.write_text("attractor_history.csv", csv)
    return [rep]


def _cmd_chaos(cfg, fam, seed, p, art):
    from .attractor import chaos_game
    from .geometry import DiagnosticReport, PASS, digest
    mu = chaos_game(fam, n=p["n"], burn_in=p["burn_in"], seed=seed)
    csv = mu.to_csv()
    art.write_text("chaos_points.csv", csv)
    art.write_bytes("chaos_density.pgm",
                    _density_pgm(mu, fam, cfg.grid_n, art.provenance))
    stats = {"n": len(mu.points), "mean": mu.mean().tolist(),
             "points_digest": digest(csv)}
    return [DiagnosticReport("chaos_game", PASS, stats)]


def _cmd_covering(cfg, fam, seed, p, art):
    from .attractor import covering_search, covering_verify, disk_grid
    if p["center"] is not None and p["radius"] is not None:
        B = disk_grid(fam.domain, p["grid_n"], float(p["center"][0]),
                      float(p["center"][1]), float(p["radius"]))
        return [covering_verify(fam, B)]
    return [covering_search(fam, seed=seed, n_candidates=p["n_candidates"],
                            grid_n=p["grid_n"])]


def _cmd_cusp(cfg, fam, seed, p, art):
    from .attractor import cusp_regions
    rep = cusp_regions(fam, depth=p["depth"], n_side=p["n_side"])
    csv = "depth,diameter\n" + "".join(
        f"{i},{v:.17g}\n" for i, v in enumerate(rep.stats["diams"]))
    art.write_text("cusp_diameters.csv", csv)
    return [rep]


def _cmd_graph(cfg, fam, seed, p, art):
    from .geometry import DiagnosticReport, FAIL, PASS
    from .invariant_graph import GraphSample, graph_table, pullback_batch
    from .skew_product import sample_solenoid
    import numpy as np
    pts = sample_solenoid(p["n"], depth=p["depth"], seed=seed, k=fam.k)
    t = np.array([q.t for q in pts])
    digits = np.array([q.digits for q in pts])
    g, dep, tail, conv = pullback_batch(fam, t, digits, p["tol"])
    samples = [GraphSample(q, g[i], int(dep[i]), float(tail[i]),
                           bool(conv[i])) for i, q in enumerate(pts)]
    art.write_text("graph_samples.csv", graph_table(fam, samples))
    frac = float(conv.mean())
    stats = {"n": p["n"], "converged_fraction": frac,
             "max_tail_bound": float(tail.max()),
             "median_depth": float(np.median(dep))}
    return [DiagnosticReport("graph_table", PASS if frac == 1.0 else FAIL,
                             stats)]


def _cmd_bony(cfg, fam, seed, p, art):
    from .invariant_graph import bony_histogram_csv, bony_scan
    rep = bony_scan(fam, n_fibers=p["n"], depth=p["depth"], seed=seed,
                    **({"diam_tol": p["tol"]} if p["tol"] else {}))
    art.write_text("bony_histogram.csv", bony_histogram_csv(rep))
    return [rep]


def _cmd_usc(cfg, fam, seed, p, art):
    from .geometry import DiagnosticReport, FAIL, PASS
    from .invariant_graph import usc_probe
    from .skew_product import sample_solenoid
    eps = p["eps"] if p["eps"] is not None else 1e-2 * fam.domain.diam
    pts = sample_solenoid(p["n"], depth=max(400, p["depth"]), seed=seed,
                          k=fam.k)
    deltas, bad = [], 0
    for i, s in enumerate(pts):
        r = usc_probe(fam, s, eps=eps, depth=p["depth"], seed=seed + i)
        deltas.append(r.stats.get("delta"))
        bad += 0 if r.ok else 1
    stats = {"n": p["n"], "eps": eps, "failures": bad, "deltas": deltas}
    return [DiagnosticReport("usc_scan", PASS if bad == 0 else FAIL, stats)]


def _cmd_sync(cfg, fam, seed, p, art):
    from .invariant_graph import sync_test
    return [sync_test(fam, n_triples=p["n"], tol=p["tol"],
                      max_steps=p["max_steps"], seed=seed)]


def _cmd_lyapunov(cfg, fam, seed, p, art):
    from .ergodics import lyapunov_top
    rep = lyapunov_top(fam, n_starts=p["starts"], n_steps=p["n"], seed=seed)
    csv = "start,lambda_hat\n" + "".join(
        f"{i},{v:.17g}\n" for i, v in enumerate(rep.stats["per_start"]))
    art.write_text("lyapunov_starts.csv", csv)
    return [rep]


def _cmd_birkhoff(cfg, fam, seed, p, art):
    from .ergodics import (birkhoff_average, default_srb_observables,
                           srb_independence)
    obs = default_srb_observables()
    avg, se = birkhoff_average(fam, obs, n_starts=p["starts"], n_steps=p["n"],
                               burn=p["burn"], seed=seed)
    lines = ["observable,start,average,se"]
    for i, o in enumerate(obs):
        for j in range(avg.shape[1]):
            lines.append(f"{o.name},{j},{avg[i, j]:.17g},{se[i, j]:.17g}")
    art.write_text("birkhoff_averages.csv", "\n".join(lines) + "\n")
    return [srb_independence(fam, observables=obs, n_starts=p["starts"],
                             n_steps=p["n"], seed=seed)]


def _cmd_mixing(cfg, fam, seed, p, art):
    from .ergodics import mixing_report
    rep = mixing_report(fam, n_max=p["lags"], orbit_len=p["n"], seed=seed)
    csv = "lag,C\n" + "".join(
        f"{i},{v:.17g}\n" for i, v in enumerate(rep.stats["curve"]))
    art.write_text("mixing_curve.csv", csv)
    return [rep]


def _cmd_perturb(cfg, fam, seed, p, art, action="suite"):
    from .geometry import DiagnosticReport, FAIL, PASS
    from .perturbation import (PerturbationSpec, PerturbationError,
                               c1_distance_parts, dominated_splitting_check,
                               perturb_family, robustness_suite)
    spec = PerturbationSpec(eps=p["eps"], seed=seed, modes=p["modes"])
    try:
        pert = perturb_family(fam, spec)
    except PerturbationError as e:
        return [DiagnosticReport("perturb_validity", FAIL,
                                 {"eps": p["eps"]}, str(e))]
    if action == "check":
        parts = c1_distance_parts(fam, pert, seed=seed)
        return [DiagnosticReport("perturb_validity", PASS, {"eps": p["eps"]}),
                DiagnosticReport("c1_distance", PASS, parts),
                dominated_splitting_check(fam, seed=seed),
                dominated_splitting_check(pert, seed=seed)]
    stages, summary = robustness_suite(fam, spec, seed=seed,
                                       budget=p["budget"])
    return [*stages.values(), summary]


def _cmd_render(cfg, fam, seed, p, art, artifact=None):
    from .geometry import (DiagnosticReport, EmpiricalMeasure, GridSet, PASS,
                           digest)
    src = Path(artifact)
    data = src.read_bytes()
    if src.suffix == ".pgm":
        out = GridSet.from_pgm(data).to_pgm(comment=art.provenance)
    else:
        mu = EmpiricalMeasure.from_csv(data.decode())
        out = _density_pgm(mu, fam, cfg.grid_n, art.provenance)
    name = src.stem + "_render.pgm"
    art.write_bytes(name, out)
    return [DiagnosticReport("render", PASS,
                             {"source": src.name, "output": name,
                              "digest": digest(out)})]


def _density_pgm(mu, fam, grid_n: int, provenance: str) -> bytes:
    """Log-density heat map of a weighted point measure over the domain."""
    import numpy as np
    from .geometry import write_pgm
    dom = fam.domain
    h = dom.diam / grid_n
    x0 = dom.center[0] - dom.radius
    y0 = dom.center[1] - dom.radius
    ix = np.clip(((mu.points[:, 0] - x0) / h).astype(int), 0, grid_n - 1)
    iy = np.clip(((mu.points[:, 1] - y0) / h).astype(int), 0, grid_n - 1)
    acc = np.zeros((grid_n, grid_n))
    np.add.at(acc, (iy, ix), mu.weights)
    top = acc.max()
    if top > 0:
        img = np.rint(255.0 * np.log1p(1000.0 * acc / top)
                      / math.log1p(1000.0)).astype(np.uint8)
    else:
        img = np.zeros_like(acc, dtype=np.uint8)
    return write_pgm(img[::-1],
                     comment=f"{provenance} density x0={x0!r} y0={y0!r} h={h!r}")


_BODIES = {
    "family-check": _cmd_family_check,
    "attractor": _cmd_attractor,
    "chaos": _cmd_chaos,
    "covering": _cmd_covering,
    "cusp": _cmd_cusp,
    "graph": _cmd_graph,
    "bony": _cmd_bony,
    "usc": _cmd_usc,
    "sync": _cmd_sync,
    "lyapunov": _cmd_lyapunov,
    "birkhoff": _cmd_birkhoff,
    "mixing": _cmd_mixing,
    "perturb": _cmd_perturb,
    "render": _cmd_render,
}


def run(command: str, args) -> int:
    from .fiber_family import get_family
    if args.config:
        with open(args.config) as f:
            cfg = ExperimentConfig.from_dict(json.load(f))
    else:
        cfg = ExperimentConfig()
    fam = get_family(cfg.family)
    seed = args.seed if args.seed is not None else cfg.master_seed
    out_dir = args.out if args.out is not None else cfg.out_dir
    p = cfg.block(command, args)
    art = Artifacts(out_dir, cfg.hash(), seed)
    extra = {}
    if command == "perturb":
        extra["action"] = args.action
    if command == "render":
        extra["artifact"] = args.artifact
    reports = _BODIES[command](cfg, fam, seed, p, art, **extra)
    code = _exit_code(reports)
    art.write_report(command, reports, code)
    for r in reports:
        print(f"{r.name}: {r.verdict}")
    return code


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    _apply_threads(args.threads)
    from .fiber_family import ConfigError
    try:
        return run(args.command, args)
    except ConfigError as e:
        print(f"config error at {e.pointer}: {e.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
