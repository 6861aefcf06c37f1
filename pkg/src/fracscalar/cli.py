"""Command-line driver: configuration, runs, and on-disk results.

Configuration comes from an optional flat ``key = value`` file and from
command-line flags; flags win. Every float written to disk uses 17
significant digits so values round-trip exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from . import asymptotics, bubble, spectral
from .certificates import certify
from .errors import ConfigError, FracScalarError, InvalidParams, NoConvergence
from .minimizer import Bubble, Gaussian, MinimizeOptions, ground_state, minimize
from .problem import ProblemParams, Regime, eps_star

log = logging.getLogger(__name__)

COMMANDS = ("solve", "sweep", "certify", "bubble", "epsstar", "limit")

SUMMARY_COLUMNS = ("eps", "S_eps", "u_center", "lambda_eps", "norm2sq", "normp_p", "normq_q",
                   "poho_res", "nehari_res", "energy_res", "asymmetry", "mono_viol",
                   "decay_exp", "decay_r2", "converged", "iterations", "wall_s")

EXIT_OK, EXIT_HARD, EXIT_PARTIAL = 0, 1, 2

# Named desk-scale setups. "1d" is the fast default. The 3-D core radii come
# from core-size studies at the smallest eps of each sweep: larger cores
# resolve better but stop converging there.
PRESETS: Dict[str, Dict[str, object]] = {
    "1d": dict(N=1, s=0.45, p=3.0, q=6.0, eps=0.01, M=4096, L=60.0,
               eps_max=0.05, eps_min=0.002, count=6),
    "critical3d": dict(N=3, s=0.5, p=3.0, q=5.0, eps=0.01, M=128, L=30.0, core_radius=0.75,
                       eps_max=0.19, eps_min=0.006, count=6),
    "subcritical3d": dict(N=3, s=0.5, p=2.5, q=4.0, eps=0.01, M=128, L=30.0, core_radius=0.75,
                          eps_max=0.05, eps_min=0.002, count=5),
    "supercritical3d": dict(N=3, s=0.5, p=4.0, q=6.0, eps=0.01, M=128, L=30.0, core_radius=1.171875,
                            eps_max=0.05, eps_min=0.002, count=5),
}


def fmt(x) -> str:
    """17-significant-digit text for a float; empty for None or NaN."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return format(x, ".17g")


@dataclass
class RunConfig:
    command: str = "solve"
    preset: str = "1d"
    N: int = 1
    s: float = 0.45
    p: float = 3.0
    q: float = 6.0
    eps: float = 0.01
    M: int = 4096
    L: float = 60.0
    eps_list: Optional[Tuple[float, ...]] = None
    eps_max: float = 0.05
    eps_min: float = 0.002
    count: int = 6
    init: str = "gaussian"
    init_width: Optional[float] = None
    core_radius: Optional[float] = None
    bubble_lam: float = 1.0
    warm_start: bool = True
    max_iterations: int = 20000
    rel_tol: float = 1e-9
    gradient_tol: float = 1e-7
    seed: int = 0
    output_dir: str = "out"
    emit_fields: bool = False
    emit_plots: bool = True
    record_wall_time: bool = False
    field_path: Optional[str] = None

    @property
    def params(self) -> ProblemParams:
        return ProblemParams(int(self.N), self.s, self.p, self.q, self.eps)

    @property
    def grid(self) -> spectral.Grid:
        return spectral.Grid(int(self.N), int(self.M), self.L)

    @property
    def options(self) -> MinimizeOptions:
        return MinimizeOptions(max_iterations=self.max_iterations, rel_tol=self.rel_tol,
                               gradient_tol=self.gradient_tol, seed=self.seed,
                               core_radius=self.core_radius)

    @property
    def init_spec(self):
        """None selects the solver's default Gaussian sized to the core radius."""
        if self.init == "bubble":
            return Bubble(lam=self.bubble_lam)
        if self.init_width is None:
            return None
        return Gaussian(width=self.init_width)

    def eps_values(self) -> List[float]:
        if self.eps_list:
            return [float(e) for e in self.eps_list]
        return [float(e) for e in np.geomspace(self.eps_max, self.eps_min, self.count)]

    def echo(self) -> Dict[str, object]:
        out = asdict(self)
        if out["eps_list"] is not None:
            out["eps_list"] = list(out["eps_list"])
        return out


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, raw: str, where: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"{where}: unknown key {name!r}")
    t = types[name]
    raw = raw.strip()
    try:
        if name == "eps_list":
            vals = tuple(float(v) for v in raw.replace(",", " ").split())
            if not vals:
                raise ValueError("empty list")
            return vals
        if name == "field_path":
            return raw or None
        if t == "Optional[float]":
            return None if raw.lower() in ("", "none") else float(raw)
        if t in ("bool", bool):
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if t in ("int", int):
            return int(raw)
        if t in ("float", float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {name}: {exc}") from None


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, object]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        out[key] = _coerce(key, value, f"{source}:{lineno}")
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fracscalar",
                 description="Ground states of (-Δ)^s u + eps u = u^{p-1} - u^{q-1} on a periodic box.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat key = value file; flags override it")
    ap.add_argument("--preset", choices=sorted(PRESETS))
    for name in ("N", "M", "count", "max_iterations", "seed"):
        ap.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int)
    for name in ("s", "p", "q", "eps", "L", "eps_max", "eps_min", "init_width", "core_radius",
                 "bubble_lam", "rel_tol", "gradient_tol"):
        ap.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    ap.add_argument("--eps-list", dest="eps_list", type=str,
                    help="comma separated, strictly decreasing")
    ap.add_argument("--init", choices=("gaussian", "bubble"))
    ap.add_argument("--output-dir", dest="output_dir")
    ap.add_argument("--field", dest="field_path", help="field file for the certify command")
    for name in ("warm_start", "emit_fields", "emit_plots", "record_wall_time"):
        flag = name.replace("_", "-")
        ap.add_argument(f"--{flag}", dest=name, action="store_true", default=None)
        ap.add_argument(f"--no-{flag}", dest=name, action="store_false", default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def parse_config(argv: Sequence[str] = None, text: str = None) -> RunConfig:
    """Build a RunConfig from flags (and an optional config file or text).

    Precedence: flags > config file > preset > built-in defaults.
    """
    ns = build_parser().parse_args(list(argv) if argv is not None else None)
    file_vals: Dict[str, object] = {}
    if ns.config:
        try:
            file_text = Path(ns.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {ns.config}: {exc}") from None
        file_vals.update(parse_config_text(file_text, ns.config))
    if text is not None:
        file_vals.update(parse_config_text(text))
    flag_vals = {k: v for k, v in vars(ns).items()
                 if v is not None and k not in ("config", "verbose")}
    if "eps_list" in flag_vals:
        flag_vals["eps_list"] = _coerce("eps_list", flag_vals["eps_list"], "--eps-list")
    preset = flag_vals.get("preset", file_vals.get("preset", "1d"))
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    merged: Dict[str, object] = dict(PRESETS[preset])
    merged.update(file_vals)
    merged.update(flag_vals)
    merged["preset"] = preset
    cfg = RunConfig(**merged)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    if not cfg.p > 2.0:
        raise ConfigError(f"p must exceed 2, got p={cfg.p:g}")
    if not cfg.q > cfg.p:
        raise ConfigError(f"q must exceed p, got p={cfg.p:g}, q={cfg.q:g}")
    es = eps_star(cfg.p, cfg.q)
    if cfg.command == "epsstar":
        return
    try:
        cfg.params
        cfg.grid
    except (InvalidParams, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.command in ("solve", "certify") and not 0.0 < cfg.eps < es:
        raise ConfigError(f"eps = {cfg.eps:g} must lie in (0, eps_*) with eps_* = {es:.10g}")
    if cfg.command == "sweep":
        if cfg.eps_list is None:
            if not cfg.eps_max > cfg.eps_min > 0:
                raise ConfigError("a geometric sweep needs eps_max > eps_min > 0")
            if cfg.count < 4:
                raise ConfigError("a sweep needs count >= 4")
        vals = cfg.eps_values()
        if len(vals) < 4:
            raise ConfigError("a sweep needs at least 4 eps values")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sweep eps values must be strictly decreasing")
        if vals[0] >= es or vals[-1] <= 0:
            raise ConfigError(f"sweep eps values must lie in (0, eps_*) with eps_* = {es:.10g}")
    if cfg.command == "certify" and not cfg.field_path:
        raise ConfigError("certify needs --field PATH")
    if cfg.init not in ("gaussian", "bubble"):
        raise ConfigError(f"init must be gaussian or bubble, got {cfg.init!r}")


class _Outputs:
    """Single writer for everything a run puts on disk; tracks hashes."""

    def __init__(self, root: Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output_dir {root} is not writable: {exc}") from None
        self.hashes: Dict[str, str] = {}

    def _track(self, rel: str):
        data = (self.root / rel).read_bytes()
        self.hashes[rel] = hashlib.sha256(data).hexdigest()

    def text(self, rel: str, content: str):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content)
        self._track(rel)

    def field(self, rel: str, f: spectral.Field):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        spectral.write_field(path, f)
        self._track(rel)

    def table(self, rel: str, header: Sequence[str], rows: Sequence[Sequence]):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
        self.text(rel, buf.getvalue())


def summary_row(rec: asymptotics.SweepRecord, record_wall_time: bool) -> List[object]:
    c = rec.certificate
    decay = c.decay if c is not None else None
    return [
        rec.eps, rec.s_eps, rec.u_center, rec.lambda_eps,
        rec.norms.get("norm2sq"), rec.norms.get("normp_p"), rec.norms.get("normq_q"),
        c.pohozaev_res if c else None, c.nehari_res if c else None,
        c.energy_level_res if c else None, c.asymmetry if c else None,
        c.monotonicity_violation if c else None,
        decay.exponent if decay else None, decay.r_squared if decay else None,
        rec.converged if rec.error is None else False,
        rec.iterations,
        rec.wall_time if record_wall_time else None,
    ]


def _profile_rows(f: spectral.Field):
    prof = spectral.radialize(f)
    return [(r, v) for r, v in zip(prof.radii, prof.values)]


def _plot_script(data_rel: str, xcol: int, ycol: int, xlabel: str, ylabel: str,
                 title: str, png: str, logscale: bool = True) -> str:
    """gnuplot script that renders a two-column view of a CSV file."""
    lines = [
        "set datafile separator ','",
        "set key off",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if logscale:
        lines.append("set logscale xy")
    lines += [
        "set terminal pngcairo size 800,600",
        f"set output '{png}'",
        f"plot '{data_rel}' every ::1 using {xcol}:{ycol} with linespoints pt 7",
    ]
    return "\n".join(lines) + "\n"


class Runner:
    def __init__(self, cfg: RunConfig, stdout=None):
        self.cfg = cfg
        self.out = _Outputs(Path(cfg.output_dir))
        self.stdout = stdout or sys.stdout
        self.timings: Dict[str, float] = {}
        self.notes: Dict[str, object] = {}

    def say(self, msg: str):
        print(msg, file=self.stdout)

    def run(self) -> int:
        t0 = time.perf_counter()
        code = getattr(self, "cmd_" + self.cfg.command)()
        self.timings["total"] = time.perf_counter() - t0
        self.write_manifest(code)
        return code

    # commands

    def cmd_epsstar(self) -> int:
        value = eps_star(self.cfg.p, self.cfg.q)
        self.say(fmt(value))
        self.out.text("epsstar.txt", f"p={fmt(self.cfg.p)}\nq={fmt(self.cfg.q)}\neps_star={fmt(value)}\n")
        return EXIT_OK

    def cmd_bubble(self) -> int:
        cfg = self.cfg
        grid = cfg.grid
        c = bubble.bubble_constant(grid.dim, cfg.s)
        sc = bubble.compute_S_star(grid, cfg.s, strict=False)
        ef = bubble.emden_fowler_residual(grid, cfg.s, sc.value)
        self.say(f"c_N_s = {fmt(c)}")
        self.say(f"S_star = {fmt(sc.value)}")
        self.say(f"self_consistency = {fmt(sc.self_consistency)}")
        self.say(f"emden_fowler_residual = {fmt(ef)}")
        u1 = bubble.sample_bubble(grid, 1.0, cfg.s, "U")
        self.out.table("u1_profile.csv", ("r", "U1"), _profile_rows(u1))
        self.out.text("bubble.txt", "".join(f"{k}={fmt(v)}\n" for k, v in (
            ("c_N_s", c), ("S_star", sc.value), ("self_consistency", sc.self_consistency),
            ("emden_fowler_residual", ef))))
        if cfg.emit_fields:
            self.out.field("fields/u1.frsf", u1)
        if cfg.emit_plots:
            self.out.text("plots/u1_profile.gp", _plot_script(
                "../u1_profile.csv", 1, 2, "r", "U_1(r)", "bubble profile", "u1_profile.png",
                logscale=False))
        return EXIT_OK if sc.self_consistency <= bubble.SELF_CONSISTENCY_LIMIT else EXIT_PARTIAL

    def cmd_solve(self) -> int:
        cfg = self.cfg
        params, grid = cfg.params, cfg.grid
        t = time.perf_counter()
        res = minimize(params, grid, cfg.init_spec, cfg.options)
        rec = asymptotics._record(params, res, t)
        self._emit_records([rec])
        self.say(f"S_eps = {fmt(rec.s_eps)}  u(0) = {fmt(rec.u_center)}  "
                 f"converged = {res.converged}  iterations = {res.iterations}")
        return EXIT_OK if res.converged else EXIT_PARTIAL

    def cmd_certify(self) -> int:
        cfg = self.cfg
        params = cfg.params
        u = spectral.read_field(cfg.field_path)
        if u.grid.dim != params.N:
            raise ConfigError(f"field dimension {u.grid.dim} does not match N = {params.N}")
        # a ground state has ||u||^2 = S^{N/2s}; w is u shrunk by S^{1/2s}
        hs = spectral.hs_seminorm_sq(u, params.s)
        s_eps = hs ** (2.0 * params.s / params.N)
        w = u.dilated(s_eps ** (-1.0 / (2.0 * params.s)))
        w_prime = (asymptotics.rescaled_minimizer(w, params)
                   if params.regime is Regime.SUBCRITICAL else None)
        rep = certify(u, w, s_eps, params, w_prime=w_prime)
        text = f"S_eps={fmt(s_eps)}\n" + rep.to_text()
        self.out.text("certificate.txt", text)
        self.say(text.rstrip())
        return EXIT_OK

    def cmd_limit(self) -> int:
        cfg = self.cfg
        params, grid = cfg.params, cfg.grid
        lim = asymptotics.solve_limit_problem(params, grid, cfg.options, cfg.init_spec)
        prof = lim.profile
        self.out.table("limit_profile.csv", ("r", "value"), _profile_rows(prof))
        lines = [f"regime={params.regime.value}\n", f"center={fmt(prof.center)}\n"]
        if lim.level is not None:
            lines.append(f"level={fmt(lim.level)}\n")
        self.out.text("limit.txt", "".join(lines))
        if cfg.emit_fields:
            self.out.field("fields/limit.frsf", prof)
        self.say("".join(lines).rstrip())
        ok = lim.minimizer is None or lim.minimizer.converged
        return EXIT_OK if ok else EXIT_PARTIAL

    def cmd_sweep(self) -> int:
        cfg = self.cfg
        study = asymptotics.sweep(cfg.params, cfg.eps_values(), cfg.grid, cfg.options,
                                  init=cfg.init_spec, warm_start=cfg.warm_start,
                                  limit_init=cfg.init_spec)
        self._emit_records(study.records)
        self._emit_study(study)
        for name, (slope, icpt, r2) in sorted(study.fits.items()):
            self.say(f"fit {name}: slope={fmt(slope)} intercept={fmt(icpt)} r2={fmt(r2)}")
        partial = any(r.error is not None or not r.converged for r in study.records)
        return EXIT_PARTIAL if partial else EXIT_OK

    # emission

    def _emit_records(self, records):
        cfg = self.cfg
        rows = [summary_row(r, cfg.record_wall_time) for r in records]
        self.out.table("summary.csv", SUMMARY_COLUMNS, rows)
        for i, r in enumerate(records):
            self.timings[f"record_{i}"] = r.wall_time
            if r.certificate is not None:
                head = f"eps={fmt(r.eps)}\nS_eps={fmt(r.s_eps)}\n"
                self.out.text(f"certificates/record_{i:02d}.txt", head + r.certificate.to_text())
            if r.error is not None:
                self.notes[f"record_{i}_error"] = r.error
            if cfg.emit_fields and r.ground is not None:
                self.out.field(f"fields/u_record_{i:02d}.frsf", r.ground)

    def _emit_study(self, study: asymptotics.ScalingStudy):
        cfg = self.cfg
        lines = [f"regime={study.regime.value}\n"]
        for name, (slope, icpt, r2) in sorted(study.fits.items()):
            lines += [f"{name}_slope={fmt(slope)}\n", f"{name}_intercept={fmt(icpt)}\n",
                      f"{name}_r2={fmt(r2)}\n"]
        for key, value in sorted(study.reference.items()):
            if isinstance(value, (int, float, np.floating)) and value is not None:
                lines.append(f"{key}={fmt(value)}\n")
        self.out.text("fits.txt", "".join(lines))
        extra_keys = sorted({k for r in study.successful for k in r.extras})
        rows = [[r.eps] + [r.extras.get(k) for k in extra_keys] for r in study.successful]
        self.out.table("regime_quantities.csv", ["eps"] + extra_keys, rows)
        if not cfg.emit_plots:
            return
        quantities = [("u_center", 3), ("S_eps", 2)]
        if study.regime is Regime.CRITICAL:
            quantities.append(("lambda_eps", 4))
        for name, col in quantities:
            self.out.text(f"plots/{name}.gp", _plot_script(
                "../summary.csv", 1, col, "eps", name, f"{name} against eps", f"{name}.png"))
        for j, key in enumerate(extra_keys):
            self.out.text(f"plots/{key}.gp", _plot_script(
                "../regime_quantities.csv", 1, j + 2, "eps", key, f"{key} against eps",
                f"{key}.png"))

    def write_manifest(self, code: int):
        manifest = {
            "artifact_version": __version__,
            "command": self.cfg.command,
            "config": self.cfg.echo(),
            "exit_code": code,
            "files": dict(sorted(self.out.hashes.items())),
            "wall_times_s": self.timings,
            "determinism": {
                "fft_workers": spectral.FFT_WORKERS,
                "seed": self.cfg.seed,
                "numpy": np.__version__,
                "python": platform.python_version(),
                "note": "summary.csv omits wall times unless record_wall_time is set",
            },
            "notes": self.notes,
        }
        path = self.out.root / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute one configured command; returns the process exit code."""
    try:
        return Runner(cfg, stdout).run()
    except NoConvergence as exc:
        log.error("no convergence: %s", exc)
        return EXIT_PARTIAL
    except FracScalarError as exc:
        log.error("%s", exc)
        return EXIT_HARD


def main(argv: Sequence[str] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if ("-v" in argv or "--verbose" in argv)
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HARD
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
