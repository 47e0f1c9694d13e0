"""Batch front-end: config parsing, subcommand dispatch, CSV/SVG emission.

Usage: ``patchflow <subcommand> --config <file> [--out <dir>] [--assert]``.

Subcommands: ``simulate`` (marker evolution with diagnostics CSV and
optional per-frame contour CSV/SVG), ``ellipse-ode`` (exact ellipse ODE
trajectory), ``compare`` (both, with per-time error columns; ``--assert``
makes tolerance violations fatal), ``field`` (velocity/divergence grid),
``vasin`` (second-derivative distance scaling), ``pv`` (principal-value
truncation ladder) and ``commutator`` (solid vs boundary identity).

Configs are flat TOML files; unknown keys are rejected by name.  CSV
output is full-precision (17 significant digits) and byte-deterministic
for a fixed config.  Exit codes: 0 ok, 2 config error, 3 geometry
breakdown, 4 assertion failure.  ``PATCHFLOW_THREADS`` caps the numeric
thread pools (0 or unset = automatic).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError, GeometryBreakdown, PatchflowError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BREAKDOWN = 3
EXIT_ASSERT = 4

_KNOWN_KEYS = {
    # kernel
    "kernel": str,
    "L": list,
    "scale": (int, float),
    # initial shape
    "a0": (int, float),
    "b0": (int, float),
    "theta0": (int, float),
    "contour_file": str,
    "bump_gamma": (int, float),
    "bump_eps": (int, float),
    # time stepping
    "dt": (int, float),
    "t_end": (int, float),
    "integrator": str,
    "n_markers": int,
    "resample_every": int,
    "resample_trigger": (int, float),
    "diagnostics_every": int,
    # output
    "out_dir": str,
    "emit_frames": bool,
    "frame_every": int,
    # field grid
    "box": list,
    "grid_n": int,
    # vasin
    "gamma": (int, float),
    "d_min": (int, float),
    "d_max": (int, float),
    "n_distances": int,
    # pv
    "pv_mode": str,
    "marker_index": int,
    "component": int,
    "weight_index": int,
    "eps_min": (int, float),
    # commutator
    "test_field": str,
    "marker_indices": list,
    "n_angles": int,
    "n_radial": int,
    # compare
    "tolerance": (int, float),
}

_DEFAULTS = {
    "kernel": "cauchy",
    "scale": 1.0,
    "a0": 2.0,
    "b0": 1.0,
    "theta0": 0.0,
    "dt": 1e-3,
    "t_end": 1.0,
    "integrator": "rk4",
    "n_markers": 512,
    "resample_every": 50,
    "resample_trigger": 3.0,
    "diagnostics_every": 10,
    "emit_frames": False,
    "frame_every": 100,
    "box": [-3.0, 3.0, -3.0, 3.0],
    "grid_n": 32,
    "gamma": 0.5,
    "bump_gamma": 0.5,
    "bump_eps": 0.1,
    "d_min": 1e-3,
    "d_max": 1e-1,
    "n_distances": 10,
    "pv_mode": "boundary",
    "marker_index": 0,
    "component": 1,
    "weight_index": 1,
    "eps_min": 0.0,  # 0 = auto (4x marker spacing ladder floor)
    "test_field": "quadratic",
    "marker_indices": [0],
    "n_angles": 256,
    "n_radial": 256,
    "tolerance": 1e-3,
}


@dataclass
class RunConfig:
    """Validated flat configuration with defaults applied."""

    values: dict = dc_field(default_factory=dict)
    path: str = "<none>"

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        if key in _DEFAULTS:
            return _DEFAULTS[key]
        raise KeyError(key)

    def __contains__(self, key):
        return key in self.values or key in _DEFAULTS

    def has_explicit(self, key):
        return key in self.values


def parse_config(path) -> RunConfig:
    """Parse and validate a flat TOML config file.

    Raises
    ------
    ConfigError
        On unreadable files, unknown keys (named), type mismatches or an
        unknown kernel / missing linear-map matrix.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc

    for key, value in raw.items():
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        expected = _KNOWN_KEYS[key]
        if not isinstance(value, expected):
            raise ConfigError(
                f"config key {key!r} has type {type(value).__name__}, expected "
                f"{expected if isinstance(expected, type) else '/'.join(t.__name__ for t in expected)}"
            )
    cfg = RunConfig(values=dict(raw), path=str(path))

    from .kernels import kernel_from_name

    kernel_from_name(cfg["kernel"], cfg.values.get("L"), float(cfg["scale"]))  # validate
    if cfg.has_explicit("contour_file"):
        target = Path(cfg["contour_file"])
        if not target.is_absolute():
            target = path.parent / target
        if not target.exists():
            raise ConfigError(f"contour_file does not exist: {target}")
        cfg.values["contour_file"] = str(target)
    if cfg.has_explicit("integrator") and cfg["integrator"] not in ("rk4", "heun"):
        raise ConfigError(f"unknown integrator {cfg['integrator']!r}; valid: rk4, heun")
    return cfg


def _kernel(cfg: RunConfig):
    from .kernels import kernel_from_name

    return kernel_from_name(cfg["kernel"], cfg.values.get("L"), float(cfg["scale"]))


def _initial_contour(cfg: RunConfig):
    from . import geometry

    if cfg.has_explicit("contour_file"):
        return geometry.read_contour_csv(cfg["contour_file"])
    return geometry.make_ellipse_contour(
        float(cfg["a0"]), float(cfg["b0"]), float(cfg["theta0"]), int(cfg["n_markers"])
    )


def _sim_config(cfg: RunConfig):
    from .cde import SimConfig

    return SimConfig(
        dt=float(cfg["dt"]),
        t_end=float(cfg["t_end"]),
        integrator=cfg["integrator"],
        n_markers=int(cfg["n_markers"]),
        resample_every=int(cfg["resample_every"]),
        resample_trigger=float(cfg["resample_trigger"]),
        diagnostics_every=int(cfg["diagnostics_every"]),
    )


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> None:
    """Write a full-precision CSV (17 significant digits, deterministic)."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_svg(path, contour, viewbox) -> None:
    """One closed path in a fixed viewBox (diagnostic quality)."""
    x0, y0, w, h = viewbox
    pts = contour.markers
    d = "M " + " L ".join(f"{p[0]:.6g} {-p[1]:.6g}" for p in pts) + " Z"
    with open(path, "w") as fh:
        fh.write(
            f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.6g} {y0:.6g} '
            f'{w:.6g} {h:.6g}">\n'
            f'  <path d="{d}" fill="none" stroke="black" stroke-width="{w / 400:.6g}"/>\n'
            "</svg>\n"
        )


def _viewbox(contour, margin=1.3):
    m = contour.markers
    half = margin * float(max(abs(m).max(), 1e-9))
    return (-half, -half, 2 * half, 2 * half)


def _diag_rows(traj):
    rows = []
    for fr in traj.frames:
        r = fr.record
        rows.append(
            [
                r.t, r.area, r.perimeter, r.centroid[0], r.centroid[1],
                r.fitted.a, r.fitted.b, r.fitted.theta, r.sum_ab, r.skew_inv,
                r.holder_normal,
            ]
        )
    return rows


_DIAG_HEADER = [
    "t", "area", "perimeter", "cx", "cy",
    "a_fit", "b_fit", "theta_fit", "sum_ab", "skew_inv", "holder_normal",
]


def cmd_simulate(cfg: RunConfig, out_dir: Path) -> int:
    from . import cde, geometry

    traj = cde.evolve(_initial_contour(cfg), _kernel(cfg), _sim_config(cfg))
    write_csv(out_dir / "diagnostics.csv", _DIAG_HEADER, _diag_rows(traj))
    if cfg["emit_frames"]:
        vb = _viewbox(traj.frames[0].contour)
        every = max(1, int(cfg["frame_every"]))
        for idx, fr in enumerate(traj.frames):
            if idx % every and fr is not traj.frames[-1]:
                continue
            stem = f"frame_{idx:04d}"
            geometry.write_contour_csv(fr.contour, out_dir / f"{stem}.csv")
            write_svg(out_dir / f"{stem}.svg", fr.contour, vb)
    if not traj.ok:
        print(f"geometry breakdown at t = {traj.breakdown_time:.6g}", file=sys.stderr)
        return EXIT_BREAKDOWN
    return EXIT_OK


def _oracle_trajectory(cfg: RunConfig, dt=None):
    from .ellipse_oracle import EllipseState, integrate

    state0 = EllipseState(float(cfg["a0"]), float(cfg["b0"]), float(cfg["theta0"]))
    return integrate(state0, float(cfg["t_end"]), dt if dt is not None else float(cfg["dt"]))


def cmd_ellipse_ode(cfg: RunConfig, out_dir: Path) -> int:
    import numpy as np

    traj = _oracle_trajectory(cfg)
    skew = (traj.a - traj.b) * np.sin(2.0 * traj.theta)
    rows = list(zip(traj.ts, traj.a, traj.b, traj.theta, traj.a + traj.b, skew))
    write_csv(out_dir / "ellipse_ode.csv", ["t", "a", "b", "theta", "sum_ab", "skew_inv"], rows)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, out_dir: Path, assert_tol: bool) -> int:
    import numpy as np

    from . import cde

    if cfg.has_explicit("contour_file"):
        raise ConfigError("compare needs an ellipse initial shape (a0, b0, theta0)")
    traj = cde.evolve(_initial_contour(cfg), _kernel(cfg), _sim_config(cfg))
    oracle = _oracle_trajectory(cfg, dt=min(float(cfg["dt"]), 1e-4))
    rows = []
    worst = 0.0
    for fr in traj.frames:
        r = fr.record
        ia = np.interp(r.t, oracle.ts, oracle.a)
        ib = np.interp(r.t, oracle.ts, oracle.b)
        ith = np.interp(r.t, oracle.ts, oracle.theta)
        ea, eb, eth = abs(r.fitted.a - ia), abs(r.fitted.b - ib), abs(r.fitted.theta - ith)
        worst = max(worst, ea, eb, eth)
        rows.append([r.t, r.fitted.a, r.fitted.b, r.fitted.theta, ia, ib, ith, ea, eb, eth])
    write_csv(
        out_dir / "compare.csv",
        ["t", "a_sim", "b_sim", "theta_sim", "a_ref", "b_ref", "theta_ref",
         "err_a", "err_b", "err_theta"],
        rows,
    )
    if not traj.ok:
        print(f"geometry breakdown at t = {traj.breakdown_time:.6g}", file=sys.stderr)
        return EXIT_BREAKDOWN
    if assert_tol and worst > float(cfg["tolerance"]):
        print(
            f"max |simulated - reference| = {worst:.3e} exceeds tolerance "
            f"{float(cfg['tolerance']):.3e}",
            file=sys.stderr,
        )
        return EXIT_ASSERT
    return EXIT_OK


def cmd_field(cfg: RunConfig, out_dir: Path) -> int:
    import numpy as np

    from . import field as field_mod
    from . import geometry

    c = _initial_contour(cfg)
    k = _kernel(cfg)
    frame = geometry.frames(c)
    x0, x1, y0, y1 = (float(v) for v in cfg["box"])
    n = int(cfg["grid_n"])
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    v = field_mod.boundary_velocity(c, k, pts, frame=frame)
    # divergence only where the reduced gradient formula is resolved
    dist = geometry.distance_to_boundary(c, pts)
    div = np.full(len(pts), np.nan)
    safe = dist > 10.0 / c.n
    if np.any(safe):
        grads = field_mod.grad_velocity(c, k, pts[safe], frame=frame)
        div[safe] = [g.divergence for g in grads]
    rows = np.column_stack([pts, v, div])
    write_csv(out_dir / "field.csv", ["x", "y", "vx", "vy", "div"], rows)
    return EXIT_OK


def cmd_vasin(cfg: RunConfig, out_dir: Path) -> int:
    import numpy as np

    from . import analysis, geometry

    d_min, d_max = float(cfg["d_min"]), float(cfg["d_max"])
    distances = np.geomspace(d_min, d_max, int(cfg["n_distances"]))
    n = max(int(cfg["n_markers"]), int(math.ceil(10.0 / d_min)))
    c = geometry.make_bump_contour(float(cfg["bump_gamma"]), float(cfg["bump_eps"]), n)
    prof = analysis.vasin_profile(c, _kernel(cfg), float(cfg["gamma"]), distances)
    rows = list(zip(prof.distances, prof.magnitudes, prof.products))
    write_csv(out_dir / "vasin.csv", ["d", "m", "product"], rows)
    return EXIT_OK


def cmd_pv(cfg: RunConfig, out_dir: Path) -> int:
    from . import analysis

    c = _initial_contour(cfg)
    k = _kernel(cfg)
    idx = int(cfg["marker_index"])
    if cfg["pv_mode"] == "boundary":
        spacing = float(c.chord_lengths().max())
        eps_min = float(cfg["eps_min"]) or 4.0 * spacing
        res = analysis.pv_boundary(
            c, k, int(cfg["component"]), int(cfg["weight_index"]), idx, eps_min
        )
    elif cfg["pv_mode"] == "solid":
        kern = analysis.even_kernel_from_grad(k, int(cfg["component"]), int(cfg["weight_index"]))
        eps0 = float(cfg["eps_min"]) or 1e-4
        ladder = [eps0 * 2.0 ** m for m in range(10)][::-1]
        res = analysis.pv_solid_even(c, kern, idx, ladder)
    else:
        raise ConfigError(f"pv_mode must be 'boundary' or 'solid', got {cfg['pv_mode']!r}")
    rows = list(zip(res.epsilons, res.truncated_values))
    write_csv(out_dir / "pv.csv", ["epsilon", "value"], rows)
    return EXIT_OK


def cmd_commutator(cfg: RunConfig, out_dir: Path) -> int:
    from . import analysis

    c = _initial_contour(cfg)
    k = _kernel(cfg)
    phi = analysis.TEST_FIELDS.get(cfg["test_field"])
    if phi is None:
        raise ConfigError(
            f"unknown test_field {cfg['test_field']!r}; valid: {', '.join(analysis.TEST_FIELDS)}"
        )
    rows = []
    for idx in cfg["marker_indices"]:
        res = analysis.commutator_identity(
            c, k, phi, int(idx), n_angles=int(cfg["n_angles"]), n_radial=int(cfg["n_radial"])
        )
        rows.append([int(idx), res.ds, res.db, res.defect, res.tol])
    write_csv(out_dir / "commutator.csv", ["point", "DS", "DB", "abs_diff", "tol"], rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchflow",
        description="Contour dynamics of planar patches under odd homogeneous kernels.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("simulate", "ellipse-ode", "compare", "field", "vasin", "pv", "commutator"):
        p = sub.add_parser(name)
        p.add_argument(
            "--config", required=name != "ellipse-ode", default=None, help="TOML config file"
        )
        p.add_argument("--out", default=None, help="output directory (default: config out_dir or cwd)")
        if name == "simulate":
            p.add_argument("--kernel", default=None, help="override the config kernel")
        if name == "ellipse-ode":
            for flag in ("a0", "b0", "theta0", "dt"):
                p.add_argument(f"--{flag}", type=float, default=None)
            p.add_argument("--t-end", dest="t_end", type=float, default=None)
        if name == "compare":
            p.add_argument(
                "--assert", dest="assert_tol", action="store_true",
                help="exit 4 if the max per-time error exceeds 'tolerance'",
            )
    return parser


def main(argv=None) -> int:
    threads = os.environ.get("PATCHFLOW_THREADS", "0")
    if threads.isdigit() and int(threads) > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else RunConfig()
        if getattr(args, "kernel", None):
            cfg.values["kernel"] = args.kernel
            from .kernels import kernel_from_name

            kernel_from_name(cfg["kernel"], cfg.values.get("L"), float(cfg["scale"]))
        for flag in ("a0", "b0", "theta0", "dt", "t_end"):
            if getattr(args, flag, None) is not None:
                cfg.values[flag] = getattr(args, flag)
        out_dir = Path(args.out or cfg.values.get("out_dir", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.subcommand == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.subcommand == "ellipse-ode":
            return cmd_ellipse_ode(cfg, out_dir)
        if args.subcommand == "compare":
            return cmd_compare(cfg, out_dir, args.assert_tol)
        if args.subcommand == "field":
            return cmd_field(cfg, out_dir)
        if args.subcommand == "vasin":
            return cmd_vasin(cfg, out_dir)
        if args.subcommand == "pv":
            return cmd_pv(cfg, out_dir)
        if args.subcommand == "commutator":
            return cmd_commutator(cfg, out_dir)
        raise ConfigError(f"unknown subcommand {args.subcommand!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryBreakdown as exc:
        print(f"geometry breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except PatchflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
