"""Command-line entry point: ``qvm {simulate,sweep,hydro,rg,analyze}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numba
import numpy as np

from . import __version__, hydro, io, observables, rg
from .config import ConfigError, RunConfig, parse_config, serialize_config
from .dynamics import SimulationError, run
from .model import HydroCoefficients

log = logging.getLogger("qvm")


def resolve_threads(cli_value: int | None) -> int:
    if cli_value is not None:
        return max(1, cli_value)
    env = os.environ.get("QVM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"QVM_THREADS={env!r} is not an integer") from None
    return 1


def _simulate(cfg: RunConfig, out: Path, threads: int) -> list[str]:
    p, icfg = cfg.model, cfg.integrator
    snap_dir = out / "snapshots"
    every = cfg["integrator"]["snapshot_every"]
    if every:
        snap_dir.mkdir(exist_ok=True)

    def save(state):
        io.write_snapshot(snap_dir / f"step{state.step_count:08d}.qvm", state)

    summary = run(
        p,
        icfg,
        cfg.n_steps,
        cfg.transient,
        cfg.L,
        snapshot_every=every,
        on_snapshot=save,
        threads=threads,
    )
    first = cfg.transient + 1
    rows = ((first + k, (first + k) * icfg.dt, phi) for k, phi in enumerate(summary.order_series))
    io.write_series(out / "order.csv", ["step", "time", "phi"], rows)
    io.write_gnuplot(out / "order.gp", "order.csv", "time", ["phi"], title="polar order")
    io.write_snapshot(out / "final.qvm", summary.final_state)
    with open(out / "summary.json", "w") as fh:
        json.dump({"mean_order": summary.mean_order, "measurements": int(summary.order_series.size)}, fh, indent=2)
        fh.write("\n")
    artifacts = ["order.csv", "order.gp", "final.qvm", "summary.json"]
    if every:
        artifacts += sorted(f"snapshots/{f.name}" for f in snap_dir.iterdir())
    return artifacts


def _sweep(cfg: RunConfig, out: Path, threads: int) -> list[str]:
    s = cfg["sweep"]
    diagram = observables.sweep_phase_diagram(
        cfg.model,
        cfg.integrator,
        s["gamma_s_inv"],
        s["xi"],
        cfg.n_steps,
        cfg.transient,
        cfg.L,
        workers=s["workers"],
    )
    io.write_series(out / "phase_diagram.csv", ["gamma_s_inv", "xi", "phi"], diagram.rows())
    io.write_gnuplot(
        out / "phase_diagram.gp",
        "phase_diagram.csv",
        "gamma_s_inv",
        ["xi"],
        title="polar order",
        style="points palette",
        extra="set ylabel 'xi'\n",
    )
    return ["phase_diagram.csv", "phase_diagram.gp"]


def _hydro(cfg: RunConfig, out: Path, threads: int) -> list[str]:
    h = cfg["hydro"]
    grid = h["grid"]
    if h["kind"] == "dispersion":
        rows = []
        for mode in h["modes"]:
            pt = hydro.measure_goldstone_dispersion(grid, mode, h["A_I"], h["B"], h["D"], h["dx"], h["dt"], h["n_steps"])
            for w in pt.omega:
                rows.append((pt.k, w.real, w.imag))
        io.write_series(out / "dispersion.csv", ["k", "re_omega", "im_omega"], rows)
        io.write_gnuplot(out / "dispersion.gp", "dispersion.csv", "k", ["re_omega", "im_omega"], style="points")
        return ["dispersion.csv", "dispersion.gp"]

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x4D]))
    mass_rows = []
    if h["kind"] == "goldstone":
        s = hydro.GoldstoneState.zeros(grid, h["dx"], h["A_I"], h["B"], h["D"], h["lambda1"])
        s.delta_rho = h["amplitude"] * rng.standard_normal(s.delta_rho.shape)
        s.delta_rho -= s.delta_rho.mean()
        for n in range(h["n_steps"]):
            noise = hydro.goldstone_noise(s, h["Delta"], h["Lambda_cut"], h["dt"], rng) if h["noise"] else None
            s = hydro.step_goldstone(s, h["dt"], noise)
            mass_rows.append((n + 1, s.time, float(np.mean(s.V_perp**2))))
        io.write_field_snapshot(out / "final.qvh", s.delta_rho, s.V_perp, s.dx, s.time)
        header = ["step", "time", "mean_v_perp_sq"]
    else:
        p = cfg.model
        coeffs = HydroCoefficients(
            lambda_tilde=h["lambda_tilde"],
            lambda1=h["lambda1"],
            eta_tilde=h["eta_tilde"],
            B=1.0 / (p.rho * p.beta),
            D=1.0 / (p.gamma * p.m * p.beta),
            Delta=h["Delta"],
            A_I=h["A_I"],
            Lambda_cut=h["Lambda_cut"],
            xi_align=h["xi_align"],
        )
        f = hydro.uniform_flock(grid, h["dx"], coeffs, p)
        f.V = f.V + h["amplitude"] * rng.standard_normal(f.V.shape)
        for n in range(h["n_steps"]):
            f = hydro.step_full(f, h["dt"], rng if h["noise"] else None)
            mass_rows.append((n + 1, f.time, f.total_mass()))
        io.write_field_snapshot(out / "final.qvh", f.rho, f.V, f.dx, f.time)
        header = ["step", "time", "total_mass"]
    io.write_series(out / "fields.csv", header, mass_rows)
    return ["fields.csv", "final.qvh"]


def _rg(cfg: RunConfig, out: Path, threads: int) -> list[str]:
    r = cfg["rg"]
    e = rg.fixed_point_exponents()
    (out / "exponents.txt").write_text(rg.exponent_report(e, r["F31"]))
    init = rg.RGState(r["D0"], r["Delta0"], r["lambda1_0"], r["B0"])
    traj = rg.integrate_flow(init, r["F31"], r["l_max"], r["dl"], gauge=e)
    rows = (
        (l, *vals, g) for l, vals, g in zip(traj.l, traj.values, traj.coupling)
    )
    io.write_series(out / "flow.csv", ["l", "D", "Delta", "lambda1", "B", "lambda_bar_sq"], rows)
    io.write_gnuplot(out / "flow.gp", "flow.csv", "l", ["lambda_bar_sq"], title="reduced coupling")
    return ["exponents.txt", "flow.csv", "flow.gp"]


def _analyze(cfg: RunConfig, out: Path, threads: int) -> list[str]:
    a = cfg["analyze"]
    if not a["snapshot"]:
        raise ConfigError("analyze mode needs [analyze] snapshot = <path>")
    state = io.read_snapshot(a["snapshot"])
    report = observables.band_report(state, a["n_bins"], a["threshold"])
    width = state.L / a["n_bins"]
    centers = (np.arange(a["n_bins"]) + 0.5) * width
    io.write_series(out / "profile.csv", ["bin_center", "density"], zip(centers, report.profile))
    io.write_series(out / "bands.csv", ["start", "end", "mean_density"], report.bands)
    r, corr, counts = observables.velocity_correlation(state, min(a["r_max"], state.L / 2))
    io.write_series(out / "correlation.csv", ["r", "c", "pairs"], zip(r, corr, counts))
    phi = observables.polar_order(state.spins)
    (out / "analysis.txt").write_text(
        f"phi = {phi!r}\nbands = {len(report.bands)}\ncontrast = {report.contrast!r}\n"
    )
    io.write_gnuplot(out / "profile.gp", "profile.csv", "bin_center", ["density"], title="density profile")
    return ["profile.csv", "bands.csv", "correlation.csv", "analysis.txt", "profile.gp"]


DISPATCH = {
    "simulate": _simulate,
    "sweep": _sweep,
    "hydro": _hydro,
    "rg": _rg,
    "analyze": _analyze,
}


def run_command(cfg: RunConfig, out: Path | str | None = None, threads: int | None = None) -> int:
    """Run the configured mode, writing artifacts and ``manifest.json`` to the output directory."""
    out = Path(out if out is not None else cfg["run"]["output"])
    threads = resolve_threads(threads if threads is not None else cfg["run"]["threads"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"qvm: cannot create output directory {out}: {exc}", file=sys.stderr)
        return 2
    start = time.perf_counter()
    try:
        artifacts = DISPATCH[cfg.mode](cfg, out, threads)
    except (SimulationError, hydro.StabilityError, hydro.NegativeDensityError, rg.FlowError, ConfigError,
            observables.SweepError, io.SnapshotFormatError, ValueError, OSError) as exc:
        print(f"qvm {cfg.mode}: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "threads": threads,
        "config": serialize_config(cfg),
        "artifacts": artifacts,
        "versions": {
            "qvm": __version__,
            "numpy": np.__version__,
            "numba": numba.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": time.perf_counter() - start,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qvm {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in DISPATCH:
        sp = sub.add_parser(mode)
        sp.add_argument("--config", type=Path, help="configuration file")
        sp.add_argument("--seed", type=lambda s: int(s, 0), help="override [run] seed")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--threads", type=int, help="worker threads (default: QVM_THREADS or 1)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        text = args.config.read_text() if args.config else ""
        cfg = parse_config(text)
        cfg.set("run", "mode", args.mode)
        if args.seed is not None:
            cfg.set("run", "seed", str(args.seed))
        threads = resolve_threads(args.threads if args.threads is not None else None)
        if args.threads is None and "QVM_THREADS" not in os.environ:
            threads = cfg["run"]["threads"]
    except (ConfigError, OSError) as exc:
        print(f"qvm: {exc}", file=sys.stderr)
        return 2
    return run_command(cfg, args.out, threads)


if __name__ == "__main__":
    sys.exit(main())
