"""Command-line pipeline driver.

Every stage reads a run configuration, writes its outputs into a scratch
directory and moves them into ``--out`` only when it succeeds, together with
a ``manifest_<stage>.json`` recording inputs, seed, versions and timing.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import platform
import shutil
import time
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import load_run_config
from .control import DriveModel, build_efficiency_map, evaluate_points, peak_envelope, solve_many
from .exceptions import ConfigError, ValidationError, WfsmError
from .losses import COMPONENTS, LossParams, load_device, load_gear
from .magnetics.design import load_machine
from .magnetics.fluxmap import build_flux_map
from .materials import DATA_DIR, load_material
from .optimize.problem import DEFAULT_OPERATING_POINTS
from .optimize.run import (load_optimization_config, optimization_config_from_dict, run_optimization,
                           write_optimization_outputs)
from .powertrain import (EDU, DriveCycle, cruise_efficiency, demand_trace, energy_histogram,
                         fetch_wltp_class3, load_vehicle, run_cycle)
from .resources import file_hash, resolve

DEFAULT_ENVELOPE_SPEEDS = np.arange(500.0, 14001.0, 500.0)
DEFAULT_CRUISE_KMH = (70.0, 130.0)


class _Group(click.Group):
    """Maps toolkit exceptions to their exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except WfsmError as exc:
            click.echo(f"error: {exc}", err=True)
            raise click.exceptions.Exit(exc.exit_code) from None


def common_options(fn):
    fn = click.option("--threads", type=int, default=None, help="Worker processes for stage-internal parallelism.")(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Seed for all randomness.")(fn)
    fn = click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Output directory.")(fn)
    fn = click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                      help="Run configuration (YAML) or a previous run manifest (JSON).")(fn)
    return fn


def _config(config, out, seed, threads):
    return load_run_config(config, overrides={"out": out, "seed": seed, "threads": threads}).validate()


# -- stage plumbing ------------------------------------------------------------

def _stamp(path, h):
    path = Path(path)
    if path.suffix in (".csv", ".yaml"):
        text = path.read_text(encoding="utf-8")
        path.write_text(f"# config_hash: {h}\n{text}", encoding="utf-8")
    elif path.suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        data["config_hash"] = h
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@contextmanager
def _lock(out):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".wfsm.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {out} is locked by another run ({lock})") from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


@contextmanager
def stage(cfg, name, extra_inputs=()):
    """Scratch directory for one stage; outputs are published only on success."""
    out = Path(cfg.out)
    with _lock(out):
        scratch = out / f".partial-{name}"
        shutil.rmtree(scratch, ignore_errors=True)
        scratch.mkdir()
        started = time.time()
        h = cfg.hash
        try:
            yield scratch, h
            produced = sorted(p for p in scratch.iterdir() if p.is_file())
            for p in produced:
                _stamp(p, h)
            inputs = {str(cfg.path(k)): file_hash(cfg.path(k)) for k in ("machine", "device", "gear", "vehicle",
                                                                        "economics")}
            cp = cfg.cycle_path()
            if cp is not None:
                inputs[str(cp)] = file_hash(cp)
            for p in extra_inputs:
                inputs[str(p)] = file_hash(p)
            manifest = {
                "stage": name, "config_hash": h, "seed": cfg.seed, "config": cfg.to_dict(),
                "base_dir": cfg.base_dir, "inputs": inputs,
                "outputs": {p.name: file_hash(p) for p in produced},
                "versions": {"wfsmkit": __version__, "numpy": np.__version__, "python": platform.python_version()},
                "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
                "elapsed_s": round(time.time() - started, 3),
            }
            for p in produced:
                os.replace(p, out / p.name)
            (out / f"manifest_{name}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                                       encoding="utf-8")
        finally:
            shutil.rmtree(scratch, ignore_errors=True)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def _machine(cfg, ref=None):
    path = resolve(ref, "machine", cfg.base_dir) if ref is not None else cfg.path("machine")
    return load_machine(path, cfg.library())


def _model(cfg, machine=None, device=None, with_device=True):
    design, ratings = _machine(cfg, machine)
    fmap = build_flux_map(design, ratings, cfg.grid)
    dev = None
    if with_device:
        dev = load_device(resolve(device, "params", cfg.base_dir) if device else cfg.path("device"))
    return DriveModel(design, fmap, ratings, LossParams(), dev)


def _cycle(cfg, scratch):
    if cfg.cycle == "wltp":
        return fetch_wltp_class3(scratch / "wltc_class3b.csv")
    return DriveCycle.from_csv(cfg.cycle_path())


# -- commands ------------------------------------------------------------------

@click.group(cls=_Group)
@click.version_option(__version__)
def main():
    """Wound-field synchronous machine design and EDU benchmarking pipeline."""


@main.group()
def materials():
    """Soft-magnetic grade files."""


@materials.command("validate")
@click.argument("paths", nargs=-1, type=click.Path(exists=True))
@common_options
def materials_validate(paths, config, out, seed, threads):
    """Check grade files (default: the shipped library) against all invariants."""
    targets = []
    if not paths:
        mdir = DATA_DIR / "materials"
        if config:
            cfg = load_run_config(config, overrides={"out": out, "seed": seed, "threads": threads})
            if cfg.materials is not None:
                mdir = cfg.materials_dir()
        paths = [mdir]
    for p in map(Path, paths):
        targets += sorted(p.glob("*.yaml")) if p.is_dir() else [p]
    failed = 0
    for path in targets:
        try:
            m = load_material(path)
        except ValidationError as exc:
            failed += 1
            click.echo(f"FAIL {path.name}: {exc}")
        except Exception as exc:  # malformed YAML and the like
            failed += 1
            click.echo(f"FAIL {path.name}: {exc}")
        else:
            click.echo(f"PASS {path.name} ({m.name})")
    if failed:
        raise ValidationError("materials", f"{failed} of {len(targets)} grade files failed validation")


@main.group("map")
def map_group():
    """Flux-linkage maps."""


@map_group.command("build")
@common_options
def map_build(config, out, seed, threads):
    """Characterise the configured machine on the current grid."""
    cfg = _config(config, out, seed, threads)
    with stage(cfg, "map_build") as (scratch, h):
        design, ratings = _machine(cfg)
        fmap = build_flux_map(design, ratings, cfg.grid)
        fmap.meta["config_hash"] = h
        fmap.save(scratch / "fluxmap.npz")
        D, Q, F = np.meshgrid(fmap.id_axis, fmap.iq_axis, fmap.if_axis, indexing="ij")
        rows = zip(D.ravel(), Q.ravel(), F.ravel(), fmap.psi_d.ravel(), fmap.psi_q.ravel(),
                   fmap.b_tooth.ravel(), fmap.b_yoke.ravel(), fmap.b_rotor.ravel())
        _write_csv(scratch / "fluxmap.csv", ["i_d_A", "i_q_A", "i_f_A", "psi_d_Wb", "psi_q_Wb", "b_tooth_T",
                                             "b_yoke_T", "b_rotor_T"], rows)
    click.echo(f"flux map {fmap.shape} written to {cfg.out}")


@main.group()
def control():
    """Operating-point solvers."""


@control.command("mtpl")
@click.option("--torque", "torques", type=float, multiple=True, help="Torque request [N*m]; pairs with --speed.")
@click.option("--speed", "speeds", type=float, multiple=True, help="Speed [rpm].")
@common_options
def control_mtpl(torques, speeds, config, out, seed, threads):
    """Loss-optimal operating points (or the configured strategy) and an efficiency map."""
    cfg = _config(config, out, seed, threads)
    st = cfg.stage("mtpl")
    if len(torques) != len(speeds):
        raise ConfigError("--torque and --speed must be given the same number of times")
    points = [tuple(p) for p in st.get("points", [])] + list(zip(torques, speeds))
    with stage(cfg, "control_mtpl") as (scratch, h):
        model = _model(cfg)
        if points:
            T = np.array([p[0] for p in points], dtype=float)
            S = np.array([p[1] for p in points], dtype=float)
            sols = solve_many(model, T, S, cfg.v_dc, cfg.strategy)
            rows = []
            for t, s, sol in zip(T, S, sols):
                if sol is None:
                    rows.append([t, s, 0, *[math.nan] * (7 + len(COMPONENTS))])
                    continue
                v_ll = float(evaluate_points(model, sol.i_d, sol.i_q, sol.i_f, s, cfg.v_dc)["v_ll"])
                rows.append([t, s, 1, sol.i_d, sol.i_q, sol.i_f, v_ll, sol.torque_achieved, sol.efficiency,
                             sol.losses.total, *[getattr(sol.losses, c) for c in COMPONENTS]])
            _write_csv(scratch / "operating_points.csv",
                       ["torque_request_Nm", "speed_rpm", "feasible", "i_d_A", "i_q_A", "i_f_A", "v_ll_peak_V",
                        "torque_Nm", "efficiency", "loss_total_W", *[f"loss_{c}_W" for c in COMPONENTS]], rows)
        if "torque_axis" in st or not points:
            t_axis = st.get("torque_axis", np.linspace(20.0, model.ratings.peak_torque, 12).tolist())
            s_axis = st.get("speed_axis", np.linspace(500.0, 12000.0, 12).tolist())
            emap = build_efficiency_map(model, cfg.strategy, t_axis, s_axis, cfg.v_dc)
            rows = []
            for i, t in enumerate(emap.torque_axis):
                for j, s in enumerate(emap.speed_axis):
                    rows.append([t, s, int(emap.feasible[i, j]), emap.efficiency[i, j], emap.loss_total[i, j],
                                 emap.i_f_choice[i, j]])
            _write_csv(scratch / "efficiency_map.csv",
                       ["torque_Nm", "speed_rpm", "feasible", "efficiency", "loss_total_W", "i_f_A"], rows)
    click.echo(f"{cfg.strategy} results written to {cfg.out}")


@control.command("envelope")
@common_options
def control_envelope(config, out, seed, threads):
    """Peak torque and power versus speed at the rated DC voltage."""
    cfg = _config(config, out, seed, threads)
    st = cfg.stage("envelope")
    speeds = np.asarray(st.get("speeds", DEFAULT_ENVELOPE_SPEEDS), dtype=float)
    v_dc = float(st.get("v_dc", cfg.rated_v_dc))
    with stage(cfg, "control_envelope") as (scratch, h):
        env = peak_envelope(_model(cfg, with_device=False), v_dc, speeds)
        _write_csv(scratch / "envelope.csv", ["speed_rpm", "torque_Nm", "power_W"],
                   zip(env.speed_rpm, env.torque, env.power))
    click.echo(f"peak torque {env.peak_torque:.1f} N*m, peak power {env.peak_power / 1e3:.1f} kW at {v_dc:g} V")


def _edu(cfg, name, machine=None, device=None, gear=None, strategy=None):
    model = _model(cfg, machine, device)
    g = load_gear(resolve(gear, "params", cfg.base_dir) if gear else cfg.path("gear"))
    return EDU(name, model, g, cfg.v_dc, strategy or cfg.strategy)


def _vehicle_for(cfg, gear):
    return load_vehicle(cfg.path("vehicle")).with_(gear_ratio=gear.ratio)


@main.group()
def cycle():
    """Drive-cycle energy accounting."""


@cycle.command("run")
@common_options
def cycle_run(config, out, seed, threads):
    """Run the configured EDU over the drive cycle."""
    cfg = _config(config, out, seed, threads)
    st = cfg.stage("cycle")
    hist = dict(st.get("histogram") or {})
    with stage(cfg, "cycle_run") as (scratch, h):
        cyc = _cycle(cfg, scratch)
        edu = _edu(cfg, st.get("name", "EDU"))
        vehicle = _vehicle_for(cfg, edu.gear)
        result = run_cycle(demand_trace(cyc, vehicle, edu.gear), edu, float(st.get("clip_limit", 0.01)))
        histo = energy_histogram(result, hist.get("torque_bins", 20), hist.get("speed_bins", 20),
                                 hist.get("mode", "throughput"))
        summary = result.summary()
        summary["cycle"] = cyc.name
        summary["hotspots"] = [{"torque_Nm": t, "speed_rpm": s, "energy_J": e} for t, s, e in histo.hotspots(2)]
        (scratch / "cycle_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                                    encoding="utf-8")
        result.save_trace(scratch / "cycle_trace.csv")
        histo.save_csv(scratch / "histogram.csv")
    click.echo(f"{edu.name}: cycle efficiency {result.edu_efficiency:.4f}")


@main.group()
def optimize():
    """Stator design optimisation."""


def _optimization_config(cfg):
    st = cfg.stage("optimize")
    if "config" in st:
        path = resolve(st.pop("config"), "params", cfg.base_dir)
        ocfg = load_optimization_config(path)
    else:
        ocfg = optimization_config_from_dict(st, cfg.base_dir)
    return ocfg.with_(seed=cfg.seed)


@optimize.command("run")
@common_options
def optimize_run(config, out, seed, threads):
    """NSGA-II over the stator variables, then fine re-evaluation and TBV selection."""
    cfg = _config(config, out, seed, threads)
    ocfg = _optimization_config(cfg)
    with stage(cfg, "optimize_run") as (scratch, h):
        result = run_optimization(ocfg, threads=cfg.threads)
        write_optimization_outputs(result, scratch)
    if result.selected is None:
        click.echo("no feasible candidate survived re-evaluation", err=True)
    else:
        e1, e2 = result.selected.objectives
        click.echo(f"selected {result.selected.variables.as_tuple()} OP1 {e1:.4f} OP2 {e2:.4f} "
                   f"TBV {result.selected.tbv:.2f}")


@main.group()
def report():
    """Comparison tables and plot data."""


def _default_edus(cfg):
    return [
        {"name": "WFSM", "machine": cfg.machine, "device": cfg.device, "gear": cfg.gear},
        {"name": "PMSM", "machine": "pmsm_ref", "device": "inverter_igbt", "gear": "gear_dual_stage"},
    ]


@report.command("compare")
@common_options
def report_compare(config, out, seed, threads):
    """Machine table, EDU efficiency table and cycle histogram for several EDUs."""
    cfg = _config(config, out, seed, threads)
    st = cfg.stage("report")
    specs = st.get("edus") or _default_edus(cfg)
    cruise = [float(v) for v in st.get("cruise_kmh", DEFAULT_CRUISE_KMH)]
    hist = dict(st.get("histogram") or {})
    ops = DEFAULT_OPERATING_POINTS
    with stage(cfg, "report_compare") as (scratch, h):
        cyc = _cycle(cfg, scratch)
        machine_rows, eff = [], {}
        for k, spec in enumerate(specs):
            edu = _edu(cfg, spec["name"], spec.get("machine"), spec.get("device"), spec.get("gear"),
                       spec.get("strategy"))
            bare = DriveModel(edu.model.design, edu.model.fmap, edu.model.ratings, LossParams())
            env = peak_envelope(bare, cfg.rated_v_dc, DEFAULT_ENVELOPE_SPEEDS)
            op_sols = solve_many(bare, [p.torque for p in ops], [p.speed_rpm for p in ops], cfg.v_dc, edu.strategy)
            op_eff = [s.efficiency if s is not None else math.nan for s in op_sols]
            machine_rows.append([edu.name, edu.model.design.name, env.peak_torque, env.peak_power, *op_eff])
            vehicle = _vehicle_for(cfg, edu.gear)
            result = run_cycle(demand_trace(cyc, vehicle, edu.gear), edu)
            eff[edu.name] = [result.edu_efficiency] + [cruise_efficiency(v, vehicle, edu) for v in cruise]
            if k == 0:
                histo = energy_histogram(result, hist.get("torque_bins", 20), hist.get("speed_bins", 20),
                                         hist.get("mode", "throughput"))
                histo.save_csv(scratch / "comparison_histogram.csv")
        _write_csv(scratch / "machines.csv",
                   ["edu", "machine", "peak_torque_Nm", "peak_power_W", "op1_efficiency", "op2_efficiency"],
                   machine_rows)
        names = list(eff)
        labels = [f"{cyc.name} efficiency"] + [f"{v:g} km/h efficiency" for v in cruise]
        _write_csv(scratch / "edu_comparison.csv", ["characteristic", *names],
                   [[lab, *[eff[n][i] for n in names]] for i, lab in enumerate(labels)])
    for i, lab in enumerate(labels):
        click.echo(f"{lab}: " + ", ".join(f"{n} {eff[n][i]:.4f}" for n in names))


if __name__ == "__main__":
    main()
