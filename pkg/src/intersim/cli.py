"""Config-driven scenario runner.

Subcommands: replay | signalized | mixed | train | validate | stats.
Every run resolves a RunConfig (YAML config file, overridden by flags),
writes an ``effective-config.yaml`` into the output directory for
reproducibility, and emits deterministic CSV artifacts.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import yaml

from . import control, demand, dynamics, learn, metrics, net
from .errors import ConfigError, IntersimError

MODES = ("replay", "signalized", "mixed", "train", "validate", "stats")

DEFAULT_SWEEP = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class RunConfig:
    mode: str
    scenario: str                 # CSV path or bundled scenario name
    intersection: str | None = None
    seed: int = 0
    dt: float = 0.1
    duration: float | None = None
    out: str = "out"
    penetration: float = 0.6
    scale: float = 1.0
    policy: str | None = None
    timestep_tol: float = 2.0
    sweep: tuple | None = None
    trajectory: bool = False
    drain_s: float = 300.0
    iterations: int = 200
    workers: int = 1

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}", field="mode")
        if not self.scenario:
            raise ConfigError("a scenario (path or bundled name) is required",
                              field="scenario")
        if self.dt <= 0:
            raise ConfigError("dt must be > 0", field="dt")
        if self.duration is not None and self.duration <= 0:
            raise ConfigError("duration must be > 0", field="duration")
        if not 0.0 <= self.penetration <= 1.0:
            raise ConfigError("penetration must be in [0, 1]", field="penetration")
        if self.scale <= 0:
            raise ConfigError("scale must be > 0", field="scale")
        if self.timestep_tol < 0:
            raise ConfigError("timestep_tol must be >= 0", field="timestep_tol")
        if self.mode == "mixed" and self.policy is None and (
                self.sweep is None or any(p > 0 for p in self.sweep or DEFAULT_SWEEP)):
            if self.penetration > 0 or self.sweep is not None:
                raise ConfigError("mixed mode with RVs needs a trained policy file",
                                  field="policy")
        if self.mode == "train" and self.iterations < 0:
            raise ConfigError("iterations must be >= 0", field="iterations")
        return self


def load_config(path) -> RunConfig:
    """Parse a YAML config file into a RunConfig; unknown keys rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="config") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file is not valid YAML: {exc}", field="config") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping", field="config")
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}",
                          field=sorted(unknown)[0])
    if "sweep" in raw and raw["sweep"] is not None:
        raw["sweep"] = tuple(float(x) for x in raw["sweep"])
    missing = {"mode", "scenario"} - set(raw)
    if missing:
        raise ConfigError(f"missing required keys: {sorted(missing)}",
                          field=sorted(missing)[0])
    cfg = RunConfig(**raw)
    return cfg.validate()


def save_effective_config(cfg: RunConfig, out_dir: Path):
    data = asdict(cfg)
    if data["sweep"] is not None:
        data["sweep"] = list(data["sweep"])
    with open(out_dir / "effective-config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, sort_keys=True)


def _resolve_scenario(cfg: RunConfig):
    if cfg.scenario in demand.BUNDLED_SCENARIOS:
        scenario = demand.load_bundled(cfg.scenario)
    else:
        path = Path(cfg.scenario)
        if not path.exists():
            raise ConfigError(f"scenario file not found: {path}", field="scenario")
        name = cfg.intersection or "WGG"
        model = net.build_intersection(name)
        scenario = demand.load_scenario(path, model, name=path.stem)
    if cfg.intersection and scenario.intersection != cfg.intersection:
        raise ConfigError(
            f"scenario is bound to {scenario.intersection}, not {cfg.intersection}",
            field="intersection",
        )
    if cfg.scale != 1.0:
        scenario = demand.scale_demand(scenario, cfg.scale, seed=cfg.seed)
    if cfg.duration is not None and cfg.duration < scenario.duration:
        scenario = demand.truncate(scenario, cfg.duration)
    return scenario


def _sim_config(cfg: RunConfig, scenario) -> dynamics.SimConfig:
    duration = cfg.duration if cfg.duration is not None else scenario.duration
    return dynamics.SimConfig(dt=cfg.dt, duration=duration, seed=cfg.seed,
                              drain_s=cfg.drain_s,
                              record_trajectories=cfg.trajectory)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_trajectory(world, out_dir: Path):
    if world.trajectory is None:
        return
    lines = ["time_s,vehicle_id,lane,position_m,speed_mps,accel_mps2,phase"]
    for row in world.trajectory:
        lines.append(",".join(str(x) for x in row))
    _write(out_dir / "trajectory.csv", "\n".join(lines) + "\n")


def _run_world(scenario, sim_cfg, controller):
    world = dynamics.World(scenario.model, scenario, sim_cfg, controller)
    world.attach_emissions(metrics.EmissionParams())
    world.run()
    return world


def cmd_stats(cfg: RunConfig, out_dir: Path) -> int:
    scenario = _resolve_scenario(cfg)
    dd = demand.directional_demand(scenario)
    tc = demand.turning_counts(scenario)
    lines = ["scenario,northbound,southbound,eastbound,westbound,total"]
    lines.append(
        f"{scenario.name},{dd[net.Approach.NB]},{dd[net.Approach.SB]},"
        f"{dd[net.Approach.EB]},{dd[net.Approach.WB]},{dd.total}"
    )
    _write(out_dir / "demand.csv", "\n".join(lines) + "\n")
    rows = ["approach,turn,count"]
    for (approach, turn) in sorted(tc, key=lambda k: (k[0].value, k[1].value)):
        rows.append(f"{approach.value},{turn.name.lower()},{tc[(approach, turn)]}")
    _write(out_dir / "turning.csv", "\n".join(rows) + "\n")
    print(lines[1])
    return 0


def cmd_validate(cfg: RunConfig, out_dir: Path) -> int:
    scenario = _resolve_scenario(cfg)
    series = demand.stability_series(scenario)
    lines = ["minute,arrivals,cumulative_average"]
    for k, (n, avg) in enumerate(zip(series.minute_counts, series.cumulative_average)):
        lines.append(f"{k},{n},{avg:.4f}")
    _write(out_dir / "stability.csv", "\n".join(lines) + "\n")
    print(f"{scenario.name}: {len(scenario.records)} records over {scenario.duration:.0f}s; "
          f"final throughput {series.cumulative_average[-1]:.2f} veh/min")
    return 0


def cmd_replay(cfg: RunConfig, out_dir: Path) -> int:
    scenario = _resolve_scenario(cfg)
    sim_cfg = _sim_config(cfg, scenario)
    world = _run_world(scenario, sim_cfg,
                       control.UnsignalizedController(scenario.model))
    summary = metrics.summarize_world(world)
    report = metrics.match_report(world.trip_logs(), scenario,
                                  timestep_tol=cfg.timestep_tol)
    _, csv_text = metrics.comparison_table([(f"{scenario.name}-blackout", summary)])
    _write(out_dir / "metrics.csv", csv_text)
    _write(out_dir / "match.csv", metrics.match_report_csv([(scenario.name, report)]))
    _write_trajectory(world, out_dir)
    print(f"replay {scenario.name}: wait={summary.avg_wait_time:.2f}s "
          f"travel={summary.avg_travel_time:.2f}s match={report.match_rate:.2f}%")
    return 0


def cmd_signalized(cfg: RunConfig, out_dir: Path) -> int:
    scenario = _resolve_scenario(cfg)
    sim_cfg = _sim_config(cfg, scenario)
    program = control.signal_program(scenario.intersection)
    world = _run_world(scenario, sim_cfg,
                       control.SignalController(scenario.model, program))
    summary = metrics.summarize_world(world)
    # signals shift timing by design; fidelity is judged on lanes only
    report = metrics.match_report(world.trip_logs(), scenario,
                                  timestep_tol=cfg.timestep_tol, check_timing=False)
    _, csv_text = metrics.comparison_table([(f"{scenario.name}-signalized", summary)])
    _write(out_dir / "metrics.csv", csv_text)
    _write(out_dir / "match.csv", metrics.match_report_csv([(scenario.name, report)]))
    _write_trajectory(world, out_dir)
    print(f"signalized {scenario.name}: wait={summary.avg_wait_time:.2f}s "
          f"travel={summary.avg_travel_time:.2f}s match={report.match_rate:.2f}%")
    return 0


def _mixed_point(args):
    """One penetration point of a sweep (top level so it can cross processes)."""
    cfg_dict, p = args
    cfg = RunConfig(**cfg_dict)
    scenario = _resolve_scenario(cfg)
    sim_cfg = _sim_config(cfg, scenario)
    scn = demand.assign_penetration(scenario, p, seed=cfg.seed)
    policy = learn.Policy.load(cfg.policy) if (cfg.policy and p > 0) else None
    summary = learn.evaluate(policy, scn, sim_cfg)
    return p, summary


def cmd_mixed(cfg: RunConfig, out_dir: Path) -> int:
    rates = cfg.sweep if cfg.sweep is not None else (cfg.penetration,)
    jobs = [(asdict(cfg), p) for p in rates]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_mixed_point, jobs))
    else:
        results = [_mixed_point(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    rows = [(f"p={p:g}", summary) for p, summary in results]
    text, csv_text = metrics.comparison_table(rows)
    _write(out_dir / "metrics.csv", csv_text)
    print(text)
    return 0


def cmd_train(cfg: RunConfig, out_dir: Path) -> int:
    scenario = _resolve_scenario(cfg)
    train_cfg = learn.TrainConfig(iterations=cfg.iterations, seed=cfg.seed, dt=cfg.dt)
    policy, curve = learn.train(scenario, cfg.penetration, train_cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    policy.save(out_dir / "policy.bin")
    learn.save_training_curve(curve, out_dir / "train_curve.csv")
    print(f"trained {cfg.iterations} iterations; policy at {out_dir / 'policy.bin'}")
    return 0


_COMMANDS = {
    "stats": cmd_stats,
    "validate": cmd_validate,
    "replay": cmd_replay,
    "signalized": cmd_signalized,
    "mixed": cmd_mixed,
    "train": cmd_train,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intersim",
        description="Intersection traffic replay, signal comparison, and mixed RV control",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sp = sub.add_parser(mode)
        sp.add_argument("--config", help="YAML config file; flags override its values")
        sp.add_argument("--scenario", help="scenario CSV path or bundled name "
                                           f"({', '.join(demand.BUNDLED_SCENARIOS)})")
        sp.add_argument("--intersection", choices=("WGG", "WGM"))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--duration", type=float)
        sp.add_argument("--out")
        sp.add_argument("--penetration", type=float)
        sp.add_argument("--scale", type=float)
        sp.add_argument("--policy")
        sp.add_argument("--timestep-tol", dest="timestep_tol", type=float)
        sp.add_argument("--sweep", help="comma-separated penetration rates")
        sp.add_argument("--trajectory", action="store_true", default=None)
        sp.add_argument("--iterations", type=int)
        sp.add_argument("--workers", type=int)
    return parser


def resolve_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
        if cfg.mode != args.mode:
            raise ConfigError(
                f"config file mode {cfg.mode!r} does not match subcommand {args.mode!r}",
                field="mode",
            )
    else:
        if not args.scenario:
            raise ConfigError("a scenario (path or bundled name) is required",
                              field="scenario")
        cfg = RunConfig(mode=args.mode, scenario=args.scenario)
    overrides = {}
    for name in ("scenario", "intersection", "seed", "dt", "duration", "out",
                 "penetration", "scale", "policy", "timestep_tol", "trajectory",
                 "iterations", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if args.sweep is not None:
        overrides["sweep"] = tuple(float(x) for x in args.sweep.split(","))
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out_dir = Path(cfg.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_effective_config(cfg, out_dir)
        return _COMMANDS[cfg.mode](cfg, out_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IntersimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
