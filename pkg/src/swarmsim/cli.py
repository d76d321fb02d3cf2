"""Command-line harness: single runs, named experiment presets, benchmarks.

Exit codes: 0 on success, 2 on configuration or usage errors, 3 on a
runtime invariant violation. Sweep points run in parallel worker
processes when --jobs > 1; each worker owns one engine instance and runs
are byte-for-byte independent of the level of parallelism. Environment
variables are never consulted.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import metrics
from .engine import InvariantViolation
from .scenario import ConfigError, ScenarioConfig, format_config, load_config
from .simulation import run_scenario, tyrant_pair_fixture

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

ROLES = ("altruistic", "standard", "leech")


def desk_base() -> ScenarioConfig:
    """Desk-scale base scenario: 200 nodes, 64 MiB, 10x time compression."""
    return ScenarioConfig()


def paper_base() -> ScenarioConfig:
    """Full-scale scenario: 2000 DSL nodes, 1 GiB flash crowd, real time."""
    cfg = ScenarioConfig(
        node_count=2000,
        file_bytes=2**30,
        time_compression=1.0,
        horizon=400000.0,
    )
    return cfg


def _with_populations(cfg, altruistic, standard, leech):
    cfg.altruistic.fraction = altruistic
    cfg.standard.fraction = standard
    cfg.leech.fraction = leech
    return cfg


@dataclass
class ExperimentPreset:
    """A named sweep: base scenario, swept parameter, values, repetitions."""

    name: str
    description: str
    param: str
    values: tuple
    repetitions: int = 3
    apply: object = None  # fn(cfg, value) -> cfg

    def point_configs(self, scale: str, base_seed=None):
        base = desk_base() if scale == "desk" else paper_base()
        reps = self.repetitions if scale == "desk" else 1
        if base_seed is None:
            base_seed = base.seed
        for value in self.values:
            for rep in range(reps):
                cfg = desk_base() if scale == "desk" else paper_base()
                cfg.seed = base_seed + rep
                cfg = self.apply(cfg, value)
                cfg.validate()
                yield value, cfg.seed, cfg
        del base


def _seeding_importance(cfg, value):
    if value == "all-leech":
        _with_populations(cfg, 0.0, 0.0, 1.0)
    elif value == "standard-70":
        _with_populations(cfg, 0.0, 0.7, 0.3)
    elif value == "altruistic-10":
        _with_populations(cfg, 0.1, 0.7, 0.2)
    else:
        raise ConfigError(f"unknown composition {value}")
    cfg.altruistic.seeding = "round-robin"
    return cfg


def _baseline_reward(cfg, value):
    _with_populations(cfg, 0.1, 0.7, 0.2)
    cfg.reservation = 0.75
    cfg.overlap = 1.0
    cfg.altruistic.seeding = "reward-lottery" if value == "reward" else "round-robin"
    return cfg


def _reservation(cfg, value, leech_trading="standard-tft"):
    _with_populations(cfg, 0.1, 0.7, 0.2)
    cfg.altruistic.seeding = "reward-lottery"
    cfg.reservation = float(value)
    cfg.overlap = 1.0
    cfg.leech.trading = leech_trading
    return cfg


def _altruist_size(cfg, value, leech_trading="standard-tft"):
    a = float(value)
    _with_populations(cfg, a, 0.8 - a, 0.2)  # leech population held at 20%
    cfg.altruistic.seeding = "reward-lottery"
    cfg.reservation = 0.75
    cfg.overlap = 1.0
    cfg.leech.trading = leech_trading
    return cfg


def _overlap(cfg, value):
    _with_populations(cfg, 0.1, 0.7, 0.2)
    cfg.altruistic.seeding = "reward-lottery"
    cfg.reservation = 0.75
    cfg.overlap = float(value)
    return cfg


def _tyrant_vs_reward(cfg, value):
    return _reservation(cfg, value, leech_trading="tyrant")


def _ignore_tyrants(cfg, value):
    cfg = _reservation(cfg, 0.75, leech_trading="tyrant")
    cfg.ignore_tyrants = value == "on"
    return cfg


PRESETS = {
    "seeding-importance": ExperimentPreset(
        "seeding-importance",
        "median efficiency under three swarm compositions: no seeding at all, "
        "brief standard seeding, and a long-seeding altruistic slice",
        "composition",
        ("all-leech", "standard-70", "altruistic-10"),
    ),
    "baseline-reward": ExperimentPreset(
        "baseline-reward",
        "reward seeding (75% reserved, full overlap) against the plain-seeding baseline",
        "seeding",
        ("baseline", "reward"),
    ),
    "reservation-sweep": ExperimentPreset(
        "reservation-sweep",
        "median efficiency as a function of the reserved seeding bandwidth fraction",
        "reservation",
        (0.0, 0.25, 0.5, 0.75, 1.0),
    ),
    "altruist-size-sweep": ExperimentPreset(
        "altruist-size-sweep",
        "median efficiency as the altruistic slice grows; leeches held at 20%",
        "altruistic_fraction",
        (0.05, 0.1, 0.2, 0.3),
    ),
    "overlap-sweep": ExperimentPreset(
        "overlap-sweep",
        "median efficiency vs the fraction of altruists holding first-hand history "
        "(reservation fixed at 75%)",
        "overlap",
        (0.0, 0.25, 0.5, 0.75, 1.0),
    ),
    "tyrant-vs-reward": ExperimentPreset(
        "tyrant-vs-reward",
        "reservation sweep with the leech population trading tyrannically",
        "reservation",
        (0.0, 0.25, 0.5, 0.75, 1.0),
    ),
    "tyrant-collapse": ExperimentPreset(
        "tyrant-collapse",
        "isolated tyrant pair: mutual rate collapse without self-identification, "
        "block-based ramp-up with it",
        "self_identify",
        ("off", "on"),
        repetitions=1,
    ),
    "ignore-tyrants": ExperimentPreset(
        "ignore-tyrants",
        "reward seeds excluding self-identified tyrants from seeding, versus serving them",
        "ignore_tyrants",
        ("off", "on"),
    ),
}

PRESETS["seeding-importance"].apply = _seeding_importance
PRESETS["baseline-reward"].apply = _baseline_reward
PRESETS["reservation-sweep"].apply = _reservation
PRESETS["altruist-size-sweep"].apply = _altruist_size
PRESETS["overlap-sweep"].apply = _overlap
PRESETS["tyrant-vs-reward"].apply = _tyrant_vs_reward
PRESETS["ignore-tyrants"].apply = _ignore_tyrants


def emit_run_report(result, out_dir, run_id):
    cfg = result.config
    return metrics.emit_report(
        out_dir,
        run_id,
        format_config(cfg),
        result.records,
        cfg.file_bytes * 8,
        cfg.horizon,
        extra_manifest=(
            ("root_seed", cfg.seed),
            ("sim_end_s", repr(result.sim_end)),
            ("events", sum(result.events.values())),
            ("messages", sum(result.messages.values())),
            ("recomputes", result.recomputes),
        ),
    )


def _run_point(args):
    """Worker entry for sweep points: returns summary rows."""
    value, seed, cfg, out_dir, run_id = args
    result = run_scenario(cfg)
    emit_run_report(result, out_dir, run_id)
    rows = []
    for role in ROLES:
        if not any(r.role == role for r in result.records):
            continue
        s = result.summary(role)
        rows.append(
            (value, seed, role, s.median_efficiency, s.median_download_time,
             s.completion_fraction)
        )
    return rows


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.trace is not None:
            cfg.trace_kind = "file"
            cfg.trace_file = args.trace
        cfg.validate()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run_id = os.path.splitext(os.path.basename(args.config))[0]
    try:
        result = run_scenario(cfg)
    except InvariantViolation as exc:
        print(f"runtime invariant violation: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    paths = emit_run_report(result, args.out, run_id)
    for role in ROLES:
        s = result.summary(role)
        if s.count:
            med = "n/a" if s.median_efficiency is None else f"{s.median_efficiency:.3f}"
            print(f"{role}: median efficiency {med}, "
                  f"completed {s.completed}/{s.count}")
    print(f"reports: {', '.join(sorted(paths))} under {args.out}")
    return EXIT_OK


def _fmt_cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def cmd_preset(args) -> int:
    name = args.preset
    if name not in PRESETS:
        print(f"unknown preset {name!r}; choices: {', '.join(sorted(PRESETS))}",
              file=sys.stderr)
        return EXIT_CONFIG
    preset = PRESETS[name]
    out_dir = os.path.join(args.out, name)
    os.makedirs(out_dir, exist_ok=True)

    if name == "tyrant-collapse":
        return _run_tyrant_collapse(out_dir)

    points = []
    for value, seed, cfg in preset.point_configs(args.scale, args.seed):
        run_id = f"{name}_{preset.param}-{value}_s{seed}"
        points.append((value, seed, cfg, out_dir, run_id))
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                all_rows = list(pool.map(_run_point, points))
        else:
            all_rows = [_run_point(p) for p in points]
    except InvariantViolation as exc:
        print(f"runtime invariant violation: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    merged = os.path.join(out_dir, f"{name}_summary.csv")
    with open(merged, "w") as fh:
        fh.write(f"{preset.param},seed,role,median_efficiency,"
                 "median_download_time_s,completion_fraction\n")
        for rows in all_rows:
            for value, seed, role, eff, dt, frac in rows:
                fh.write(f"{value},{seed},{role},{_fmt_cell(eff)},"
                         f"{_fmt_cell(dt)},{_fmt_cell(frac)}\n")

    # across-seed aggregates per (value, role): Table-style columns with both
    # the normal-approximation CI and the 1.96*sd spread, clearly labeled
    agg_path = os.path.join(out_dir, f"{name}_aggregate.csv")
    by_key = {}
    for rows in all_rows:
        for value, seed, role, eff, dt, frac in rows:
            if eff is not None:
                by_key.setdefault((value, role), []).append(eff)
    with open(agg_path, "w") as fh:
        fh.write(f"{preset.param},role,runs,mean_median_efficiency,std,"
                 "ci95_halfwidth_mean,ci95_sigma_spread\n")
        for (value, role), effs in by_key.items():
            a = metrics.aggregate_runs(effs)
            fh.write(f"{value},{role},{a.n},{_fmt_cell(a.mean)},{_fmt_cell(a.std)},"
                     f"{_fmt_cell(a.ci95_mean)},{_fmt_cell(a.ci95_spread)}\n")
    print(f"{name}: {len(points)} runs; summary {merged}")
    return EXIT_OK


def _run_tyrant_collapse(out_dir) -> int:
    path = os.path.join(out_dir, "tyrant-collapse_summary.csv")
    with open(path, "w") as fh:
        fh.write("self_identify,round,rate_a_to_b,rate_b_to_a,fraction_of_initial\n")
        for flag in ("off", "on"):
            trajectory = tyrant_pair_fixture(self_identify=(flag == "on"), rounds=40)
            initial = trajectory[0][1]
            for rnd, ab, ba in trajectory:
                frac = ab / initial if initial else 0.0
                fh.write(f"{flag},{rnd},{_fmt_cell(ab)},{_fmt_cell(ba)},{_fmt_cell(frac)}\n")
    print(f"tyrant-collapse: trajectories in {path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    import resource

    counts = [int(x) for x in args.nodes.split(",") if x]
    if not counts or any(c <= 0 for c in counts):
        print("bench: node counts must be positive", file=sys.stderr)
        return EXIT_CONFIG
    rows = []
    for n in counts:
        cfg = bench_config(n)
        result = run_scenario(cfg)
        peak_kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
        rows.append(
            (n, result.sim_end / 3600.0, result.wall_time / 3600.0,
             sum(result.events.values()), sum(result.messages.values()), peak_kb // 1024)
        )
    header = f"{'n':>6} {'sim_h':>8} {'real_h':>10} {'events':>12} {'messages':>12} {'mem_MB':>8}"
    print(header)
    lines = [header]
    for n, sim_h, real_h, events, msgs, mem in rows:
        line = f"{n:>6} {sim_h:>8.2f} {real_h:>10.4f} {events:>12} {msgs:>12} {mem:>8}"
        print(line)
        lines.append(line)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "bench.csv")
        with open(path, "w") as fh:
            fh.write("n,sim_hours,real_hours,events,messages,peak_mem_mb\n")
            for n, sim_h, real_h, events, msgs, mem in rows:
                fh.write(f"{n},{_fmt_cell(sim_h)},{_fmt_cell(real_h)},{events},{msgs},{mem}\n")
    return EXIT_OK


def bench_config(n: int) -> ScenarioConfig:
    """Single-seed benchmark swarm: simultaneous joins, 100 MB file,
    512 Kbps seed, 56 Kbps symmetric clients."""
    return ScenarioConfig(
        node_count=n,
        file_bytes=100_000_000,
        seed=1,
        horizon=400000.0,
        time_compression=1.0,
        initial_seeds=1,
        initial_seed_up_bps=512e3,
        bandwidth_classes=(56e3,),
        upload_ratio=1.0,
        trace_kind="simultaneous",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmsim",
        description="Flow-level BitTorrent swarm simulator with reward seeding",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario from a config file")
    p_run.add_argument("--config", required=True, help="scenario config path")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the root RNG seed")
    p_run.add_argument("--trace", default=None, help="override the join-time trace file")
    p_run.set_defaults(func=cmd_run)

    p_preset = sub.add_parser("preset", help="run a named experiment preset")
    p_preset.add_argument("--preset", required=True, help="preset name")
    p_preset.add_argument("--out", required=True, help="output directory")
    p_preset.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p_preset.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    p_preset.add_argument("--seed", type=int, default=None, help="base seed for repetitions")
    p_preset.set_defaults(func=cmd_preset)

    p_bench = sub.add_parser("bench", help="scaling benchmark over node counts")
    p_bench.add_argument("--nodes", default="10,100", help="comma-separated node counts")
    p_bench.add_argument("--out", default=None, help="optional output directory")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
