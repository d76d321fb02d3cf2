"""Experiment description: configuration schema, churn traces, populations.

A scenario is a flat `key = value` file with dotted section keys. The
same dataclass also backs the built-in presets. Scenario times (join
times, seeding durations) are multiplied by `time_compression`; protocol
timers (choke interval, announce period, ...) are real protocol constants
and are never scaled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .engine import derive_rng

ROLES = ("altruistic", "standard", "leech")

TRADING_KINDS = ("standard-tft", "tyrant")
SEEDING_KINDS = ("round-robin", "reward-lottery", "none")

# Download classes spanning the DSL range 128 Kbps .. 5 Mbps, uniform weights.
DEFAULT_CLASSES = (128e3, 256e3, 512e3, 1e6, 2e6, 5e6)

# Seconds seeded after completion, before time compression.
SEED_DURATION = {
    "altruistic": (24 * 3600.0, 48 * 3600.0),
    "standard": (3600.0, 7200.0),
    "leech": (0.0, 0.0),
}


class ConfigError(Exception):
    """Invalid scenario configuration; message names the offending key."""


@dataclass
class PopulationSpec:
    fraction: float
    trading: str = "standard-tft"
    seeding: str = "round-robin"


@dataclass
class ScenarioConfig:
    """Complete description of one simulation run."""

    node_count: int = 200
    file_bytes: int = 64 * 2**20
    piece_bytes: int = 262144
    block_bytes: int = 16384
    seed: int = 1
    horizon: float = 40000.0
    time_compression: float = 0.1  # multiplier on scenario times (0.1 = 10x faster)

    initial_seeds: int = 1
    initial_seed_up_bps: float = 5e6

    altruistic: PopulationSpec = field(
        default_factory=lambda: PopulationSpec(0.10, "standard-tft", "round-robin")
    )
    standard: PopulationSpec = field(
        default_factory=lambda: PopulationSpec(0.70, "standard-tft", "round-robin")
    )
    leech: PopulationSpec = field(
        default_factory=lambda: PopulationSpec(0.20, "standard-tft", "none")
    )

    reservation: float = 0.75  # fraction of seed slots reserved for known seeders
    overlap: float = 1.0  # fraction of altruists holding synthetic history
    ignore_tyrants: bool = False
    observe_in_run: bool = True
    use_synthetic_history: bool = True

    tyrant_gamma: float = 0.9
    tyrant_delta: float = 1.2
    tyrant_streak_rounds: int = 1
    tyrant_self_identify: bool = True

    trace_kind: str = "synthetic"  # synthetic | file
    trace_file: str = ""
    trace_peak_rate: float = 1.0  # arrivals/s at release time (uncompressed)
    trace_decay_constant: float = 6000.0  # seconds (uncompressed)

    bandwidth_classes: tuple = DEFAULT_CLASSES
    upload_ratio: float = 0.5  # DSL profile: upload is exactly half of download

    active_set: int = 4
    optimistic_slots: int = 1
    seed_slots: int = 8
    choke_interval: float = 10.0
    optimistic_interval: float = 30.0
    seed_rotation: float = 30.0
    pipeline_depth: int = 5
    request_timeout: float = 60.0
    tracker_request: int = 50
    min_neighbors: int = 20
    reannounce_interval: float = 1800.0

    def populations(self) -> dict:
        return {"altruistic": self.altruistic, "standard": self.standard, "leech": self.leech}

    def validate(self) -> None:
        if self.node_count < 2:
            raise ConfigError("node_count must be >= 2")
        if self.file_bytes <= 0:
            raise ConfigError("file_bytes must be positive")
        if self.piece_bytes % self.block_bytes != 0:
            raise ConfigError("piece_bytes must be divisible by block_bytes")
        total = sum(p.fraction for p in self.populations().values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(
                f"populations.*.fraction must sum to 1 (got {total!r}); "
                "check populations.altruistic.fraction and friends"
            )
        for name, pop in self.populations().items():
            if pop.fraction < 0:
                raise ConfigError(f"populations.{name}.fraction must be >= 0")
            if pop.trading not in TRADING_KINDS:
                raise ConfigError(f"populations.{name}.trading must be one of {TRADING_KINDS}")
            if pop.seeding not in SEEDING_KINDS:
                raise ConfigError(f"populations.{name}.seeding must be one of {SEEDING_KINDS}")
        if not 0.0 <= self.reservation <= 1.0:
            raise ConfigError("reservation must lie in [0, 1]")
        if not 0.0 <= self.overlap <= 1.0:
            raise ConfigError("overlap must lie in [0, 1]")
        if self.time_compression <= 0:
            raise ConfigError("time_compression must be positive")
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if self.initial_seeds < 0:
            raise ConfigError("initial_seeds must be >= 0")
        if self.trace_kind not in ("synthetic", "file", "simultaneous"):
            raise ConfigError("trace.kind must be synthetic, file, or simultaneous")
        if self.trace_kind == "file" and not self.trace_file:
            raise ConfigError("trace.file is required when trace.kind = file")
        if self.trace_kind == "synthetic":
            if self.trace_peak_rate <= 0 or self.trace_decay_constant <= 0:
                raise ConfigError("trace.peak_rate and trace.decay_constant must be positive")
        if self.upload_ratio <= 0:
            raise ConfigError("bandwidth.upload_ratio must be positive")
        if not self.bandwidth_classes or any(c <= 0 for c in self.bandwidth_classes):
            raise ConfigError("bandwidth.classes must be positive rates")


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "yes", "1", "on"):
        return True
    if text.lower() in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_classes(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _fmt_classes(classes) -> str:
    return ", ".join(_fmt_num(c) for c in classes)


def _fmt_num(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float) and x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


# key -> (attribute path, parse, format). Population keys are generated.
_KEY_MAP = {
    "node_count": ("node_count", int),
    "file_bytes": ("file_bytes", int),
    "piece_bytes": ("piece_bytes", int),
    "block_bytes": ("block_bytes", int),
    "seed": ("seed", int),
    "horizon": ("horizon", float),
    "time_compression": ("time_compression", float),
    "initial_seeds": ("initial_seeds", int),
    "initial_seed_up_bps": ("initial_seed_up_bps", float),
    "reservation": ("reservation", float),
    "overlap": ("overlap", float),
    "ignore_tyrants": ("ignore_tyrants", _parse_bool),
    "observe_in_run": ("observe_in_run", _parse_bool),
    "use_synthetic_history": ("use_synthetic_history", _parse_bool),
    "tyrant.gamma": ("tyrant_gamma", float),
    "tyrant.delta": ("tyrant_delta", float),
    "tyrant.streak_rounds": ("tyrant_streak_rounds", int),
    "tyrant.self_identify": ("tyrant_self_identify", _parse_bool),
    "trace.kind": ("trace_kind", str),
    "trace.file": ("trace_file", str),
    "trace.peak_rate": ("trace_peak_rate", float),
    "trace.decay_constant": ("trace_decay_constant", float),
    "bandwidth.classes": ("bandwidth_classes", _parse_classes),
    "bandwidth.upload_ratio": ("upload_ratio", float),
    "protocol.active_set": ("active_set", int),
    "protocol.optimistic_slots": ("optimistic_slots", int),
    "protocol.seed_slots": ("seed_slots", int),
    "protocol.choke_interval": ("choke_interval", float),
    "protocol.optimistic_interval": ("optimistic_interval", float),
    "protocol.seed_rotation": ("seed_rotation", float),
    "protocol.pipeline_depth": ("pipeline_depth", int),
    "protocol.request_timeout": ("request_timeout", float),
    "protocol.tracker_request": ("tracker_request", int),
    "protocol.min_neighbors": ("min_neighbors", int),
    "protocol.reannounce_interval": ("reannounce_interval", float),
}


def parse_config(text: str) -> ScenarioConfig:
    """Parse the line-oriented `key = value` scenario format.

    Unknown keys are errors; `#` starts a comment.
    """
    cfg = ScenarioConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _KEY_MAP:
            attr, parse = _KEY_MAP[key]
            try:
                setattr(cfg, attr, parse(value))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
            continue
        parts = key.split(".")
        if len(parts) == 3 and parts[0] == "populations" and parts[1] in ROLES:
            pop = getattr(cfg, parts[1])
            if parts[2] == "fraction":
                try:
                    pop.fraction = float(value)
                except ValueError as exc:
                    raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
            elif parts[2] == "trading":
                pop.trading = value
            elif parts[2] == "seeding":
                pop.seeding = value
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            continue
        raise ConfigError(f"line {lineno}: unknown key {key!r}")
    cfg.validate()
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def format_config(cfg: ScenarioConfig) -> str:
    """Serialize a config; parse(format(cfg)) round-trips exactly."""
    lines = []
    for key, (attr, _) in _KEY_MAP.items():
        value = getattr(cfg, attr)
        if key == "bandwidth.classes":
            lines.append(f"{key} = {_fmt_classes(value)}")
        elif isinstance(value, bool):
            lines.append(f"{key} = {_fmt_num(value)}")
        elif isinstance(value, str):
            lines.append(f"{key} = {value}")
        else:
            lines.append(f"{key} = {_fmt_num(value)}")
    for role in ROLES:
        pop = getattr(cfg, role)
        lines.append(f"populations.{role}.fraction = {_fmt_num(pop.fraction)}")
        lines.append(f"populations.{role}.trading = {pop.trading}")
        lines.append(f"populations.{role}.seeding = {pop.seeding}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Churn traces


def parse_trace(path, time_scale: float = 1.0) -> list:
    """Join times from a trace file: one non-negative number per line,
    seconds; `#` comments allowed. Output is sorted ascending and scaled
    by the time-compression factor."""
    times = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                t = float(line)
            except ValueError as exc:
                raise ConfigError(f"{path}: line {lineno}: not a number: {line!r}") from exc
            if not math.isfinite(t) or t < 0:
                raise ConfigError(f"{path}: line {lineno}: join time must be >= 0")
            times.append(t * time_scale)
    if not times:
        raise ConfigError(f"{path}: trace file contains no join times")
    times.sort()
    return times


def gen_flash_crowd(n: int, peak_rate: float, decay_constant: float, rng) -> list:
    """Synthetic flash-crowd join times.

    Models an inhomogeneous arrival process with rate
    peak_rate * exp(-t / decay_constant). Conditioned on a fixed total of
    n arrivals the times are iid exponential with mean decay_constant
    (the peak rate cancels; it is validated but does not shift the law).
    The first arrival is pinned to t = 0. The resulting membership curve
    rises sharply and then decays.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if peak_rate <= 0 or decay_constant <= 0:
        raise ValueError("peak_rate and decay_constant must be positive")
    times = [0.0]
    times.extend(rng.expovariate(1.0 / decay_constant) for _ in range(n - 1))
    times.sort()
    return times


# --------------------------------------------------------------------------
# Population assignment


@dataclass
class NodePlan:
    """Everything decided about one node before the run starts."""

    node_id: int
    role: str
    join_time: float
    down_bps: float
    up_bps: float
    seed_duration: float  # already time-compressed
    trading: str
    seeding: str


def largest_remainder_counts(n: int, fractions: dict) -> dict:
    """Exact per-role counts for any n under largest-remainder rounding."""
    quotas = {k: n * f for k, f in fractions.items()}
    counts = {k: math.floor(q) for k, q in quotas.items()}
    short = n - sum(counts.values())
    order = sorted(fractions, key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in order[:short]:
        counts[k] += 1
    return counts


def assign_roles_and_bandwidth(cfg: ScenarioConfig, node_ids: list) -> list:
    """Per-node (role, bandwidth profile, seeding duration).

    Role counts follow the population fractions exactly; download class is
    uniform over the configured levels with upload a fixed ratio of it;
    seeding durations sample each role's interval, scaled by the
    time-compression factor.
    """
    fractions = {name: pop.fraction for name, pop in cfg.populations().items()}
    counts = largest_remainder_counts(len(node_ids), fractions)
    role_pool = []
    for role in ROLES:
        role_pool.extend([role] * counts[role])
    role_rng = derive_rng(cfg.seed, "scenario", "roles")
    role_rng.shuffle(role_pool)

    plans = []
    classes = list(cfg.bandwidth_classes)
    for node_id, role in zip(node_ids, role_pool):
        node_rng = derive_rng(cfg.seed, "node", node_id, "profile")
        down = classes[node_rng.randrange(len(classes))]
        up = down * cfg.upload_ratio
        lo, hi = SEED_DURATION[role]
        duration = node_rng.uniform(lo, hi) * cfg.time_compression if hi > 0 else 0.0
        pop = cfg.populations()[role]
        plans.append(
            NodePlan(
                node_id=node_id,
                role=role,
                join_time=0.0,
                down_bps=down,
                up_bps=up,
                seed_duration=duration,
                trading=pop.trading,
                seeding=pop.seeding,
            )
        )
    return plans


def build_join_times(cfg: ScenarioConfig, n: int) -> list:
    if cfg.trace_kind == "simultaneous":
        return [0.0] * n
    if cfg.trace_kind == "file":
        times = parse_trace(cfg.trace_file, cfg.time_compression)
        if len(times) < n:
            # Short traces wrap around; offsets keep joins inside the ramp.
            times = [times[i % len(times)] for i in range(n)]
            times.sort()
        return times[:n]
    rng = derive_rng(cfg.seed, "scenario", "trace")
    times = gen_flash_crowd(
        n, cfg.trace_peak_rate / cfg.time_compression,
        cfg.trace_decay_constant * cfg.time_compression, rng,
    )
    return times


def build_plan(cfg: ScenarioConfig) -> list:
    """Full per-node plan (roles, bandwidth, join times) for a run."""
    cfg.validate()
    first_id = cfg.initial_seeds
    node_ids = list(range(first_id, first_id + cfg.node_count))
    plans = assign_roles_and_bandwidth(cfg, node_ids)
    joins = build_join_times(cfg, cfg.node_count)
    for plan, t in zip(plans, joins):
        plan.join_time = t
    return plans
