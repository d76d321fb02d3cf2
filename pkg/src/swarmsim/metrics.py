"""Outcome metrics: download efficiency, CDFs, medians, report files.

Efficiency is the achieved download rate over the object divided by the
node's download capacity: e = (n_bits / (td - t0)) / k. It is perfectly
normalized: no node, fast or slow, can beat e = 1. Population medians are
the headline statistic; incomplete nodes are excluded from medians and
reported through the completion fraction instead.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field


@dataclass
class NodeRecord:
    """Per-node outcome of one run."""

    node_id: int
    role: str
    down_bps: float  # k, the maximum download capacity
    t0: float
    td: float | None = None  # completion time; None if incomplete at horizon
    bytes_up: float = 0.0
    bytes_down: float = 0.0
    duplicate_bytes: float = 0.0
    seeded_bytes_given: float = 0.0
    seed_duration: float = 0.0

    @property
    def complete(self) -> bool:
        return self.td is not None

    def download_time(self) -> float | None:
        return None if self.td is None else self.td - self.t0

    def efficiency_or_none(self, n_bits: float) -> float | None:
        if self.td is None:
            return None
        return efficiency(n_bits, self.t0, self.td, self.down_bps)


def efficiency(n_bits: float, t0: float, td: float, k: float) -> float:
    """Download-pipe utilization over the node's lifetime in the swarm."""
    if td <= t0:
        raise ValueError("td must be after t0")
    if k <= 0:
        raise ValueError("download capacity must be positive")
    if n_bits <= 0:
        raise ValueError("object size must be positive")
    return (n_bits / (td - t0)) / k


def median(values) -> float:
    """Midpoint of the middle two for even counts."""
    values = sorted(values)
    if not values:
        raise ValueError("median of empty input")
    n = len(values)
    mid = n // 2
    if n % 2 == 1:
        return values[mid]
    return (values[mid - 1] + values[mid]) / 2.0


def cdf(values) -> list:
    """Step CDF points (value, fraction <= value), fractions in (0, 1]."""
    values = sorted(values)
    if not values:
        raise ValueError("cdf of empty input")
    n = len(values)
    points = []
    for i, v in enumerate(values):
        frac = (i + 1) / n
        if points and points[-1][0] == v:
            points[-1] = (v, frac)
        else:
            points.append((v, frac))
    return points


@dataclass
class PopulationSummary:
    role: str
    count: int
    completed: int
    completion_fraction: float
    median_efficiency: float | None
    median_download_time: float | None
    efficiencies: list = field(default_factory=list)
    download_times: list = field(default_factory=list)


def population_summary(records, role: str, n_bits: float) -> PopulationSummary:
    """Medians over completed nodes of one role, with completion fraction."""
    members = [r for r in records if r.role == role]
    done = [r for r in members if r.complete]
    effs = [r.efficiency_or_none(n_bits) for r in done]
    times = [r.download_time() for r in done]
    return PopulationSummary(
        role=role,
        count=len(members),
        completed=len(done),
        completion_fraction=(len(done) / len(members)) if members else 0.0,
        median_efficiency=median(effs) if effs else None,
        median_download_time=median(times) if times else None,
        efficiencies=effs,
        download_times=times,
    )


@dataclass
class RunAggregate:
    """Across-seed statistics for one metric (Table 3/4 style columns).

    Both confidence-style columns are emitted and labeled: the standard
    normal-approximation CI half-width 1.96*sd/sqrt(n) and the plain
    1.96*sd spread.
    """

    mean: float
    std: float
    ci95_mean: float
    ci95_spread: float
    n: int


def aggregate_runs(values) -> RunAggregate:
    values = list(values)
    n = len(values)
    if n == 0:
        raise ValueError("aggregate of empty input")
    mean = sum(values) / n
    if n > 1:
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
    else:
        var = 0.0
    std = math.sqrt(var)
    return RunAggregate(
        mean=mean,
        std=std,
        ci95_mean=1.96 * std / math.sqrt(n),
        ci95_spread=1.96 * std,
        n=n,
    )


def membership_timeseries(records, step: float, horizon: float) -> list:
    """(t, downloading, seeding) sampled every `step` seconds.

    A node downloads over [t0, td] (or to the horizon if incomplete) and
    seeds over [td, td + seed_duration].
    """
    if step <= 0:
        raise ValueError("step must be positive")
    out = []
    t = 0.0
    steps = int(math.floor(horizon / step + 1e-9))
    for i in range(steps + 1):
        t = i * step
        downloading = 0
        seeding = 0
        for r in records:
            if r.role == "seed":
                if r.t0 <= t:
                    seeding += 1
                continue
            end = r.td if r.td is not None else horizon
            if r.t0 <= t <= end and r.td != r.t0:
                if r.td is None or t < r.td:
                    downloading += 1
            if r.td is not None and r.td <= t < r.td + r.seed_duration:
                seeding += 1
        out.append((t, downloading, seeding))
    return out


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_report(out_dir, run_id, config_text, records, n_bits, horizon, step=None, extra_manifest=()):
    """Write the run's four CSV files plus the manifest.

    CSVs: summary (one row per role and metric), efficiency CDF,
    download-time CDF (headers `value,cum_fraction`), and the membership
    time series. The manifest lists the full scenario configuration and
    the code version; identical seeded runs produce byte-identical files.
    """
    from . import __version__

    os.makedirs(out_dir, exist_ok=True)
    roles = [r for r in ("altruistic", "standard", "leech") if any(x.role == r for x in records)]
    paths = {}

    summary_path = os.path.join(out_dir, f"{run_id}_summary.csv")
    with open(summary_path, "w") as fh:
        fh.write("role,metric,value\n")
        for role in roles:
            s = population_summary(records, role, n_bits)
            fh.write(f"{role},count,{s.count}\n")
            fh.write(f"{role},completed,{s.completed}\n")
            fh.write(f"{role},completion_fraction,{_fmt(s.completion_fraction)}\n")
            fh.write(f"{role},median_efficiency,{_fmt(s.median_efficiency)}\n")
            fh.write(f"{role},median_download_time_s,{_fmt(s.median_download_time)}\n")
    paths["summary"] = summary_path

    all_effs = [r.efficiency_or_none(n_bits) for r in records if r.complete and r.role != "seed"]
    all_times = [r.download_time() for r in records if r.complete and r.role != "seed"]
    eff_path = os.path.join(out_dir, f"{run_id}_efficiency_cdf.csv")
    with open(eff_path, "w") as fh:
        fh.write("value,cum_fraction\n")
        if all_effs:
            for v, f in cdf(all_effs):
                fh.write(f"{_fmt(v)},{_fmt(f)}\n")
    paths["efficiency_cdf"] = eff_path

    time_path = os.path.join(out_dir, f"{run_id}_download_time_cdf.csv")
    with open(time_path, "w") as fh:
        fh.write("value,cum_fraction\n")
        if all_times:
            for v, f in cdf(all_times):
                fh.write(f"{_fmt(v)},{_fmt(f)}\n")
    paths["download_time_cdf"] = time_path

    if step is None:
        step = max(horizon / 200.0, 1.0)
    member_path = os.path.join(out_dir, f"{run_id}_membership.csv")
    with open(member_path, "w") as fh:
        fh.write("t,downloading,seeding\n")
        for t, d, s in membership_timeseries(records, step, horizon):
            fh.write(f"{_fmt(t)},{d},{s}\n")
    paths["membership"] = member_path

    manifest_path = os.path.join(out_dir, f"{run_id}_manifest.txt")
    with open(manifest_path, "w") as fh:
        fh.write(f"# swarmsim {__version__} run manifest: {run_id}\n")
        for key, value in extra_manifest:
            fh.write(f"# {key}: {value}\n")
        fh.write(config_text)
    paths["manifest"] = manifest_path
    return paths
