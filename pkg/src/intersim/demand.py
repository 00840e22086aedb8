"""Demand ingestion, dataset statistics, and seeded demand synthesis.

Scenario files are CSV with header
``vehicle_id,entry_time_s,start_lane,end_lane,vclass`` (vclass optional,
defaults to HV). Entry times are stored at 0.1 s resolution. Every row
must resolve to a legal movement of the scenario's intersection.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasibleMix, InvalidMovement, ParseError
from .net import Approach, IntersectionModel, TurnType, movement_of

HV = "HV"
RV = "RV"

CSV_HEADER = ["vehicle_id", "entry_time_s", "start_lane", "end_lane", "vclass"]

BUNDLED_SCENARIOS = ("WGG-N", "WGG-AN", "WGM-N", "WGM-AN")


@dataclass(frozen=True)
class VehicleRecord:
    """One dataset row: when and where a vehicle reaches the head of its
    starting lane, and which lane it leaves on."""

    vehicle_id: int
    entry_time: float
    start_lane: str
    end_lane: str
    vclass: str = HV

    def __post_init__(self):
        if self.vehicle_id < 0:
            raise ValueError("vehicle_id must be >= 0")
        if self.entry_time < 0:
            raise ValueError("entry_time must be >= 0")
        if self.vclass not in (HV, RV):
            raise ValueError(f"vclass must be HV or RV, got {self.vclass!r}")


@dataclass(frozen=True)
class Scenario:
    """A time-sorted demand table bound to one intersection model."""

    name: str
    model: IntersectionModel
    records: tuple
    duration: float

    def __post_init__(self):
        times = [r.entry_time for r in self.records]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("records must be sorted by entry_time")
        if times and times[-1] > self.duration:
            raise ValueError("entry times must lie within the scenario duration")

    @property
    def intersection(self) -> str:
        return self.model.name

    def movement_for(self, record: VehicleRecord):
        return movement_of(self.model, record.start_lane, record.end_lane)


@dataclass(frozen=True)
class DirectionalDemand:
    """Vehicle counts by origin approach."""

    counts: dict
    total: int

    def __post_init__(self):
        if self.total != sum(self.counts.values()):
            raise ValueError("total must equal the sum of directional counts")

    def __getitem__(self, approach: Approach) -> int:
        return self.counts.get(approach, 0)

    @classmethod
    def of(cls, nb=0, sb=0, eb=0, wb=0):
        counts = {Approach.NB: nb, Approach.SB: sb, Approach.EB: eb, Approach.WB: wb}
        return cls(counts=counts, total=sum(counts.values()))


@dataclass(frozen=True)
class StabilitySeries:
    """Per-minute arrival counts and their running average."""

    minute_counts: tuple
    cumulative_average: tuple


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def load_scenario(path, model: IntersectionModel, name=None, duration=None) -> Scenario:
    """Load and validate a scenario CSV.

    Rows are re-sorted by entry time (non-monotonic input is not an
    error). Rows referencing unknown lanes or illegal movements raise
    InvalidMovement naming the offending row.
    """
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: missing header", path=path, row=1) from None
        header = [h.strip() for h in header]
        if header[:4] != CSV_HEADER[:4] or header not in (CSV_HEADER, CSV_HEADER[:4]):
            raise ParseError(
                f"bad header {header!r}, expected {CSV_HEADER!r} (vclass optional)",
                path=path, row=1,
            )
        has_vclass = len(header) == 5
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            expected = 5 if has_vclass else 4
            if len(row) != expected:
                raise ParseError(
                    f"expected {expected} columns, got {len(row)}", path=path, row=row_no
                )
            try:
                vid = int(row[0])
            except ValueError:
                raise ParseError("vehicle_id must be an integer",
                                 path=path, row=row_no, column="vehicle_id") from None
            try:
                t = float(row[1])
            except ValueError:
                raise ParseError("entry_time_s must be a number",
                                 path=path, row=row_no, column="entry_time_s") from None
            vclass = row[4].strip() if has_vclass and row[4].strip() else HV
            if vclass not in (HV, RV):
                raise ParseError(f"unknown vclass {vclass!r}",
                                 path=path, row=row_no, column="vclass")
            start, end = row[2].strip(), row[3].strip()
            try:
                movement_of(model, start, end)
            except Exception as exc:
                raise InvalidMovement(
                    f"({start!r} -> {end!r}) is not a movement of {model.name}: {exc}",
                    row=row_no,
                ) from exc
            records.append(VehicleRecord(vid, round(t, 1), start, end, vclass))
    records.sort(key=lambda r: (r.entry_time, r.vehicle_id))
    if duration is None:
        if records:
            duration = max(3600.0, 60.0 * math.ceil(records[-1].entry_time / 60.0))
        else:
            duration = 3600.0
    if name is None:
        name = "custom"
    return Scenario(name=name, model=model, records=tuple(records), duration=duration)


def save_scenario(scenario: Scenario, path):
    """Write the scenario back out in the load schema (round-trip safe)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in scenario.records:
            writer.writerow([r.vehicle_id, f"{r.entry_time:.1f}", r.start_lane,
                             r.end_lane, r.vclass])


def directional_demand(s: Scenario) -> DirectionalDemand:
    counts = {a: 0 for a in Approach}
    for r in s.records:
        counts[s.model.lane(r.start_lane).approach] += 1
    return DirectionalDemand(counts=counts, total=len(s.records))


def turning_counts(s: Scenario) -> dict:
    """Counts keyed by (origin approach, turn type); every record counted once."""
    out = {}
    for r in s.records:
        m = s.movement_for(r)
        key = (s.model.lane(r.start_lane).approach, m.turn)
        out[key] = out.get(key, 0) + 1
    return out


def stability_series(s: Scenario) -> StabilitySeries:
    """Per-minute arrivals and the cumulative average throughput curve."""
    if s.duration < 60.0:
        raise ValueError("stability series needs at least one full minute")
    n_minutes = int(s.duration // 60)
    counts = [0] * n_minutes
    for r in s.records:
        k = min(int(r.entry_time // 60), n_minutes - 1)
        counts[k] += 1
    cum = []
    running = 0
    for k, c in enumerate(counts):
        running += c
        cum.append(running / (k + 1))
    return StabilitySeries(minute_counts=tuple(counts), cumulative_average=tuple(cum))


# ---------------------------------------------------------------------------
# Synthesis


def _largest_remainder(total: int, weights) -> list:
    """Integer quotas proportional to weights, summing exactly to total."""
    if total == 0 or not weights:
        return [0] * len(weights)
    wsum = float(sum(weights))
    if wsum <= 0:
        raise ValueError("weights must have positive sum")
    raw = [total * w / wsum for w in weights]
    quotas = [int(math.floor(x)) for x in raw]
    short = total - sum(quotas)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - quotas[i]), i))
    for i in order[:short]:
        quotas[i] += 1
    return quotas


def _movement_quotas(model: IntersectionModel, cell_counts) -> list:
    """Expand (approach, turn) -> count cells into per-movement quotas.

    Cells with several serving movements split as evenly as possible
    (leftmost lanes take the remainder).
    """
    quotas = []
    for approach in (Approach.NB, Approach.EB, Approach.SB, Approach.WB):
        for turn in (TurnType.LEFT, TurnType.STRAIGHT, TurnType.RIGHT):
            count = cell_counts.get((approach, turn), 0)
            if count == 0:
                continue
            movs = [
                m for m in model.movements
                if m.turn is turn and model.lane(m.origin).approach is approach
            ]
            if not movs:
                raise InfeasibleMix(
                    f"{model.name} has no {approach.value} {turn.name.lower()} movement"
                )
            movs.sort(key=lambda m: model.lane(m.origin).index)
            base, extra = divmod(count, len(movs))
            for i, m in enumerate(movs):
                q = base + (1 if i < extra else 0)
                if q:
                    quotas.append((m, q))
    return quotas


def _synthesize_from_cells(model, cell_counts, duration, seed, name) -> Scenario:
    quotas = _movement_quotas(model, cell_counts)
    rng = np.random.default_rng(seed)
    rows = []
    for m, q in quotas:
        times = rng.uniform(0.0, duration, size=q)
        for t in times:
            rows.append((round(float(t), 1), m))
    rows.sort(key=lambda x: (x[0], x[1].id))
    records = tuple(
        VehicleRecord(i, t, m.origin, m.destination, HV)
        for i, (t, m) in enumerate(rows)
    )
    return Scenario(name=name, model=model, records=records, duration=duration)


def synthesize_demand(targets: DirectionalDemand, turn_mix: dict, duration: float,
                      seed: int, model: IntersectionModel, name="custom") -> Scenario:
    """Generate a scenario whose directional totals equal the targets exactly.

    turn_mix maps each approach to {TurnType: fraction}; fractions must
    sum to 1 per approach. Per-approach turn quotas use largest-remainder
    rounding, so a mix expressed as exact count ratios reproduces those
    counts exactly. Arrival times are uniform over the duration,
    deterministic per seed.
    """
    cells = {}
    for approach in Approach:
        n = targets[approach]
        if n == 0:
            continue
        mix = turn_mix.get(approach)
        if not mix:
            raise InfeasibleMix(f"no turn mix given for {approach.value}")
        total_frac = sum(mix.values())
        if abs(total_frac - 1.0) > 1e-6:
            raise ValueError(f"turn mix for {approach.value} sums to {total_frac}, not 1")
        turns = sorted(mix, key=lambda t: t.value)
        quotas = _largest_remainder(n, [mix[t] for t in turns])
        for t, q in zip(turns, quotas):
            if q:
                cells[(approach, t)] = q
    return _synthesize_from_cells(model, cells, duration, seed, name)


def scale_demand(s: Scenario, factor: float, seed: int) -> Scenario:
    """Scale per-direction counts to round(n * factor), half-up.

    Added vehicles clone the approach's empirical turning distribution;
    removed vehicles are a seeded subsample. factor = 1 returns the
    scenario unchanged.
    """
    if factor <= 0:
        raise ValueError("factor must be > 0")
    rng = np.random.default_rng(seed)
    by_approach = {}
    for r in s.records:
        by_approach.setdefault(s.model.lane(r.start_lane).approach, []).append(r)

    kept = []
    added = []
    for approach in (Approach.NB, Approach.EB, Approach.SB, Approach.WB):
        recs = by_approach.get(approach, [])
        n_old = len(recs)
        n_new = _round_half_up(n_old * factor)
        if n_new == n_old:
            kept.extend(recs)
            continue
        if n_new < n_old:
            keep_idx = sorted(rng.choice(n_old, size=n_new, replace=False).tolist())
            kept.extend(recs[i] for i in keep_idx)
            continue
        kept.extend(recs)
        routes = sorted({(r.start_lane, r.end_lane) for r in recs})
        weights = np.array(
            [sum(1 for r in recs if (r.start_lane, r.end_lane) == rt) for rt in routes],
            dtype=float,
        )
        if not routes:
            raise InfeasibleMix(
                f"cannot scale up {approach.value}: no empirical routes to clone"
            )
        picks = rng.choice(len(routes), size=n_new - n_old, p=weights / weights.sum())
        times = rng.uniform(0.0, s.duration, size=n_new - n_old)
        for i, t in zip(picks.tolist(), times.tolist()):
            start, end = routes[i]
            added.append((round(t, 1), start, end))

    rows = [(r.entry_time, r.start_lane, r.end_lane, r.vclass) for r in kept]
    rows.extend((t, start, end, HV) for t, start, end in added)
    rows.sort(key=lambda x: (x[0], x[1], x[2]))
    records = tuple(
        VehicleRecord(i, t, start, end, vclass)
        for i, (t, start, end, vclass) in enumerate(rows)
    )
    return Scenario(name=f"{s.name}x{factor:g}", model=s.model, records=records,
                    duration=s.duration)


def truncate(s: Scenario, duration: float) -> Scenario:
    """Restrict a scenario to records entering within the first `duration` s."""
    if duration <= 0:
        raise ValueError("duration must be > 0")
    records = tuple(r for r in s.records if r.entry_time <= duration)
    return Scenario(name=s.name, model=s.model, records=records,
                    duration=min(s.duration, duration))


def assign_penetration(s: Scenario, p: float, seed: int) -> Scenario:
    """Mark exactly round(p * N) vehicles as robot vehicles, seeded."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("penetration must be in [0, 1]")
    n = len(s.records)
    k = _round_half_up(p * n)
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(n, size=k, replace=False).tolist()) if k else set()
    records = tuple(
        replace(r, vclass=RV if i in chosen else HV) for i, r in enumerate(s.records)
    )
    return Scenario(name=s.name, model=s.model, records=records, duration=s.duration)


# ---------------------------------------------------------------------------
# Bundled sample scenarios
#
# The raw dataset is not redistributable; the bundled samples are
# synthetic replicas that reproduce the published per-scenario statistics
# exactly: directional totals per approach, and the stated turning counts
# where published (WGG-AN westbound straight 248, eastbound straight 228).
# Remaining turn splits are plausible choices following the described
# qualitative patterns (see data/LAYOUTS.md).

_BUNDLED_SEEDS = {"WGG-N": 1101, "WGG-AN": 1102, "WGM-N": 1103, "WGM-AN": 1104}

# (approach, turn) -> count; totals match the published demand table.
_BUNDLED_CELLS = {
    "WGG-N": {
        (Approach.NB, TurnType.STRAIGHT): 160, (Approach.NB, TurnType.RIGHT): 70,
        (Approach.NB, TurnType.LEFT): 50,
        (Approach.SB, TurnType.STRAIGHT): 250, (Approach.SB, TurnType.LEFT): 95,
        (Approach.SB, TurnType.RIGHT): 65,
        (Approach.EB, TurnType.STRAIGHT): 450, (Approach.EB, TurnType.LEFT): 130,
        (Approach.EB, TurnType.RIGHT): 105,
        (Approach.WB, TurnType.STRAIGHT): 400, (Approach.WB, TurnType.LEFT): 110,
        (Approach.WB, TurnType.RIGHT): 98,
    },
    "WGG-AN": {
        (Approach.NB, TurnType.STRAIGHT): 240, (Approach.NB, TurnType.RIGHT): 110,
        (Approach.NB, TurnType.LEFT): 75,
        (Approach.SB, TurnType.STRAIGHT): 380, (Approach.SB, TurnType.LEFT): 150,
        (Approach.SB, TurnType.RIGHT): 99,
        (Approach.EB, TurnType.STRAIGHT): 228, (Approach.EB, TurnType.LEFT): 190,
        (Approach.EB, TurnType.RIGHT): 376,
        (Approach.WB, TurnType.STRAIGHT): 248, (Approach.WB, TurnType.LEFT): 120,
        (Approach.WB, TurnType.RIGHT): 237,
    },
    "WGM-N": {
        (Approach.NB, TurnType.STRAIGHT): 230, (Approach.NB, TurnType.LEFT): 120,
        (Approach.NB, TurnType.RIGHT): 53,
        (Approach.SB, TurnType.STRAIGHT): 260, (Approach.SB, TurnType.LEFT): 100,
        (Approach.SB, TurnType.RIGHT): 74,
        (Approach.EB, TurnType.STRAIGHT): 350, (Approach.EB, TurnType.LEFT): 90,
        (Approach.EB, TurnType.RIGHT): 87,
        (Approach.WB, TurnType.STRAIGHT): 440, (Approach.WB, TurnType.LEFT): 120,
        (Approach.WB, TurnType.RIGHT): 109,
    },
    "WGM-AN": {
        (Approach.NB, TurnType.STRAIGHT): 280, (Approach.NB, TurnType.LEFT): 150,
        (Approach.NB, TurnType.RIGHT): 64,
        (Approach.SB, TurnType.STRAIGHT): 310, (Approach.SB, TurnType.LEFT): 120,
        (Approach.SB, TurnType.RIGHT): 93,
        (Approach.EB, TurnType.STRAIGHT): 400, (Approach.EB, TurnType.LEFT): 120,
        (Approach.EB, TurnType.RIGHT): 105,
        (Approach.WB, TurnType.STRAIGHT): 460, (Approach.WB, TurnType.LEFT): 130,
        (Approach.WB, TurnType.RIGHT): 110,
    },
}


def _intersection_of(scenario_name: str) -> str:
    return scenario_name.split("-")[0]


def generate_bundled(name: str) -> Scenario:
    """Regenerate a bundled sample scenario from its statistics tables."""
    from .net import build_intersection

    if name not in _BUNDLED_CELLS:
        raise ValueError(f"unknown bundled scenario {name!r} (one of {BUNDLED_SCENARIOS})")
    model = build_intersection(_intersection_of(name))
    return _synthesize_from_cells(
        model, _BUNDLED_CELLS[name], 3600.0, _BUNDLED_SEEDS[name], name
    )


def bundled_scenario_path(name: str):
    from importlib import resources

    if name not in _BUNDLED_CELLS:
        raise ValueError(f"unknown bundled scenario {name!r} (one of {BUNDLED_SCENARIOS})")
    return resources.files("intersim.data").joinpath("scenarios", f"{name}.csv")


def load_bundled(name: str) -> Scenario:
    """Load a bundled sample scenario shipped with the package."""
    from importlib import resources

    from .net import build_intersection

    model = build_intersection(_intersection_of(name))
    ref = bundled_scenario_path(name)
    with resources.as_file(ref) as path:
        return load_scenario(path, model, name=name, duration=3600.0)
