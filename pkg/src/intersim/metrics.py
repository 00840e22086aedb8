"""Evaluation surface: wait time, travel time, CO2 rate, match reports.

The CO2 model is a power-based instantaneous rate: engine load follows
the tractive power demand P = v (m a + c_roll + c_drag v^2) with an idle
floor, so the rate is never below idling and grows with speed and
acceleration. Coefficients are package defaults documented here, not a
calibration against any published emission table; cross-scenario
comparisons are directional.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from .dynamics import Phase, WAIT_SPEED_THRESHOLD
from .errors import NoCompletedTrips, VehicleSetMismatch


@dataclass(frozen=True)
class EmissionParams:
    """Coefficients of the instantaneous CO2 rate model."""

    idle_rate: float = 1400.0   # mg/s at rest
    mass: float = 1400.0        # effective vehicle mass, kg
    c_roll: float = 160.0       # rolling resistance force, N
    c_drag: float = 0.45        # aerodynamic drag coefficient, N s^2/m^2
    c_power: float = 0.28       # mg CO2 per joule of tractive work

    def __post_init__(self):
        if self.idle_rate < 0:
            raise ValueError("idle_rate must be >= 0")


def co2_rate(v: float, a: float, p: EmissionParams = EmissionParams()) -> float:
    """Instantaneous CO2 emission rate in mg/s; never below the idle rate."""
    if v < 0:
        raise ValueError("speed must be nonnegative")
    power = v * (p.mass * a + p.c_roll + p.c_drag * v * v)
    return p.idle_rate + p.c_power * max(0.0, power)


def accumulate_wait(v, dt: float) -> float:
    """Add dt to a vehicle's waiting time iff it is effectively stopped
    while approaching or inside the intersection. Returns the new total."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if v.speed < WAIT_SPEED_THRESHOLD and v.phase in (Phase.APPROACHING, Phase.IN_INTERSECTION):
        v.waiting_accum += dt
    return v.waiting_accum


@dataclass(frozen=True)
class TripLog:
    """Per-vehicle trip record emitted by a finished simulation."""

    vehicle_id: int
    scheduled_entry: float
    entry_actual: float | None
    exit_actual: float | None
    waiting_accum: float
    start_lane: str
    end_lane: str
    movement_id: str
    vclass: str = "HV"

    @property
    def completed(self) -> bool:
        return self.exit_actual is not None

    @property
    def travel_time(self) -> float | None:
        if not self.completed or self.entry_actual is None:
            return None
        return self.exit_actual - self.entry_actual


@dataclass(frozen=True)
class MetricsSummary:
    avg_travel_time: float
    avg_wait_time: float
    co2_per_timestep: float
    completed: int
    total: int

    def __post_init__(self):
        for name in ("avg_travel_time", "avg_wait_time", "co2_per_timestep"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def summarize(trips, co2_total_mg: float, n_timesteps: int) -> MetricsSummary:
    """Averages over completed trips plus the fleet CO2 rate per timestep."""
    completed = [t for t in trips if t.completed]
    if not completed:
        raise NoCompletedTrips("no vehicle completed its trip")
    avg_travel = sum(t.travel_time for t in completed) / len(completed)
    avg_wait = sum(t.waiting_accum for t in completed) / len(completed)
    co2_step = co2_total_mg / n_timesteps if n_timesteps > 0 else 0.0
    return MetricsSummary(
        avg_travel_time=avg_travel,
        avg_wait_time=avg_wait,
        co2_per_timestep=co2_step,
        completed=len(completed),
        total=len(trips),
    )


def summarize_world(world) -> MetricsSummary:
    return summarize(world.trip_logs(), world.co2_total_mg, world.step_count)


@dataclass(frozen=True)
class MatchReport:
    """Reconstruction fidelity against the recorded dataset."""

    n_vehicles: int
    start_lane_mismatch: int
    end_lane_mismatch: int
    timestep_mismatch: int
    total_mismatch: int

    def __post_init__(self):
        if self.total_mismatch > self.n_vehicles:
            raise ValueError("total_mismatch cannot exceed n_vehicles")

    @property
    def match_rate(self) -> float:
        if self.n_vehicles == 0:
            return 100.0
        return 100.0 * (self.n_vehicles - self.total_mismatch) / self.n_vehicles

    @classmethod
    def from_counts(cls, n, start=0, end=0, timestep=0, total=None):
        """Fixture constructor; total defaults to the per-kind sum (valid
        when no vehicle has two mismatch kinds)."""
        if total is None:
            total = start + end + timestep
        return cls(n, start, end, timestep, total)


def match_report(replay_trips, dataset, timestep_tol: float = 2.0,
                 check_timing: bool = True) -> MatchReport:
    """Compare a replay's trip logs against the scenario they replayed.

    A vehicle is mismatched on start lane, end lane, or (optionally) on
    insertion timing when |entry_actual - entry_time| exceeds the
    tolerance. Each vehicle counts at most once in the total.
    """
    by_id = {t.vehicle_id: t for t in replay_trips}
    rec_ids = {r.vehicle_id for r in dataset.records}
    if set(by_id) != rec_ids:
        raise VehicleSetMismatch(
            f"replay has {len(by_id)} vehicles, dataset has {len(rec_ids)}; ids differ"
        )
    start = end = timing = total = 0
    for rec in dataset.records:
        trip = by_id[rec.vehicle_id]
        flags = 0
        if trip.start_lane != rec.start_lane:
            start += 1
            flags += 1
        if trip.end_lane != rec.end_lane:
            end += 1
            flags += 1
        if check_timing:
            if trip.entry_actual is None or abs(trip.entry_actual - rec.entry_time) > timestep_tol:
                timing += 1
                flags += 1
        if flags:
            total += 1
    return MatchReport(
        n_vehicles=len(dataset.records),
        start_lane_mismatch=start,
        end_lane_mismatch=end,
        timestep_mismatch=timing,
        total_mismatch=total,
    )


def comparison_table(rows) -> tuple[str, str]:
    """Aligned text table plus CSV for labelled metric summaries."""
    if not rows:
        raise ValueError("at least one row required")
    for label, _ in rows:
        if not label:
            raise ValueError("row labels must be nonempty")
    header = ("label", "avg_travel_s", "avg_wait_s", "co2_mg_per_step", "completed", "total")
    cells = [header]
    for label, s in rows:
        cells.append(
            (label, f"{s.avg_travel_time:.2f}", f"{s.avg_wait_time:.2f}",
             f"{s.co2_per_timestep:.2f}", str(s.completed), str(s.total))
        )
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    text = "\n".join(
        "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells
    )
    buf = io.StringIO()
    for row in cells:
        buf.write(",".join(row) + "\n")
    return text, buf.getvalue()


def match_report_csv(reports) -> str:
    """CSV mirroring the reconstruction-fidelity table columns."""
    buf = io.StringIO()
    buf.write("label,n_vehicles,start_lane_mismatch,end_lane_mismatch,"
              "timestep_mismatch,total_mismatch,match_rate_pct\n")
    for label, r in reports:
        buf.write(
            f"{label},{r.n_vehicles},{r.start_lane_mismatch},{r.end_lane_mismatch},"
            f"{r.timestep_mismatch},{r.total_mismatch},{r.match_rate:.2f}\n"
        )
    return buf.getvalue()
