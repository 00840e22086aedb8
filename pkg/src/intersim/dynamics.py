"""Longitudinal vehicle dynamics and the fixed-step simulation world.

Vehicles follow a 1-D route: entry lane -> movement path across the
intersection box -> exit lane. Car-following uses the Intelligent Driver
Model; integration is semi-implicit Euler (speed updated before
position), which keeps gaps positive at dt = 0.1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import CollisionDetected, NonPositiveGap
from .net import IntersectionModel, Movement, movement_of

STOP_LINE_SETBACK = 2.0   # stop line sits this far upstream of the box, m
WAIT_SPEED_THRESHOLD = 0.1  # below this speed a vehicle accumulates wait, m/s


@dataclass(frozen=True)
class IdmParams:
    """Intelligent Driver Model parameters (urban arterial defaults)."""

    v0: float = 13.9        # desired speed, m/s (50 km/h)
    T: float = 1.0          # time headway, s
    a_max: float = 2.6      # maximum acceleration, m/s^2
    b: float = 4.5          # comfortable deceleration, m/s^2
    delta: float = 4.0      # acceleration exponent
    s0: float = 2.5         # minimum gap, m
    veh_len: float = 5.0    # vehicle length, m
    b_emergency: float = 9.0  # hard deceleration floor, m/s^2

    def __post_init__(self):
        for name in ("v0", "T", "a_max", "b", "s0", "veh_len", "b_emergency"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IdmParams.{name} must be > 0")
        if self.delta < 1:
            raise ValueError("IdmParams.delta must be >= 1")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    duration: float = 3600.0
    seed: int = 0
    idm: IdmParams = field(default_factory=IdmParams)
    rv_zone: float = 30.0   # RV control zone radius, m
    drain_s: float = 300.0  # extra time allowed after duration to finish trips
    record_trajectories: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")


def idm_accel(gap: float, v: float, v_lead: float, p: IdmParams) -> float:
    """IDM acceleration for a follower with the given bumper-to-bumper gap.

    Use gap = inf for a free road. The result is clamped below at
    -b_emergency so degenerate gaps cannot produce unbounded braking.
    """
    if gap <= 0:
        raise NonPositiveGap(f"gap={gap}: collision state upstream")
    if v < 0 or v_lead < 0:
        raise ValueError("speeds must be nonnegative")
    s_star = p.s0 + max(0.0, v * p.T + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b)))
    accel = p.a_max * (1.0 - (v / p.v0) ** p.delta - (s_star / gap) ** 2)
    return max(accel, -p.b_emergency)


def idm_accel_go(gap: float, v: float, v_lead: float, p: IdmParams) -> float:
    """IDM with the free-flow term dropped: maximum acceleration, but still
    respecting the safe gap to a leader."""
    if gap <= 0:
        raise NonPositiveGap(f"gap={gap}: collision state upstream")
    s_star = p.s0 + max(0.0, v * p.T + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b)))
    accel = p.a_max * (1.0 - (s_star / gap) ** 2)
    return max(accel, -p.b_emergency)


def stop_command_accel(u: float, d_int: float, p: IdmParams) -> float:
    """Deceleration of the Stop command: a = -u^2 / (2 d).

    The closed form halts the vehicle exactly at the target under
    continuous integration and never overshoots under semi-implicit
    Euler. When commanded essentially at the target while still moving
    fast (d <= 0.1 m, u > 2 m/s) the law degenerates; that case is
    resolved with the emergency deceleration.
    """
    if u <= 0.0:
        return 0.0
    if d_int <= 0.1 and u > 2.0:
        return -p.b_emergency
    return -(u * u) / (2.0 * max(d_int, 1e-9))


class Phase(enum.Enum):
    QUEUED = "Queued"
    APPROACHING = "Approaching"
    IN_INTERSECTION = "InIntersection"
    EXITING = "Exiting"
    DONE = "Done"


class VehicleState:
    """Mutable per-vehicle kinematic state, advanced each timestep."""

    __slots__ = (
        "vehicle_id", "vclass", "start_lane", "movement", "end_lane",
        "position", "speed", "accel", "phase", "entry_time", "entry_actual",
        "exit_actual", "waiting_accum", "b1", "b2", "b3", "veh_len",
    )

    def __init__(self, vehicle_id, vclass, start_lane, movement: Movement,
                 end_lane, entry_time, b1, b2, b3, veh_len):
        self.vehicle_id = vehicle_id
        self.vclass = vclass
        self.start_lane = start_lane
        self.movement = movement
        self.end_lane = end_lane
        self.position = 0.0
        self.speed = 0.0
        self.accel = 0.0
        self.phase = Phase.QUEUED
        self.entry_time = entry_time
        self.entry_actual = None
        self.exit_actual = None
        self.waiting_accum = 0.0
        self.b1 = b1  # entry lane end / box start
        self.b2 = b2  # box end / exit lane start
        self.b3 = b3  # route end
        self.veh_len = veh_len

    @property
    def route(self):
        return (self.start_lane, self.movement, self.end_lane)

    @property
    def stop_line(self):
        return self.b1 - STOP_LINE_SETBACK

    @property
    def dist_to_box(self):
        return self.b1 - self.position

    def segment(self):
        if self.position < self.b1:
            return ("lane", self.start_lane)
        if self.position < self.b2:
            return ("mov", self.movement.id)
        return ("lane", self.end_lane)

    def seg_pos(self):
        if self.position < self.b1:
            return self.position
        if self.position < self.b2:
            return self.position - self.b1
        return self.position - self.b2


# Controller directives, consumed by World.step when choosing accelerations.
DIRECTIVE_STOP_AT = "stop_at"    # value: route position to stop before
DIRECTIVE_STOP_CMD = "stop_cmd"  # RV Stop command, value unused
DIRECTIVE_GO = "go"              # RV Go command, value unused


class World:
    """Single-intersection simulation state owned by one runner."""

    def __init__(self, model: IntersectionModel, scenario, config: SimConfig,
                 controller=None):
        self.model = model
        self.config = config
        self.controller = controller
        self.time = 0.0
        self.step_count = 0
        self.active = {}
        self.done = []
        # records sorted by entry time; _next_record indexes the first unspawned
        self._records = list(scenario.records) if scenario is not None else []
        self._next_record = 0
        self._spawn_queues = {}   # lane id -> FIFO of pending VehicleState
        self._order = {}          # segment key -> vids sorted by position
        self.co2_total_mg = 0.0
        self.discharged = 0       # vehicles that crossed box -> exit lane, cumulative
        self.conflict_events = 0  # conflicting co-occupancy count, cumulative
        self.trajectory = [] if config.record_trajectories else None
        self._conflict_pairs = self._build_conflict_intervals()
        self._emission = None     # set by attach_emissions()

    # -- construction helpers -------------------------------------------------

    def _build_conflict_intervals(self):
        """(movement a, movement b) -> ((a_lo, a_hi), (b_lo, b_hi)) in metres."""
        out = {}
        cm = self.model.conflicts
        for a, b in cm.pairs():
            ia, ib = cm.intervals(a, b)
            la = self.model.movement(a).internal_length
            lb = self.model.movement(b).internal_length
            out[(a, b)] = ((ia[0] * la, ia[1] * la), (ib[0] * lb, ib[1] * lb))
        return out

    def attach_emissions(self, params):
        self._emission = params

    def _make_vehicle(self, record):
        movement = movement_of(self.model, record.start_lane, record.end_lane)
        lane_in = self.model.lane(record.start_lane)
        lane_out = self.model.lane(record.end_lane)
        b1 = lane_in.length
        b2 = b1 + movement.internal_length
        b3 = b2 + lane_out.length
        return VehicleState(
            vehicle_id=record.vehicle_id,
            vclass=record.vclass,
            start_lane=record.start_lane,
            movement=movement,
            end_lane=record.end_lane,
            entry_time=record.entry_time,
            b1=b1, b2=b2, b3=b3,
            veh_len=self.config.idm.veh_len,
        )

    # -- queries ---------------------------------------------------------------

    def vehicles_on(self, seg_key):
        """Vehicle ids on a segment, ordered by increasing position."""
        return self._order.get(seg_key, [])

    def rebuild_order(self):
        # vehicles from different routes share exit lanes, so ordering and
        # gaps must use segment-local coordinates, not route positions
        order = {}
        for v in self.active.values():
            order.setdefault(v.segment(), []).append(v.vehicle_id)
        for key, vids in order.items():
            vids.sort(key=lambda vid: self.active[vid].seg_pos())
        self._order = order

    def head_of_lane(self, lane_id):
        """Nearest-to-box vehicle still on an entry lane, or None."""
        vids = self._order.get(("lane", lane_id))
        if not vids:
            return None
        return self.active[vids[-1]]

    def vehicles_in_box(self):
        return [v for v in self.active.values() if v.phase is Phase.IN_INTERSECTION]

    def zone_vehicles(self):
        """Active vehicles on entry lanes within the control zone."""
        zone = self.model.control_zone_radius
        return [
            v for v in self.active.values()
            if v.phase is Phase.APPROACHING and v.dist_to_box <= zone
        ]

    # -- leaders ---------------------------------------------------------------

    def _leader_gap(self, v: VehicleState):
        """(gap, leader speed) along v's route, or (inf, v) when free."""
        seg = v.segment()
        order = self._order.get(seg, [])
        idx = order.index(v.vehicle_id)
        if idx + 1 < len(order):
            lead = self.active[order[idx + 1]]
            return lead.seg_pos() - lead.veh_len - v.seg_pos(), lead.speed

        if seg[0] == "lane" and v.position < v.b1:  # head of entry lane
            best = None
            for m in self.model.movements_from(v.start_lane):
                vids = self._order.get(("mov", m.id))
                if not vids:
                    continue
                lead = self.active[vids[0]]
                local = lead.position - lead.b1
                # A diverging leader matters only while its tail still
                # blocks the lane throat.
                if m.id != v.movement.id and local - lead.veh_len > 0.5:
                    continue
                gap = (v.b1 + local - lead.veh_len) - v.position
                if best is None or gap < best[0]:
                    best = (gap, lead.speed)
            if best is not None:
                return best
            # fall through to the exit lane of v's own movement; the
            # leader's tail may still ride a different movement path, so
            # its projection onto this route is floored at the merge point
            vids = self._order.get(("lane", v.end_lane))
            if vids:
                lead = self.active[vids[0]]
                rear_local = max(lead.position - lead.b2 - lead.veh_len, 0.0)
                gap = (v.b1 + v.movement.internal_length + rear_local) - v.position
                return max(gap, 0.05), lead.speed
            return math.inf, v.speed

        if seg[0] == "mov":  # in the box, nothing ahead on the same movement
            best = None
            vids = self._order.get(("lane", v.end_lane))
            if vids:
                lead = self.active[vids[0]]
                rear_local = max(lead.position - lead.b2 - lead.veh_len, 0.0)
                gap = (v.b2 + rear_local) - v.position
                best = (max(gap, 0.05), lead.speed)
            # zipper rule: yield to a vehicle on a sibling movement that
            # reaches the shared exit lane first (distance-to-merge order)
            my_remaining = v.b2 - v.position
            for m in self.model.movements:
                if m.destination != v.end_lane or m.id == v.movement.id:
                    continue
                other_vids = self._order.get(("mov", m.id))
                if not other_vids:
                    continue
                other = self.active[other_vids[-1]]
                other_remaining = m.internal_length - other.seg_pos()
                if other_remaining < my_remaining:
                    gap = (my_remaining - other_remaining) - other.veh_len
                    cand = (max(gap, 0.05), other.speed)
                    if best is None or cand[0] < best[0]:
                        best = cand
            if best is not None:
                return best
        return math.inf, v.speed

    # -- stepping ----------------------------------------------------------------

    def _process_spawns(self):
        t = self.time
        while (self._next_record < len(self._records)
               and self._records[self._next_record].entry_time <= t + 1e-9):
            rec = self._records[self._next_record]
            self._next_record += 1
            self._spawn_queues.setdefault(rec.start_lane, []).append(self._make_vehicle(rec))
        p = self.config.idm
        inserted = False
        for lane_id, queue in self._spawn_queues.items():
            while queue:
                vids = self._order.get(("lane", lane_id))
                speed = p.v0
                if vids:
                    rear = self.active[vids[0]]
                    gap = rear.position - rear.veh_len
                    if gap < p.s0:
                        break  # no room; retry next step
                    # fastest entry speed that can still brake behind the
                    # lane traffic at comfortable deceleration
                    safe = math.sqrt(rear.speed * rear.speed + 2.0 * p.b * (gap - p.s0))
                    speed = min(p.v0, safe)
                veh = queue.pop(0)
                veh.position = 0.0
                veh.speed = speed
                veh.phase = Phase.APPROACHING
                veh.entry_actual = self.time
                self.active[veh.vehicle_id] = veh
                self._order.setdefault(("lane", lane_id), []).insert(0, veh.vehicle_id)
                inserted = True
        if inserted:
            self.rebuild_order()

    def step(self):
        """Advance the world by one dt."""
        dt = self.config.dt
        self.rebuild_order()
        self._process_spawns()

        directives = self.controller.decide(self) if self.controller is not None else {}

        p = self.config.idm
        accels = {}
        for vid, v in self.active.items():
            gap, v_lead = self._leader_gap(v)
            directive = directives.get(vid)
            kind = directive[0] if directive else None
            if kind == DIRECTIVE_GO:
                a = idm_accel_go(gap, v.speed, v_lead, p)
            else:
                a = idm_accel(gap, v.speed, v_lead, p)
                if kind == DIRECTIVE_STOP_AT:
                    line = directive[1]
                    if line > v.position:
                        a = min(a, idm_accel(line - v.position, v.speed, 0.0, p))
                elif kind == DIRECTIVE_STOP_CMD:
                    # halt at the stop line: the margin to the box keeps
                    # float creep from tipping the vehicle into it
                    d_line = max(v.stop_line - v.position, 1e-9)
                    a = min(a, stop_command_accel(v.speed, d_line, p))
            accels[vid] = a

        finished = []
        for vid, v in self.active.items():
            a = accels[vid]
            new_speed = max(0.0, v.speed + a * dt)
            v.accel = (new_speed - v.speed) / dt
            v.speed = new_speed
            v.position += new_speed * dt
            if v.phase is Phase.APPROACHING and v.position >= v.b1:
                v.phase = Phase.IN_INTERSECTION
            if v.phase is Phase.IN_INTERSECTION and v.position >= v.b2:
                v.phase = Phase.EXITING
                self.discharged += 1
            if v.position >= v.b3:
                v.phase = Phase.DONE
                v.exit_actual = self.time + dt
                finished.append(vid)
            if (v.speed < WAIT_SPEED_THRESHOLD
                    and v.phase in (Phase.APPROACHING, Phase.IN_INTERSECTION)):
                v.waiting_accum += dt
            if self._emission is not None:
                from .metrics import co2_rate
                self.co2_total_mg += co2_rate(v.speed, v.accel, self._emission) * dt

        for vid in finished:
            self.done.append(self.active.pop(vid))

        self.rebuild_order()
        self._check_collisions()
        self._check_co_occupancy()
        if self.trajectory is not None:
            self._log_trajectory()

        self.time += dt
        self.step_count += 1

    def _check_collisions(self):
        for seg, vids in self._order.items():
            for i in range(len(vids) - 1):
                rear = self.active[vids[i]]
                front = self.active[vids[i + 1]]
                if front.seg_pos() - front.veh_len - rear.seg_pos() <= 0:
                    raise CollisionDetected(
                        f"vehicles {rear.vehicle_id} and {front.vehicle_id} overlap "
                        f"on {seg} at t={self.time:.1f}"
                    )

    def _check_co_occupancy(self):
        boxed = self.vehicles_in_box()
        for i in range(len(boxed)):
            for j in range(i + 1, len(boxed)):
                a, b = boxed[i], boxed[j]
                key = (a.movement.id, b.movement.id)
                iv = self._conflict_pairs.get(tuple(sorted(key)))
                if iv is None:
                    continue
                (a_iv, b_iv) = iv if a.movement.id <= b.movement.id else (iv[1], iv[0])
                if self._occupies(a, a_iv) and self._occupies(b, b_iv):
                    self.conflict_events += 1

    @staticmethod
    def _occupies(v: VehicleState, interval):
        lo, hi = interval
        front = v.position - v.b1
        rear = front - v.veh_len
        return front > lo and rear < hi

    def _log_trajectory(self):
        for v in sorted(self.active.values(), key=lambda x: x.vehicle_id):
            self.trajectory.append(
                (round(self.time, 3), v.vehicle_id, v.segment()[1],
                 round(v.position, 3), round(v.speed, 4), round(v.accel, 4),
                 v.phase.value)
            )

    def run(self, until=None, drain=True):
        """Step until `until` (default: config duration), then optionally
        drain remaining vehicles for up to config.drain_s."""
        horizon = self.config.duration if until is None else until
        while self.time < horizon - 1e-9:
            self.step()
        if drain:
            cap = horizon + self.config.drain_s
            while self.time < cap - 1e-9 and (self.active or self._pending()):
                self.step()

    def _pending(self):
        if self._next_record < len(self._records):
            return True
        return any(self._spawn_queues.values())

    def trip_logs(self):
        from .metrics import TripLog

        logs = []
        for v in list(self.done) + list(self.active.values()):
            logs.append(
                TripLog(
                    vehicle_id=v.vehicle_id,
                    scheduled_entry=v.entry_time,
                    entry_actual=v.entry_actual,
                    exit_actual=v.exit_actual,
                    waiting_accum=v.waiting_accum,
                    start_lane=v.start_lane,
                    end_lane=v.end_lane,
                    movement_id=v.movement.id,
                    vclass=v.vclass,
                )
            )
        # queued but never inserted vehicles
        for queue in self._spawn_queues.values():
            for v in queue:
                logs.append(
                    TripLog(
                        vehicle_id=v.vehicle_id,
                        scheduled_entry=v.entry_time,
                        entry_actual=None,
                        exit_actual=None,
                        waiting_accum=0.0,
                        start_lane=v.start_lane,
                        end_lane=v.end_lane,
                        movement_id=v.movement.id,
                        vclass=v.vclass,
                    )
                )
        logs.sort(key=lambda t: t.vehicle_id)
        return logs
