"""Intersection control regimes.

Three controllers share one interface (`decide(world) -> directives`):

* UnsignalizedController: blackout operation. Head-of-lane vehicles file
  a reservation request when they come within the request radius of the
  stop line; grants are issued strictly in arrival order (no request may
  overtake an older conflicting one), so all approaches get equal
  priority. Granted vehicles drive through under car-following;
  ungranted ones hold at the stop line.
* SignalController: fixed-time phase program. Red/yellow movements stop
  at the line unless braking there would exceed the comfortable
  deceleration, in which case the vehicle proceeds (dilemma-zone rule).
* MixedController: unsignalized base layer plus learned Stop/Go commands
  for robot vehicles inside the control zone. A Stop-commanded RV
  withdraws its reservation claim and brakes to rest at the box with
  a = -u^2/(2 d); a Go-commanded RV accelerates at the maximum rate the
  safe-following envelope allows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dynamics import (
    DIRECTIVE_GO,
    DIRECTIVE_STOP_AT,
    DIRECTIVE_STOP_CMD,
    STOP_LINE_SETBACK,
    Phase,
    World,
)
from .net import APPROACH_ORDER, IntersectionModel, TurnType

GREEN = "G"
YELLOW = "Y"
RED = "R"

RV = "RV"
STOP = 0
GO = 1

# Fixed-time phase durations observed at the two intersections, s.
PROGRAM_DURATIONS = {
    "WGG": [7.0, 4.0, 29.0, 4.0, 20.0, 4.0, 4.0, 40.0, 4.0],
    "WGM": [22.0, 4.0, 80.0, 4.0, 42.0, 4.0, 4.0, 113.0, 4.0],
}


@dataclass(frozen=True)
class SignalPhase:
    """One timed signal configuration: every movement has a color."""

    duration: float
    color_of: dict

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("phase duration must be > 0")

    def color(self, movement_id: str) -> str:
        return self.color_of[movement_id]

    def greens(self):
        return {m for m, c in self.color_of.items() if c == GREEN}


@dataclass(frozen=True)
class SignalProgram:
    phases: tuple

    @property
    def cycle_length(self) -> float:
        return sum(p.duration for p in self.phases)

    def phase_at(self, t: float) -> SignalPhase:
        if t < 0:
            raise ValueError("t must be >= 0")
        u = t % self.cycle_length
        for p in self.phases:
            if u < p.duration - 1e-9:
                return p
            u -= p.duration
        return self.phases[-1]

    def color_at(self, t: float, movement_id: str) -> str:
        return self.phase_at(t).color(movement_id)


def canonical_phases(model: IntersectionModel, durations):
    """Build the nine-phase split program used at both intersections.

    The four long phases serve, in order: east-west straights + rights,
    east-west lefts, north-south straights + rights, north-south lefts.
    Rights also run during their road's protected-left phase (right
    turns take precedence over lefts). Every 4 s phase is clearance:
    yellow for whatever was green in the immediately preceding phase.
    """
    by_kind = {}
    for m in model.movements:
        approach = model.lane(m.origin).approach
        road = "EW" if approach.value in ("EB", "WB") else "NS"
        by_kind.setdefault((road, m.turn), set()).add(m.id)

    def greens(road, turns):
        out = set()
        for t in turns:
            out |= by_kind.get((road, t), set())
        return out

    long_sets = [
        greens("EW", (TurnType.STRAIGHT, TurnType.RIGHT)),
        greens("EW", (TurnType.LEFT, TurnType.RIGHT)),
        greens("NS", (TurnType.STRAIGHT, TurnType.RIGHT)),
        greens("NS", (TurnType.LEFT, TurnType.RIGHT)),
    ]
    rows = []
    k = 0
    prev_green = set()
    for dur in durations:
        if dur != 4.0:
            green = long_sets[k]
            k += 1
            rows.append((dur, green, set()))
            prev_green = green
        else:
            rows.append((dur, set(), set(prev_green)))
            prev_green = set()
    return rows


def phases_to_program(model: IntersectionModel, rows) -> SignalProgram:
    """Materialize (duration, green set, yellow set) rows into a program."""
    all_ids = [m.id for m in model.movements]
    phases = []
    for duration, green, yellow in rows:
        colors = {}
        for mid in all_ids:
            if mid in green:
                colors[mid] = GREEN
            elif mid in yellow:
                colors[mid] = YELLOW
            else:
                colors[mid] = RED
        phases.append(SignalPhase(duration=duration, color_of=colors))
    return SignalProgram(phases=tuple(phases))


def signal_program(name: str) -> SignalProgram:
    """Fixed-time program of a built-in intersection, from its description file."""
    from importlib import resources

    from .net import _LAYOUTS, load_description

    if name not in _LAYOUTS:
        raise ValueError(f"unknown intersection {name!r}")
    ref = resources.files("intersim.data").joinpath(f"{name.lower()}.intersection")
    with resources.as_file(ref) as path:
        model, rows = load_description(path)
    if not rows:
        raise ValueError(f"description file for {name} carries no signal program")
    return phases_to_program(model, rows)


# ---------------------------------------------------------------------------
# Unsignalized (blackout) first-come-first-served reservations


@dataclass
class Request:
    vehicle_id: int
    movement_id: str
    arrival: float           # time the request was filed (entered zone as head)
    approach_rank: int
    lane_index: int
    line_arrival: float | None = None  # time the vehicle got near the stop line

    def committed_key(self):
        return (self.line_arrival, self.approach_rank, self.lane_index)

    def filed_key(self):
        return (self.arrival, self.approach_rank, self.lane_index)


@dataclass
class ReservationState:
    """FIFO request queue plus the set of active grants.

    Grants whose movements conflict may coexist only after the earlier
    vehicle has cleared the pairwise conflict window; see
    UnsignalizedController._blocked_by_active.
    """

    queue: list = field(default_factory=list)
    active: dict = field(default_factory=dict)  # vehicle_id -> movement_id
    grant_log: list = field(default_factory=list)  # (time, vehicle_id, movement_id)


class UnsignalizedController:
    """First-come-first-served reservation control of the blackout regime.

    Head-of-lane vehicles file a request when they enter the request
    radius. A request becomes *committed* (orderable and able to block
    younger conflicting requests) once its vehicle is near the stop
    line; committed requests are served strictly in line-arrival order
    with ties broken N, E, S, W then by lane index. A request is blocked
    while any conflicting granted vehicle has not yet cleared the part
    of its path the two movements contend for.
    """

    def __init__(self, model: IntersectionModel, request_radius=None,
                 eligibility_radius=15.0, platoon_gap=20.0, platoon_max=3):
        self.model = model
        self.request_radius = (
            model.control_zone_radius if request_radius is None else request_radius
        )
        self.eligibility_radius = eligibility_radius
        self.platoon_gap = platoon_gap   # max nose-to-nose spacing to tailgate, m
        self.platoon_max = platoon_max   # followers that may inherit one grant
        self.state = ReservationState()
        from .net import conflict_windows_m

        self._windows = conflict_windows_m(model)
        self._release_pos = {
            m.id: model.conflicts.release_fraction(m.id) * m.internal_length
            for m in model.movements
        }
        self._queued = set()

    # RV integration points (no-ops outside mixed control) ------------------
    def may_request(self, world, vehicle) -> bool:
        return True

    def withdraw(self, vehicle_id):
        """Drop a vehicle's pending claim and any unused grant."""
        st = self.state
        before = len(st.queue)
        st.queue = [r for r in st.queue if r.vehicle_id != vehicle_id]
        if len(st.queue) != before:
            self._queued.discard(vehicle_id)
        st.active.pop(vehicle_id, None)

    # ------------------------------------------------------------------------

    def decide(self, world: World):
        st = self.state
        self._release_grants(world)
        self._enqueue_requests(world)
        self._issue_grants(world)

        hold = self.model.control_zone_radius + 20.0
        s0 = world.config.idm.s0
        directives = {}
        for v in world.active.values():
            if v.phase is not Phase.APPROACHING:
                continue
            if v.vehicle_id in st.active:
                continue
            if v.dist_to_box > hold:
                continue
            # standing obstacle one minimum-gap past the stop line, so the
            # nose comes to rest on the line itself
            directives[v.vehicle_id] = (DIRECTIVE_STOP_AT, v.stop_line + s0)
        return directives

    def _release_grants(self, world: World):
        st = self.state
        for vid in list(st.active):
            v = world.active.get(vid)
            if v is None:
                del st.active[vid]
                continue
            if v.phase in (Phase.EXITING, Phase.DONE):
                del st.active[vid]
                continue
            if v.phase is Phase.IN_INTERSECTION:
                rear = (v.position - v.b1) - v.veh_len
                if rear > self._release_pos[v.movement.id]:
                    del st.active[vid]

    def _enqueue_requests(self, world: World):
        st = self.state
        self._queued = {r.vehicle_id for r in st.queue}
        for lane in self.model.entry_lanes():
            head = world.head_of_lane(lane.id)
            if head is None:
                continue
            vid = head.vehicle_id
            if vid in self._queued or vid in st.active:
                continue
            if head.dist_to_box - STOP_LINE_SETBACK > self.request_radius:
                continue
            if not self.may_request(world, head):
                continue
            st.queue.append(
                Request(
                    vehicle_id=vid,
                    movement_id=head.movement.id,
                    arrival=world.time,
                    approach_rank=APPROACH_ORDER[lane.approach],
                    lane_index=lane.index,
                )
            )
            self._queued.add(vid)
        for req in st.queue:
            if req.line_arrival is None:
                v = world.active.get(req.vehicle_id)
                if v is not None and v.dist_to_box <= self.eligibility_radius:
                    req.line_arrival = world.time

    def _blocked_by_active(self, world: World, movement_id: str) -> bool:
        for vid, granted_mov in self.state.active.items():
            win = self._windows.get((granted_mov, movement_id))
            if win is None:
                continue
            v = world.active.get(vid)
            if v is None:
                continue
            if v.phase is Phase.APPROACHING:
                return True
            if v.phase is Phase.IN_INTERSECTION:
                rear = (v.position - v.b1) - v.veh_len
                if rear <= win[1]:
                    return True
        return False

    def _issue_grants(self, world: World):
        st = self.state
        cm = self.model.conflicts
        live = []
        for req in st.queue:
            if req.vehicle_id in world.active:
                live.append(req)
            else:
                self._queued.discard(req.vehicle_id)
        committed = sorted((r for r in live if r.line_arrival is not None),
                           key=Request.committed_key)
        far = sorted((r for r in live if r.line_arrival is None),
                     key=Request.filed_key)

        blocked = []
        remaining = []
        for req in committed + far:
            mov = req.movement_id
            # just-granted vehicles are still approaching, so the active-grant
            # window check also fences off grants issued earlier this step
            clash = self._blocked_by_active(world, mov)
            if not clash:
                clash = any(cm.conflicts(mov, older) for older in blocked)
            if clash:
                blocked.append(mov)
                remaining.append(req)
            else:
                st.active[req.vehicle_id] = mov
                st.grant_log.append((world.time, req.vehicle_id, mov))
                self._queued.discard(req.vehicle_id)
                self._grant_platoon(world, req.vehicle_id)
        st.queue = remaining

    def _grant_platoon(self, world: World, leader_id: int):
        """Let a short tail of same-movement followers inherit the grant.

        Blackout drivers cross in small platoons rather than strictly one
        per arrival; followers within close headway of a granted leader
        proceed with it (bounded, so waiting cross traffic is served next).
        """
        st = self.state
        leader = world.active.get(leader_id)
        if leader is None:
            return
        lane_order = world.vehicles_on(("lane", leader.start_lane))
        try:
            idx = lane_order.index(leader_id)
        except ValueError:
            return
        prev = leader
        granted = 0
        for vid in reversed(lane_order[:idx]):
            if granted >= self.platoon_max:
                break
            follower = world.active[vid]
            if follower.movement.id != leader.movement.id:
                break
            if prev.position - follower.position > self.platoon_gap:
                break
            if follower.vclass == RV and self.commands_block(follower):
                break
            st.active[vid] = follower.movement.id
            st.grant_log.append((world.time, vid, follower.movement.id))
            if vid in self._queued:
                st.queue = [r for r in st.queue if r.vehicle_id != vid]
                self._queued.discard(vid)
            prev = follower
            granted += 1

    def commands_block(self, vehicle) -> bool:
        """Whether an RV's current command forbids claiming (mixed layer)."""
        return False


def unsignalized_decide(res: ReservationState, world: World, model: IntersectionModel):
    """Functional wrapper over UnsignalizedController for one step."""
    ctrl = UnsignalizedController(model)
    ctrl.state = res
    return ctrl.decide(world)


# ---------------------------------------------------------------------------
# Fixed-time signal control


class SignalController:
    def __init__(self, model: IntersectionModel, program: SignalProgram):
        self.model = model
        self.program = program

    def decide(self, world: World):
        phase = self.program.phase_at(world.time)
        p = world.config.idm
        directives = {}
        for v in world.active.values():
            if v.phase is not Phase.APPROACHING:
                continue
            color = phase.color(v.movement.id)
            if color == GREEN:
                continue
            dist = v.stop_line - v.position
            if dist <= 0:
                # past the line at speed: committed through; crept onto the
                # line while held: keep holding
                if v.speed > 1.0:
                    continue
            else:
                required = v.speed * v.speed / (2.0 * dist)
                if required > p.b:
                    continue  # cannot stop comfortably: proceed through
            directives[v.vehicle_id] = (DIRECTIVE_STOP_AT, v.stop_line + p.s0)
        return directives


def signal_decide(program: SignalProgram, t: float, world: World,
                  model: IntersectionModel):
    """Functional wrapper over SignalController at an explicit time."""
    saved = world.time
    world.time = t
    try:
        return SignalController(model, program).decide(world)
    finally:
        world.time = saved


# ---------------------------------------------------------------------------
# Mixed traffic: RV Stop/Go layer over the unsignalized base


class MixedController(UnsignalizedController):
    """Unsignalized safety layer plus per-RV Stop/Go commands.

    The policy is queried once per decision interval for every RV inside
    the control zone; between decisions the last command persists. A
    Stop command withdraws the RV's reservation claim so conflicting
    traffic can be served; Go restores normal claiming and accelerates
    at the safe-following maximum once granted.
    """

    def __init__(self, model: IntersectionModel, action_fn=None,
                 decision_interval=1.0):
        super().__init__(model)
        self.action_fn = action_fn      # (world, rv) -> STOP | GO
        self.decision_interval = decision_interval
        self.commands = {}
        self._next_decision = 0.0

    def may_request(self, world, vehicle) -> bool:
        if vehicle.vclass != RV:
            return True
        return self.commands.get(vehicle.vehicle_id, GO) == GO

    def commands_block(self, vehicle) -> bool:
        return vehicle.vclass == RV and self.commands.get(vehicle.vehicle_id) == STOP

    def decide(self, world: World):
        if self.action_fn is not None and world.time >= self._next_decision - 1e-9:
            self._refresh_commands(world)
            self._next_decision = world.time + self.decision_interval

        directives = super().decide(world)
        zone = self.model.control_zone_radius
        for v in world.active.values():
            if v.vclass != RV or v.phase is not Phase.APPROACHING:
                continue
            if v.dist_to_box > zone:
                continue
            cmd = self.commands.get(v.vehicle_id)
            if cmd == STOP:
                directives[v.vehicle_id] = (DIRECTIVE_STOP_CMD, None)
            elif cmd == GO and v.vehicle_id in self.state.active:
                directives[v.vehicle_id] = (DIRECTIVE_GO, None)
        return directives

    def apply_commands(self, actions: dict):
        """Install this interval's Stop/Go commands; Stop withdraws the
        vehicle's reservation claim. Commands of departed RVs are dropped."""
        for vid, action in actions.items():
            prev = self.commands.get(vid)
            self.commands[vid] = action
            if action == STOP and prev != STOP:
                self.withdraw(vid)
        for vid in list(self.commands):
            if vid not in actions:
                del self.commands[vid]

    def _refresh_commands(self, world: World):
        zone = self.model.control_zone_radius
        actions = {}
        for v in world.active.values():
            if v.vclass != RV or v.phase is not Phase.APPROACHING:
                continue
            if v.dist_to_box > zone:
                continue
            actions[v.vehicle_id] = self.action_fn(world, v)
        self.apply_commands(actions)


def rv_decide(policy, rv, obs, model: IntersectionModel, params=None):
    """Acceleration override for one RV, or None outside the control zone.

    Queries the shared policy on the observation: Stop yields
    a = -u^2/(2 d_int); Go yields a_max (the world integration still caps
    Go by the safe-following envelope against any leader).
    """
    from .dynamics import IdmParams, stop_command_accel

    if params is None:
        params = IdmParams()
    d_int = rv.dist_to_box
    if d_int > model.control_zone_radius:
        return None
    action = policy.greedy_action(obs) if hasattr(policy, "greedy_action") else policy(obs)
    if action == STOP:
        return stop_command_accel(rv.speed, d_int, params)
    return params.a_max
