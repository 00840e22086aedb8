"""Intersection network models.

Two four-way arterial intersections (WGG and WGM) are encoded as static
lane layouts. Movements are the legal (entry lane -> exit lane) paths
across the intersection box, and the conflict matrix marks which movement
pairs cannot occupy the box at the same time.

Geometry convention: the intersection box is a square centred at the
origin, north = +y, east = +x, right-hand traffic. Entry/exit lanes are
described by a signed lateral offset from the road centreline. Movement
paths are straight chords (through movements) or corner fillets
(lead-in segment + circular arc + lead-out segment) for turns. Two
movements conflict when their sampled paths pass within a clearance
distance of each other; movements from the same approach never conflict
(they run in parallel lanes and are serialised by car-following).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import NoSuchMovement, ParseError, UnknownLane, UnknownMovement

LANE_WIDTH = 3.5
CLEARANCE = 2.0          # path separation below which movements conflict, m
SAMPLE_STEP = 0.25       # path sampling resolution, m
DEFAULT_LANE_LENGTH = 150.0
DEFAULT_CONTROL_ZONE = 30.0


class Approach(enum.Enum):
    """Direction of travel of the lanes in a road arm."""

    NB = "NB"
    SB = "SB"
    EB = "EB"
    WB = "WB"

    @property
    def heading(self):
        return _HEADINGS[self]


_HEADINGS = {
    Approach.NB: (0.0, 1.0),
    Approach.SB: (0.0, -1.0),
    Approach.EB: (1.0, 0.0),
    Approach.WB: (-1.0, 0.0),
}

# Tie-break order used by the first-come-first-served controller.
APPROACH_ORDER = {Approach.NB: 0, Approach.EB: 1, Approach.SB: 2, Approach.WB: 3}


class TurnType(enum.Enum):
    LEFT = "L"
    STRAIGHT = "S"
    RIGHT = "R"


# Exit approach reached from an entry approach, per turn.
_TURN_TARGET = {
    (Approach.EB, TurnType.STRAIGHT): Approach.EB,
    (Approach.EB, TurnType.LEFT): Approach.NB,
    (Approach.EB, TurnType.RIGHT): Approach.SB,
    (Approach.WB, TurnType.STRAIGHT): Approach.WB,
    (Approach.WB, TurnType.LEFT): Approach.SB,
    (Approach.WB, TurnType.RIGHT): Approach.NB,
    (Approach.NB, TurnType.STRAIGHT): Approach.NB,
    (Approach.NB, TurnType.LEFT): Approach.WB,
    (Approach.NB, TurnType.RIGHT): Approach.EB,
    (Approach.SB, TurnType.STRAIGHT): Approach.SB,
    (Approach.SB, TurnType.LEFT): Approach.EB,
    (Approach.SB, TurnType.RIGHT): Approach.WB,
}


def turn_between(origin: Approach, destination: Approach) -> TurnType:
    """Turn type implied by an (entry approach, exit approach) pair."""
    for (o, t), d in _TURN_TARGET.items():
        if o is origin and d is destination:
            return t
    raise NoSuchMovement(f"no turn connects {origin.value} to {destination.value}")


@dataclass(frozen=True)
class Lane:
    """One lane of a road arm.

    index 0 is the leftmost lane of its group (closest to the road
    centreline); offset is the signed lateral position of the lane
    centre, in the global frame.
    """

    id: str
    approach: Approach
    index: int
    length: float
    allowed_turns: frozenset
    entry: bool
    offset: float

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"lane {self.id}: length must be > 0")
        if not self.allowed_turns:
            raise ValueError(f"lane {self.id}: allowed_turns must be nonempty")
        if self.index < 0:
            raise ValueError(f"lane {self.id}: index must be >= 0")


@dataclass(frozen=True)
class Movement:
    """A legal path from an entry lane to an exit lane across the box."""

    id: str
    origin: str
    destination: str
    turn: TurnType
    internal_length: float

    def __post_init__(self):
        if self.internal_length <= 0:
            raise ValueError(f"movement {self.id}: internal_length must be > 0")


class ConflictMatrix:
    """Symmetric, irreflexive boolean relation over movement ids.

    Each conflicting pair also carries the fractional arc-length window
    [lo, hi] on either path where the two paths overlap (come within the
    clearance distance). Windows are fractions of the movement's
    internal length, so they survive length rescaling.
    """

    def __init__(self, entries=()):
        self._windows = {}
        for entry in entries:
            self.add(*entry)

    def add(self, a: str, b: str, window_a=(0.0, 1.0), window_b=(0.0, 1.0)):
        if a == b:
            raise ValueError("a movement cannot conflict with itself")
        if a > b:
            a, b = b, a
            window_a, window_b = window_b, window_a
        self._windows[(a, b)] = (
            (float(window_a[0]), float(window_a[1])),
            (float(window_b[0]), float(window_b[1])),
        )

    def conflicts(self, a: str, b: str) -> bool:
        if a == b:
            return False
        return (min(a, b), max(a, b)) in self._windows

    def intervals(self, a: str, b: str):
        """Overlap windows for a conflicting pair, ordered as (a's, b's)."""
        key = (min(a, b), max(a, b))
        wa, wb = self._windows[key]
        return (wa, wb) if a <= b else (wb, wa)

    def pairs(self):
        """Canonically ordered list of conflicting (a, b) pairs."""
        return sorted(self._windows)

    def release_fraction(self, movement_id: str) -> float:
        """Fraction of the path after which the movement has cleared every
        window it shares with a conflicting movement (0 when unconflicted)."""
        hi = 0.0
        for (a, b), (wa, wb) in self._windows.items():
            if a == movement_id:
                hi = max(hi, wa[1])
            elif b == movement_id:
                hi = max(hi, wb[1])
        return hi

    def __eq__(self, other):
        if not isinstance(other, ConflictMatrix):
            return NotImplemented
        if set(self._windows) != set(other._windows):
            return False
        for key, (wa, wb) in self._windows.items():
            oa, ob = other._windows[key]
            if any(abs(x - y) > 1e-6 for x, y in zip(wa + wb, oa + ob)):
                return False
        return True


@dataclass
class IntersectionModel:
    """Immutable-after-construction model of one intersection."""

    name: str
    lanes: list
    movements: list
    conflicts: ConflictMatrix
    control_zone_radius: float = DEFAULT_CONTROL_ZONE
    half_size: float = 12.0

    def __post_init__(self):
        if self.control_zone_radius <= 0:
            raise ValueError("control_zone_radius must be > 0")
        self._lane_by_id = {}
        for lane in self.lanes:
            if lane.id in self._lane_by_id:
                raise ValueError(f"duplicate lane id {lane.id}")
            self._lane_by_id[lane.id] = lane
        self._movement_by_id = {}
        self._movement_by_route = {}
        for m in self.movements:
            if m.id in self._movement_by_id:
                raise ValueError(f"duplicate movement id {m.id}")
            if m.origin not in self._lane_by_id or m.destination not in self._lane_by_id:
                raise ValueError(f"movement {m.id} references unknown lanes")
            key = (m.origin, m.destination)
            if key in self._movement_by_route:
                raise ValueError(f"duplicate movement for route {key}")
            self._movement_by_id[m.id] = m
            self._movement_by_route[key] = m

    def lane(self, lane_id: str) -> Lane:
        try:
            return self._lane_by_id[lane_id]
        except KeyError:
            raise UnknownLane(f"unknown lane id {lane_id!r}") from None

    def movement(self, movement_id: str) -> Movement:
        try:
            return self._movement_by_id[movement_id]
        except KeyError:
            raise UnknownMovement(f"unknown movement id {movement_id!r}") from None

    def entry_lanes(self):
        return [l for l in self.lanes if l.entry]

    def exit_lanes(self):
        return [l for l in self.lanes if not l.entry]

    def movements_from(self, lane_id: str):
        return [m for m in self.movements if m.origin == lane_id]


def movement_of(model: IntersectionModel, origin: str, destination: str) -> Movement:
    """Resolve the unique movement for an (origin, destination) lane pair.

    Raises NoSuchMovement when the pair is not a legal movement: this is
    how a malformed dataset row surfaces.
    """
    model.lane(origin)
    model.lane(destination)
    m = model._movement_by_route.get((origin, destination))
    if m is None:
        raise NoSuchMovement(
            f"no movement from lane {origin!r} to lane {destination!r} in {model.name}"
        )
    return m


def conflicts(model: IntersectionModel, a: str, b: str) -> bool:
    """Whether two movements (by id) may not share the box. Symmetric; (m, m) is False."""
    model.movement(a)
    model.movement(b)
    return model.conflicts.conflicts(a, b)


# ---------------------------------------------------------------------------
# Path geometry and conflict derivation


def _lane_point(approach: Approach, offset: float, half: float, entering: bool):
    """Point on the box boundary where a lane meets the box."""
    hx, hy = approach.heading
    # Entry lanes touch the box on the upstream edge, exits on the downstream edge.
    if entering:
        edge = (-half * hx, -half * hy)
    else:
        edge = (half * hx, half * hy)
    if approach in (Approach.EB, Approach.WB):
        return (edge[0], offset)
    return (offset, edge[1])


def _rot_left(v):
    return (-v[1], v[0])


def _rot_right(v):
    return (v[1], -v[0])


def movement_path(model_half: float, origin: Lane, dest: Lane):
    """Sampled 2-D polyline of a movement across the box.

    Straights are chords between the lane endpoints; turns are a corner
    fillet: optional straight lead-in, a quarter-circle arc, optional
    straight lead-out.
    """
    p0 = np.array(_lane_point(origin.approach, origin.offset, model_half, True))
    p1 = np.array(_lane_point(dest.approach, dest.offset, model_half, False))
    h0 = np.array(origin.approach.heading)
    h1 = np.array(dest.approach.heading)

    if origin.approach is dest.approach:
        n = max(2, int(np.linalg.norm(p1 - p0) / SAMPLE_STEP))
        t = np.linspace(0.0, 1.0, n)
        return p0[None, :] + t[:, None] * (p1 - p0)[None, :]

    # Corner point where the entry and exit lane axes cross.
    if abs(h0[0]) > 0:  # entry is horizontal, exit vertical
        corner = np.array([p1[0], p0[1]])
    else:
        corner = np.array([p0[0], p1[1]])
    t0 = float(np.dot(corner - p0, h0))
    t1 = float(np.dot(p1 - corner, h1))
    if t0 <= 0 or t1 <= 0:
        raise ValueError(
            f"degenerate turn geometry {origin.id} -> {dest.id}: the exit lies behind the entry"
        )
    r = min(t0, t1)
    tan0 = corner - r * h0
    tan1 = corner + r * h1
    cross = h0[0] * h1[1] - h0[1] * h1[0]
    normal = _rot_left(h0) if cross > 0 else _rot_right(h0)
    centre = tan0 + r * np.array(normal)

    pts = [p0]
    a_start = math.atan2(tan0[1] - centre[1], tan0[0] - centre[0])
    a_end = math.atan2(tan1[1] - centre[1], tan1[0] - centre[0])
    sweep = a_end - a_start
    if cross > 0 and sweep < 0:
        sweep += 2 * math.pi
    if cross < 0 and sweep > 0:
        sweep -= 2 * math.pi
    n_arc = max(3, int(abs(sweep) * r / SAMPLE_STEP))
    for k in range(n_arc + 1):
        a = a_start + sweep * k / n_arc
        pts.append(centre + r * np.array([math.cos(a), math.sin(a)]))
    pts.append(p1)
    poly = np.array(pts)
    # Densify the straight lead-in/out so distance tests see them.
    return _resample(poly, SAMPLE_STEP)


def _resample(poly: np.ndarray, step: float) -> np.ndarray:
    seg = np.diff(poly, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    s = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = s[-1]
    n = max(2, int(total / step))
    targets = np.linspace(0.0, total, n)
    out = np.empty((n, 2))
    out[:, 0] = np.interp(targets, s, poly[:, 0])
    out[:, 1] = np.interp(targets, s, poly[:, 1])
    return out


def path_length(poly: np.ndarray) -> float:
    seg = np.diff(poly, axis=0)
    return float(np.hypot(seg[:, 0], seg[:, 1]).sum())


def derive_conflicts(half: float, lanes_by_id, movements) -> ConflictMatrix:
    """Conflict matrix from pairwise path clearance on the idealized box.

    For each conflicting pair the overlap window (the stretch of either
    path that passes within the clearance of the other) is recorded as
    fractions of path length.
    """
    paths = {
        m.id: movement_path(half, lanes_by_id[m.origin], lanes_by_id[m.destination])
        for m in movements
    }
    cm = ConflictMatrix()
    for i, ma in enumerate(movements):
        for mb in movements[i + 1:]:
            if lanes_by_id[ma.origin].approach is lanes_by_id[mb.origin].approach:
                continue
            pa, pb = paths[ma.id], paths[mb.id]
            d = pa[:, None, :] - pb[None, :, :]
            dist = np.sqrt((d ** 2).sum(axis=2))
            close = dist < CLEARANCE
            if not close.any():
                continue
            ia = np.nonzero(close.any(axis=1))[0]
            ib = np.nonzero(close.any(axis=0))[0]
            # round so the serialized form is lossless
            wa = (round(ia[0] / (len(pa) - 1), 4), round(ia[-1] / (len(pa) - 1), 4))
            wb = (round(ib[0] / (len(pb) - 1), 4), round(ib[-1] / (len(pb) - 1), 4))
            cm.add(ma.id, mb.id, wa, wb)
    return cm


# ---------------------------------------------------------------------------
# Built-in layouts
#
# Lane counts are transcribed from overhead imagery of the two arterial
# intersections; per-approach splits that could not be resolved exactly are
# marked "inferred" in data/LAYOUTS.md alongside an annotated diagram.

_TURNSETS = {
    "L": frozenset({TurnType.LEFT}),
    "S": frozenset({TurnType.STRAIGHT}),
    "R": frozenset({TurnType.RIGHT}),
    "SR": frozenset({TurnType.STRAIGHT, TurnType.RIGHT}),
    "LS": frozenset({TurnType.LEFT, TurnType.STRAIGHT}),
}

# (entry lane turn groups per approach, number of exit lanes per approach)
_LAYOUTS = {
    "WGG": {
        "half_size": 12.0,
        "entries": {
            Approach.EB: ["L", "S", "SR"],
            Approach.WB: ["L", "S", "SR"],
            Approach.NB: ["L", "SR"],
            Approach.SB: ["L", "SR"],
        },
        "exits": {Approach.EB: 2, Approach.WB: 2, Approach.NB: 2, Approach.SB: 2},
        # movement table: (origin lane key, turn, destination lane key)
        "movements": [
            ("EB_in_0", "L", "NB_out_0"),
            ("EB_in_1", "S", "EB_out_0"),
            ("EB_in_2", "S", "EB_out_1"),
            ("EB_in_2", "R", "SB_out_1"),
            ("WB_in_0", "L", "SB_out_0"),
            ("WB_in_1", "S", "WB_out_0"),
            ("WB_in_2", "S", "WB_out_1"),
            ("WB_in_2", "R", "NB_out_1"),
            ("NB_in_0", "L", "WB_out_0"),
            ("NB_in_1", "S", "NB_out_1"),
            ("NB_in_1", "R", "EB_out_1"),
            ("SB_in_0", "L", "EB_out_0"),
            ("SB_in_1", "S", "SB_out_1"),
            ("SB_in_1", "R", "WB_out_1"),
        ],
        "skew": 1.0,
    },
    "WGM": {
        "half_size": 15.0,
        "entries": {
            Approach.EB: ["L", "S", "S", "R"],
            Approach.WB: ["L", "S", "S", "R"],
            Approach.NB: ["L", "S", "SR"],
            Approach.SB: ["L", "S", "SR"],
        },
        "exits": {Approach.EB: 2, Approach.WB: 2, Approach.NB: 2, Approach.SB: 2},
        "movements": [
            ("EB_in_0", "L", "NB_out_0"),
            ("EB_in_1", "S", "EB_out_0"),
            ("EB_in_2", "S", "EB_out_1"),
            ("EB_in_3", "R", "SB_out_1"),
            ("WB_in_0", "L", "SB_out_0"),
            ("WB_in_1", "S", "WB_out_0"),
            ("WB_in_2", "S", "WB_out_1"),
            ("WB_in_3", "R", "NB_out_1"),
            ("NB_in_0", "L", "WB_out_0"),
            ("NB_in_1", "S", "NB_out_0"),
            ("NB_in_2", "S", "NB_out_1"),
            ("NB_in_2", "R", "EB_out_1"),
            ("SB_in_0", "L", "EB_out_0"),
            ("SB_in_1", "S", "SB_out_0"),
            ("SB_in_2", "S", "SB_out_1"),
            ("SB_in_2", "R", "WB_out_1"),
        ],
        # The skewed crossing angle is modelled as longer paths on the
        # movements that traverse the box (straights and lefts).
        "skew": 1.2,
    },
}

_OFFSET_SIGN = {Approach.EB: -1.0, Approach.WB: 1.0, Approach.NB: 1.0, Approach.SB: -1.0}


def _lane_offset(approach: Approach, index: int) -> float:
    return _OFFSET_SIGN[approach] * (LANE_WIDTH / 2 + LANE_WIDTH * index)


def generate_builtin(name: str) -> IntersectionModel:
    """Construct a built-in intersection model from its layout table.

    This is the transcription tool: the serialized description files
    bundled with the package are produced from it and are the runtime
    source of truth (see build_intersection).
    """
    if name not in _LAYOUTS:
        raise ValueError(f"unknown intersection {name!r} (expected one of {sorted(_LAYOUTS)})")
    spec = _LAYOUTS[name]
    half = spec["half_size"]

    lanes = []
    for approach, groups in spec["entries"].items():
        for i, g in enumerate(groups):
            lanes.append(
                Lane(
                    id=f"{approach.value}_in_{i}",
                    approach=approach,
                    index=i,
                    length=DEFAULT_LANE_LENGTH,
                    allowed_turns=_TURNSETS[g],
                    entry=True,
                    offset=_lane_offset(approach, i),
                )
            )
    for approach, n in spec["exits"].items():
        for i in range(n):
            lanes.append(
                Lane(
                    id=f"{approach.value}_out_{i}",
                    approach=approach,
                    index=i,
                    length=DEFAULT_LANE_LENGTH,
                    allowed_turns=frozenset({TurnType.STRAIGHT}),
                    entry=False,
                    offset=_lane_offset(approach, i),
                )
            )
    lanes_by_id = {l.id: l for l in lanes}

    # Movement ids: approach + turn letter, suffixed only when a pair repeats.
    tally = {}
    for origin, t, dest in spec["movements"]:
        key = (origin.split("_")[0], t)
        tally[key] = tally.get(key, 0) + 1
    seen = {}
    movements = []
    for origin, t, dest in spec["movements"]:
        turn = TurnType(t)
        key = (origin.split("_")[0], t)
        base = f"{key[0]}_{t}"
        if tally[key] > 1:
            k = seen.get(key, 0)
            seen[key] = k + 1
            mid = f"{base}{k}"
        else:
            mid = base
        poly = movement_path(half, lanes_by_id[origin], lanes_by_id[dest])
        length = path_length(poly)
        if turn in (TurnType.LEFT, TurnType.STRAIGHT):
            length *= spec["skew"]
        movements.append(
            Movement(id=mid, origin=origin, destination=dest, turn=turn,
                     internal_length=round(length, 3))
        )

    cm = derive_conflicts(half, lanes_by_id, movements)
    return IntersectionModel(
        name=name,
        lanes=lanes,
        movements=movements,
        conflicts=cm,
        control_zone_radius=DEFAULT_CONTROL_ZONE,
        half_size=half,
    )


def conflict_windows_m(model: IntersectionModel) -> dict:
    """(a, b) -> a's conflict window against b, in metres along a's path.

    Keyed in both orders; lookup (A, B) answers "where along A does it
    contend with B".
    """
    out = {}
    cm = model.conflicts
    for a, b in cm.pairs():
        wa, wb = cm.intervals(a, b)
        la = model.movement(a).internal_length
        lb = model.movement(b).internal_length
        out[(a, b)] = (wa[0] * la, wa[1] * la)
        out[(b, a)] = (wb[0] * lb, wb[1] * lb)
    return out


def build_intersection(name: str) -> IntersectionModel:
    """Load one of the built-in intersection models (WGG or WGM).

    Reads the bundled description file, which is the versioned source of
    truth; generate_builtin() is the tool that produced those files.
    """
    from importlib import resources

    if name not in _LAYOUTS:
        raise ValueError(f"unknown intersection {name!r} (expected one of {sorted(_LAYOUTS)})")
    ref = resources.files("intersim.data").joinpath(f"{name.lower()}.intersection")
    with resources.as_file(ref) as path:
        model, _ = load_description(path)
    return model


# ---------------------------------------------------------------------------
# Description file serialization
#
# Plain-text, line-oriented, documented in data/LAYOUTS.md. One file fully
# describes an intersection: lanes, movements, conflict pairs, and the
# fixed-time signal phase rows (duration + green/yellow movement lists).


def serialize_description(model: IntersectionModel, phases=None) -> str:
    lines = [
        f"# intersection description: {model.name}",
        "format 1",
        f"name {model.name}",
        f"half_size {model.half_size:g}",
        f"control_zone_radius {model.control_zone_radius:g}",
    ]
    for lane in sorted(model.lanes, key=lambda l: l.id):
        turns = "".join(t.value for t in sorted(lane.allowed_turns, key=lambda t: t.value))
        kind = "entry" if lane.entry else "exit"
        lines.append(
            f"lane {lane.id} approach={lane.approach.value} index={lane.index} "
            f"kind={kind} length={lane.length:g} offset={lane.offset:g} turns={turns}"
        )
    for m in sorted(model.movements, key=lambda m: m.id):
        lines.append(
            f"movement {m.id} origin={m.origin} dest={m.destination} "
            f"turn={m.turn.value} internal_length={m.internal_length:g}"
        )
    for a, b in model.conflicts.pairs():
        (alo, ahi), (blo, bhi) = model.conflicts.intervals(a, b)
        lines.append(f"conflict {a} {b} {alo:.4f} {ahi:.4f} {blo:.4f} {bhi:.4f}")
    if phases:
        for duration, green, yellow in phases:
            g = ",".join(sorted(green)) if green else "-"
            y = ",".join(sorted(yellow)) if yellow else "-"
            lines.append(f"phase {duration:g} green={g} yellow={y}")
    return "\n".join(lines) + "\n"


def _kv(parts, path, row):
    out = {}
    for p in parts:
        if "=" not in p:
            raise ParseError(f"expected key=value, got {p!r}", path=path, row=row)
        k, v = p.split("=", 1)
        out[k] = v
    return out


def load_description(path):
    """Parse an intersection description file.

    Returns (IntersectionModel, phase rows); phase rows are
    (duration, set of green movement ids, set of yellow movement ids)
    tuples, empty when the file carries no signal program.
    """
    name = None
    half = None
    zone = DEFAULT_CONTROL_ZONE
    lanes = []
    movements = []
    pairs = []
    phases = []
    with open(path, "r", encoding="utf-8") as fh:
        for row, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "format":
                    if parts[1] != "1":
                        raise ParseError(f"unsupported format {parts[1]}", path=path, row=row)
                elif tag == "name":
                    name = parts[1]
                elif tag == "half_size":
                    half = float(parts[1])
                elif tag == "control_zone_radius":
                    zone = float(parts[1])
                elif tag == "lane":
                    kv = _kv(parts[2:], path, row)
                    lanes.append(
                        Lane(
                            id=parts[1],
                            approach=Approach(kv["approach"]),
                            index=int(kv["index"]),
                            length=float(kv["length"]),
                            allowed_turns=frozenset(TurnType(c) for c in kv["turns"]),
                            entry=kv["kind"] == "entry",
                            offset=float(kv["offset"]),
                        )
                    )
                elif tag == "movement":
                    kv = _kv(parts[2:], path, row)
                    movements.append(
                        Movement(
                            id=parts[1],
                            origin=kv["origin"],
                            destination=kv["dest"],
                            turn=TurnType(kv["turn"]),
                            internal_length=float(kv["internal_length"]),
                        )
                    )
                elif tag == "conflict":
                    if len(parts) >= 7:
                        vals = [float(x) for x in parts[3:7]]
                        pairs.append((parts[1], parts[2],
                                      (vals[0], vals[1]), (vals[2], vals[3])))
                    else:
                        pairs.append((parts[1], parts[2]))
                elif tag == "phase":
                    kv = _kv(parts[2:], path, row)
                    green = set() if kv["green"] == "-" else set(kv["green"].split(","))
                    yellow = set() if kv["yellow"] == "-" else set(kv["yellow"].split(","))
                    phases.append((float(parts[1]), green, yellow))
                else:
                    raise ParseError(f"unknown record type {tag!r}", path=path, row=row)
            except ParseError:
                raise
            except (IndexError, KeyError, ValueError) as exc:
                raise ParseError(f"bad {tag} record: {exc}", path=path, row=row) from exc
    if name is None or half is None:
        raise ParseError("missing name or half_size header", path=path)
    model = IntersectionModel(
        name=name,
        lanes=lanes,
        movements=movements,
        conflicts=ConflictMatrix(pairs),
        control_zone_radius=zone,
        half_size=half,
    )
    return model, phases


def save_description(model: IntersectionModel, path, phases=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_description(model, phases))
