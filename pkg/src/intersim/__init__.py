"""intersim: microscopic intersection traffic simulation and learned control.

Replays recorded intersection traffic under three control regimes
(unsignalized first-come-first-served, fixed-time signals, mixed
robot-vehicle control), validates reconstruction fidelity, and computes
wait time, travel time, and CO2 metrics.
"""

from .net import (
    Approach,
    ConflictMatrix,
    IntersectionModel,
    Lane,
    Movement,
    TurnType,
    build_intersection,
    conflicts,
    movement_of,
)

__version__ = "0.1.0"

__all__ = [
    "Approach",
    "ConflictMatrix",
    "IntersectionModel",
    "Lane",
    "Movement",
    "TurnType",
    "build_intersection",
    "conflicts",
    "movement_of",
    "__version__",
]
