"""Crowd-sourcing dispatch: hailing, booking, pickup confirmation, and
moving-recipient drop targeting."""

from __future__ import annotations

from dataclasses import dataclass, field

from .world import Params, Position, distance
from .planner import segment_time

REPLAN_INTERVAL_S = 10.0

JOB_STATES = ("Requested", "Offered", "Booked", "PickedUp", "Delivered", "Failed")


class NoneAvailable(Exception):
    """Every aircraft is busy or has no free compartment."""


class NotLanded(Exception):
    pass


class NothingLoaded(Exception):
    pass


class JobNotActive(Exception):
    pass


@dataclass
class Job:
    id: str
    requester: str
    pickup: Position
    drop_address: str | None = None
    drop_tracked: str | None = None
    state: str = "Requested"
    article_id: str | None = None
    assigned_aircraft: str | None = None
    drop_position: Position | None = None
    last_replan_s: float = float("-inf")
    pending_position: Position | None = None

    def advance(self, new_state: str) -> None:
        if new_state == "Failed":
            self.state = new_state
            return
        if JOB_STATES.index(new_state) != JOB_STATES.index(self.state) + 1:
            raise ValueError(f"job {self.id}: illegal {self.state} -> {new_state}")
        self.state = new_state


@dataclass(frozen=True)
class FleetView:
    """What dispatch needs to know about one aircraft."""

    aircraft_id: str
    position: Position
    available: bool       # idle or en route back to base
    has_free_region: bool


@dataclass(frozen=True)
class HailOffer:
    aircraft_id: str
    eta_s: float


def hail(user_pos: Position, fleet: list[FleetView], params: Params) -> HailOffer:
    """Nearest available aircraft by straight-line distance; ties pick lower id."""
    candidates = [v for v in fleet if v.available and v.has_free_region]
    if not candidates:
        raise NoneAvailable("no idle aircraft with a free compartment")
    best = min(candidates,
               key=lambda v: (distance(user_pos, v.position), v.aircraft_id))
    d = distance(user_pos, best.position)
    return HailOffer(best.aircraft_id, segment_time(d, "low", params))


def confirm_load(job: Job, aircraft_landed: bool, region_loaded: bool) -> None:
    """The designated-button press: loading done, job becomes PickedUp."""
    if not aircraft_landed:
        raise NotLanded(job.id)
    if not region_loaded:
        raise NothingLoaded(job.id)
    job.advance("PickedUp")


def update_tracked_drop(job: Job, new_pos: Position, now_s: float) -> bool:
    """Record a recipient position update; returns True when a replan fires.

    Replans are rate-limited to one per REPLAN_INTERVAL_S of simulation time;
    updates inside the window are deferred to the next replan tick.
    """
    if job.state != "PickedUp" or job.drop_tracked is None:
        raise JobNotActive(job.id)
    job.pending_position = new_pos
    if now_s - job.last_replan_s < REPLAN_INTERVAL_S:
        return False
    job.last_replan_s = now_s
    job.drop_position = new_pos
    job.pending_position = None
    return True
