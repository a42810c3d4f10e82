"""Flight planning: stop ordering, altitude modes, energy forecast, ETAs,
reschedules, recharge insertion, and the drop-dispersion estimate.

Everything here is a pure function over immutable inputs.  The route is built
by nearest-neighbor + first-improvement 2-opt (see routing); brute-force
oracles live alongside for tests and stay independent of the heuristics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import sqrt

import numpy as np

from .world import Address, Params, Position, distance

VERTICAL_SPEED_M_PER_S = 2.0


class TooLarge(Exception):
    """Instance exceeds the brute-force oracle's size limit."""


class InfeasibleLeg(Exception):
    """A single base->stop->base leg exceeds the usable battery budget."""


class UnknownStop(Exception):
    pass


class AlreadyDelivered(Exception):
    pass


@dataclass(frozen=True)
class DropEstimate:
    fall_time_s: float
    dispersion_radius_m: float


@dataclass(frozen=True)
class PlanStop:
    address: Address
    article_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class FlightPlan:
    base: Position
    stops: tuple[PlanStop, ...]
    # recharges[i] == k means: return to base and recharge before visiting stops[k]
    recharges: tuple[int, ...]
    segment_modes: tuple[str, ...]
    segment_energy_j: tuple[float, ...]
    etas_s: tuple[float, ...]
    total_energy_j: float
    d_star_m: float

    def to_json_dict(self) -> dict:
        return {
            "stops": [[s.address.id, list(s.article_ids)] for s in self.stops],
            "segment_modes": list(self.segment_modes),
            "energy_j": list(self.segment_energy_j),
            "etas_s": list(self.etas_s),
            "recharges": list(self.recharges),
            "d_star_m": self.d_star_m,
        }


def delta_h(params: Params) -> float:
    """Climb height between the safe-drop band midpoint and cruise altitude."""
    return params.cruise_alt_m - params.band_mid_m


def d_star(params: Params) -> float:
    """Break-even ground distance between staying low and climbing to cruise."""
    return 2.0 * params.p_vert_j_per_m * delta_h(params) / (
        params.p_low_j_per_m - params.p_cruise_j_per_m)


def segment_energy(d: float, mode: str, params: Params) -> float:
    """Energy to traverse one segment of ground distance d (hover cost excluded)."""
    if d < 0:
        raise ValueError("distance must be >= 0")
    if mode == "low":
        return params.p_low_j_per_m * d
    if mode == "climb":
        return params.p_cruise_j_per_m * d + 2.0 * params.p_vert_j_per_m * delta_h(params)
    raise ValueError(f"bad segment mode {mode!r}")


def hover_energy(params: Params) -> float:
    return params.p_hover_w * params.dispense_dwell_s


def segment_time(d: float, mode: str, params: Params) -> float:
    if mode == "low":
        return d / params.speed_low_m_per_s
    # climb delta_h up and back down at constant vertical speed
    return d / params.speed_cruise_m_per_s + 2.0 * delta_h(params) / VERTICAL_SPEED_M_PER_S


def _distance_matrix(base: Position, stops: list[Address]) -> np.ndarray:
    points = [base] + [s.position for s in stops]
    n = len(points)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = distance(points[i], points[j])
    return dist


def plan_route(base: Position, stops: list[Address]) -> list[Address]:
    """Closed-tour stop ordering: nearest-neighbor start, 2-opt local optimum."""
    from . import routing

    if not stops:
        return []
    if len({s.id for s in stops}) != len(stops):
        raise ValueError("stop ids must be distinct")
    ordered_in = sorted(stops, key=lambda s: s.id)  # index order == id order for tie-breaks
    dist = _distance_matrix(base, ordered_in)
    order = routing.two_opt(dist, routing.nn_order(dist))
    return [ordered_in[k - 1] for k in order]


def route_length(base: Position, ordering: list[Address]) -> float:
    if not ordering:
        return 0.0
    total = distance(base, ordering[0].position)
    for a, b in zip(ordering, ordering[1:]):
        total += distance(a.position, b.position)
    return total + distance(ordering[-1].position, base)


def nearest_neighbor_route(base: Position, stops: list[Address]) -> list[Address]:
    """The un-improved construction, exposed for the 2-opt dominance property."""
    from . import routing

    ordered_in = sorted(stops, key=lambda s: s.id)
    dist = _distance_matrix(base, ordered_in)
    return [ordered_in[k - 1] for k in routing.nn_order(dist)]


def brute_force_route(base: Position, stops: list[Address]) -> list[Address]:
    """Exact minimum closed tour by exhaustive enumeration (oracle, <= 9 stops).

    Permutations are enumerated in lexicographic order of address ids, so the
    first minimum is the lexicographic tie-break winner.
    """
    if len(stops) > 9:
        raise TooLarge(f"{len(stops)} stops exceeds the brute-force limit of 9")
    if not stops:
        return []
    ordered_in = sorted(stops, key=lambda s: s.id)
    dist = _distance_matrix(base, ordered_in)
    n = len(stops)
    perms = np.array(list(itertools.permutations(range(1, n + 1))), dtype=np.intp)
    zeros = np.zeros((perms.shape[0], 1), dtype=np.intp)
    path = np.hstack([zeros, perms, zeros])
    lengths = dist[path[:, :-1], path[:, 1:]].sum(axis=1)
    best = perms[int(np.argmin(lengths))]
    return [ordered_in[k - 1] for k in best]


def plan_altitude_profile(base: Position, ordering: list[Address], params: Params) -> list[str]:
    """Segment modes for base -> stops -> base; low only on short inter-stop hops."""
    if not ordering:
        return []
    threshold = d_star(params)
    modes = ["climb"]  # base -> first stop
    for a, b in zip(ordering, ordering[1:]):
        d = distance(a.position, b.position)
        modes.append("low" if d < threshold else "climb")
    modes.append("climb")  # last stop -> base
    return modes


def profile_energy(base: Position, ordering: list[Address], modes: list[str],
                   params: Params) -> float:
    """Total traversal energy for a profile, including per-stop hover dwell."""
    points = [base] + [s.position for s in ordering] + [base]
    total = 0.0
    for (a, b), mode in zip(zip(points, points[1:]), modes):
        total += segment_energy(distance(a, b), mode, params)
    return total + hover_energy(params) * len(ordering)


def enumerate_altitude_profiles(base: Position, ordering: list[Address],
                                params: Params) -> tuple[list[str], float]:
    """Exhaustive oracle over the inter-stop segment modes (base legs stay climb).

    Ties prefer low: profiles are enumerated low-first and only strict
    improvements replace the incumbent.
    """
    k = max(len(ordering) - 1, 0)
    if len(ordering) + 1 > 13:
        raise TooLarge("enumeration limited to 12 segments")
    best_modes: list[str] | None = None
    best_cost = float("inf")
    for mid in itertools.product(("low", "climb"), repeat=k):
        modes = ["climb", *mid, "climb"] if ordering else []
        cost = profile_energy(base, ordering, modes, params)
        if cost < best_cost:
            best_cost = cost
            best_modes = modes
    return best_modes or [], best_cost


def drop_dispersion(h: float, wind_speed: float, ballast: bool, params: Params) -> DropEstimate:
    """Free-fall time plus a wind-drift radius scaled by the article's drag factor."""
    if h < 0:
        raise ValueError("drop height must be >= 0")
    fall_time = sqrt(2.0 * h / params.g_m_per_s2)
    k = params.drag_factor_ballast if ballast else params.drag_factor_plain
    return DropEstimate(fall_time_s=fall_time, dispersion_radius_m=wind_speed * fall_time * k)


@dataclass
class _Leg:
    """One traversal segment of the expanded path (recharge detours included)."""

    frm: Position
    to: Position
    mode: str
    arrives_stop: int | None  # index into plan stops, None for return-to-base legs
    recharge_after: bool = False


def _expand_legs(base: Position, stops: list[PlanStop], recharges: list[int],
                 modes_by_segment: dict[tuple[int, int], str]) -> list[_Leg]:
    """Flatten stops + recharge insertions into traversal legs.

    modes_by_segment maps (i, j) stop-index pairs (-1 or len == base) to a mode.
    """
    legs: list[_Leg] = []
    recharge_set = set(recharges)
    prev = -1  # -1 == base
    for idx, stop in enumerate(stops):
        if idx in recharge_set and prev != -1:
            legs.append(_Leg(stops[prev].address.position, base,
                             modes_by_segment[(prev, -1)], None, recharge_after=True))
            prev = -1
        frm = base if prev == -1 else stops[prev].address.position
        legs.append(_Leg(frm, stop.address.position, modes_by_segment[(prev, idx)], idx))
        prev = idx
    if stops:
        legs.append(_Leg(stops[prev].address.position, base,
                         modes_by_segment[(prev, -1)], None))
    return legs


def _build_modes(stops: list[PlanStop], base: Position, params: Params) -> dict:
    threshold = d_star(params)
    modes: dict[tuple[int, int], str] = {}
    n = len(stops)
    for i in range(-1, n):
        for j in range(-1, n):
            if i == j:
                continue
            if i == -1 or j == -1:
                modes[(i, j)] = "climb"
            else:
                d = distance(stops[i].address.position, stops[j].address.position)
                modes[(i, j)] = "low" if d < threshold else "climb"
    return modes


def assemble_plan(base: Position, stops: list[PlanStop], params: Params,
                  t0: float = 0.0) -> FlightPlan:
    """Compute modes, recharge insertions, energies, and ETAs for an ordering."""
    modes_by_segment = _build_modes(stops, base, params)
    budget = params.battery_capacity_j * (1.0 - params.battery_reserve_frac)
    hover = hover_energy(params)

    # Greedy recharge insertion: never commit to a stop unless the aircraft can
    # still reach it, hover, and get home within the between-recharge budget.
    recharges: list[int] = []
    used = 0.0
    prev = -1
    for idx, stop in enumerate(stops):
        def leg_cost(frm: int, to: int) -> float:
            a = base if frm == -1 else stops[frm].address.position
            b = base if to == -1 else stops[to].address.position
            return segment_energy(distance(a, b), modes_by_segment[(frm, to)], params)

        solo = leg_cost(-1, idx) + hover + leg_cost(idx, -1)
        if solo > budget:
            raise InfeasibleLeg(
                f"stop {stop.address.id} needs {solo:.0f} J round-trip, budget {budget:.0f} J")
        step = leg_cost(prev, idx) + hover
        if prev != -1 and used + step + leg_cost(idx, -1) > budget:
            used += leg_cost(prev, -1)
            recharges.append(idx)
            used = 0.0
            prev = -1
            step = leg_cost(-1, idx) + hover
        used += step
        prev = idx

    legs = _expand_legs(base, stops, recharges, modes_by_segment)
    seg_modes = []
    seg_energy = []
    etas = [0.0] * len(stops)
    t = t0
    total = 0.0
    for leg in legs:
        d = distance(leg.frm, leg.to)
        e = segment_energy(d, leg.mode, params)
        seg_modes.append(leg.mode)
        seg_energy.append(e)
        total += e
        t += segment_time(d, leg.mode, params)
        if leg.arrives_stop is not None:
            etas[leg.arrives_stop] = t
            t += params.dispense_dwell_s
            total += hover
        elif leg.recharge_after:
            t += params.recharge_s
    return FlightPlan(
        base=base,
        stops=tuple(stops),
        recharges=tuple(recharges),
        segment_modes=tuple(seg_modes),
        segment_energy_j=tuple(seg_energy),
        etas_s=tuple(etas),
        total_energy_j=total,
        d_star_m=d_star(params),
    )


def build_flight_plan(base: Position, destinations: list[tuple[Address, list[str]]],
                      params: Params, t0: float = 0.0) -> FlightPlan:
    """Route + altitude + energy + recharge + ETA pipeline for a manifest."""
    articles_by_addr = {addr.id: tuple(ids) for addr, ids in destinations}
    ordering = plan_route(base, [addr for addr, _ in destinations])
    stops = [PlanStop(addr, articles_by_addr[addr.id]) for addr in ordering]
    return assemble_plan(base, stops, params, t0)


def compute_etas(plan: FlightPlan, params: Params, t0: float = 0.0) -> list[float]:
    """Per-stop ETAs from the plan's own segment modes and recharge insertions."""
    etas = [0.0] * len(plan.stops)
    recharge_set = set(plan.recharges)
    t = t0
    seg = 0
    prev_pos = plan.base
    for idx, stop in enumerate(plan.stops):
        if idx in recharge_set and prev_pos is not plan.base:
            t += segment_time(distance(prev_pos, plan.base),
                              plan.segment_modes[seg], params)
            seg += 1
            t += params.recharge_s
            prev_pos = plan.base
        t += segment_time(distance(prev_pos, stop.address.position),
                          plan.segment_modes[seg], params)
        seg += 1
        etas[idx] = t
        t += params.dispense_dwell_s
        prev_pos = stop.address.position
    return etas


def _pinned_two_opt(base: Position, stops: list[PlanStop], pin: int) -> list[PlanStop]:
    """2-opt restricted to the suffix after the pinned index (pin stays put)."""
    from . import routing

    suffix = stops[pin + 1:]
    if len(suffix) < 2:
        return stops
    head = stops[:pin + 1]
    # Closed sub-tour anchored at the pinned stop, ending back at base.
    points = [head[-1].address.position] + [s.address.position for s in suffix]
    n = len(points)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            dist[i, j] = distance(points[i], points[j])
    # Returning edge goes to base, not back to the pinned stop.
    for i in range(n):
        dist[i, 0] = distance(points[i], base)
    order = routing.two_opt(dist, list(range(1, n)))
    return head + [suffix[k - 1] for k in order]


def apply_reschedule(plan: FlightPlan, stop_id: str, earliest_s: float,
                     params: Params, t0: float = 0.0,
                     delivered: set[str] | None = None) -> FlightPlan:
    """Move one stop so its ETA is >= earliest_s (or last), keep the rest."""
    delivered = delivered or set()
    if stop_id in delivered:
        raise AlreadyDelivered(stop_id)
    idx = next((i for i, s in enumerate(plan.stops) if s.address.id == stop_id), None)
    if idx is None:
        raise UnknownStop(stop_id)
    moved = plan.stops[idx]
    rest = [s for i, s in enumerate(plan.stops) if i != idx]
    chosen: list[PlanStop] | None = None
    chosen_pos = len(rest)
    for pos in range(len(rest) + 1):
        candidate = rest[:pos] + [moved] + rest[pos:]
        etas = assemble_plan(plan.base, candidate, params, t0).etas_s
        if etas[pos] >= earliest_s:
            chosen = candidate
            chosen_pos = pos
            break
    if chosen is None:
        chosen = rest + [moved]
        chosen_pos = len(rest)
    improved = _pinned_two_opt(plan.base, chosen, chosen_pos)
    return assemble_plan(plan.base, improved, params, t0)


def check_energy_feasibility(plan: FlightPlan, params: Params) -> FlightPlan:
    """Recompute recharge insertions; raises InfeasibleLeg on impossible stops."""
    return assemble_plan(plan.base, list(plan.stops), params)


def forecast_between_recharges(plan: FlightPlan, params: Params) -> list[float]:
    """Energy totals of each between-recharge subtour (for the budget invariant)."""
    totals = []
    current = 0.0
    legs = _expand_legs(plan.base, list(plan.stops), list(plan.recharges),
                        _build_modes(list(plan.stops), plan.base, params))
    for leg in legs:
        current += segment_energy(distance(leg.frm, leg.to), leg.mode, params)
        if leg.arrives_stop is not None:
            current += hover_energy(params)
        if leg.recharge_after:
            totals.append(current)
            current = 0.0
    totals.append(current)
    return totals


__all__ = [
    "AlreadyDelivered", "DropEstimate", "FlightPlan", "InfeasibleLeg", "PlanStop",
    "TooLarge", "UnknownStop", "apply_reschedule", "assemble_plan",
    "brute_force_route", "build_flight_plan", "check_energy_feasibility",
    "compute_etas", "d_star", "delta_h", "drop_dispersion",
    "enumerate_altitude_profiles", "forecast_between_recharges", "hover_energy",
    "nearest_neighbor_route", "plan_altitude_profile", "plan_route",
    "profile_energy", "route_length", "segment_energy", "segment_time",
]
