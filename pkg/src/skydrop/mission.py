"""Per-aircraft mission executive.

A deterministic state machine drives arrival, GPS verification, altitude
correction, safe-drop hover, permission/signature/barcode handshakes,
dispense, the acknowledgement relay, retries, crowd pickups, and the battery
guard.  `mission_step` maps (state, event) to (state, actions); the simulation
engine interprets the actions (fly, open orifices, emit messages, set timers).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .world import Params, Position, distance

# Phases
IDLE = "Idle"
EN_ROUTE = "EnRoute"
ARRIVED = "Arrived"
GPS_VERIFYING = "GpsVerifying"
ADDRESS_REVERIFY = "AddressReverify"
ALTITUDE_CORRECTING = "AltitudeCorrecting"
HOVER_SAFE_DROP = "HoverSafeDrop"
AWAITING_PERMISSION = "AwaitingPermission"
VERIFYING_SIGNATURE = "VerifyingSignature"
AWAITING_OPERATOR = "AwaitingOperator"
AWAITING_BARCODE = "AwaitingBarcode"
DISPENSING = "Dispensing"
AWAITING_ACK = "AwaitingAck"
CLOSING_ORIFICE = "ClosingOrifice"
PICKUP_LANDING = "PickupLanding"
PICKUP_LOADING = "PickupLoading"
RETURNING_TO_BASE = "ReturningToBase"
RECHARGING = "Recharging"
DONE = "Done"

HANDSHAKE_PHASES = frozenset({
    HOVER_SAFE_DROP, AWAITING_PERMISSION, VERIFYING_SIGNATURE,
    AWAITING_OPERATOR, AWAITING_BARCODE, DISPENSING,
})


@dataclass(frozen=True)
class SafeDropToken:
    kind: str  # hover | landed
    stop_id: str
    issued_at_s: float


@dataclass(frozen=True)
class Ev:
    kind: str
    t: float = 0.0
    data: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Act:
    kind: str
    data: dict = field(default_factory=dict)


@dataclass
class StopTask:
    """One itinerary entry: a hover delivery or a landed crowd pickup."""

    kind: str                      # deliver | pickup
    stop_id: str                   # address id, or pickup site id
    position: Position
    article_ids: tuple[str, ...] = ()
    regions: dict = field(default_factory=dict)    # article id -> region id
    senders: dict = field(default_factory=dict)    # article id -> sender contact
    recipient: str = ""            # contact to alert / ask permission
    sensitive: bool = False
    has_signature: bool = False
    confidence: float | None = None   # precomputed match confidence when signature present
    expected_barcode: str | None = None
    job_id: str | None = None      # pickup tasks only
    tracked: str | None = None     # tracked-recipient drops: contact id
    earliest_s: float = 0.0        # do not arrive before this time (reschedules)


@dataclass
class MissionState:
    aircraft: str
    dispenser: str
    base_pos: Position
    params: Params
    phase: str = IDLE
    queue: list = field(default_factory=list)         # upcoming StopTasks
    current: StopTask | None = None
    retry_queue: list = field(default_factory=list)   # StopTasks awaiting re-attempt
    attempts: dict = field(default_factory=dict)      # stop id -> attempts made
    failed: dict = field(default_factory=dict)        # article id -> reason
    delivered: list = field(default_factory=list)     # article ids
    battery_j: float = 0.0
    alt: float = 0.0
    token: SafeDropToken | None = None
    reverify_count: int = 0
    resume_after_recharge: bool = False
    battery_paused: bool = False


# Small pure helpers ---------------------------------------------------------

def gps_verify(current: Position, target: Position, tol_m: float) -> str:
    return "match" if distance(current, target) <= tol_m else "mismatch"


def altitude_correction(current_alt: float, band: tuple[float, float]):
    lo, hi = band
    mid = (lo + hi) / 2.0
    if current_alt < lo:
        return ("ascend_to", mid)
    if current_alt > hi:
        return ("descend_to", mid)
    return ("hold", None)


def battery_guard(battery_j: float, capacity_j: float, critical_frac: float) -> str:
    # Strictly below the threshold trips the guard; exactly at it continues.
    return "pause_and_return" if battery_j < critical_frac * capacity_j else "continue"


# Transition machinery -------------------------------------------------------

def _emit(kind: str, src: str, dst: str, **payload) -> Act:
    return Act("emit", {"kind": kind, "src": src, "dst": dst, "payload": payload})


def _requeue_current(state: MissionState, t: float, reason: str) -> list[Act]:
    """Abort the current attempt; retry later or give the articles up."""
    task = state.current
    actions: list[Act] = []
    if state.token is not None:
        for region in task.regions.values():
            actions.append(Act("close_orifice", {"region": region}))
        state.token = None
    actions.append(Act("cancel_timers", {}))
    actions.append(_emit("AbortNotice", state.dispenser, "base",
                         stop=task.stop_id, reason=reason,
                         attempt=state.attempts.get(task.stop_id, 1)))
    made = state.attempts.get(task.stop_id, 1)
    if made <= state.params.max_reattempts:
        state.retry_queue.append(task)
        actions.append(Act("requeued", {"stop": task.stop_id, "reason": reason}))
    else:
        for art in task.article_ids:
            state.failed[art] = reason
        actions.append(Act("gave_up", {"stop": task.stop_id, "reason": reason}))
    state.current = None
    actions.extend(_advance(state, t))
    return actions


def _advance(state: MissionState, t: float) -> list[Act]:
    """Move to the next itinerary entry, the retry queue, or home."""
    state.reverify_count = 0
    state.token = None
    if not state.queue and state.retry_queue:
        state.queue = state.retry_queue
        state.retry_queue = []
    if state.queue:
        task = state.queue.pop(0)
        state.current = task
        state.attempts[task.stop_id] = state.attempts.get(task.stop_id, 0) + 1
        state.phase = EN_ROUTE
        actions = [Act("fly_to_stop", {"task": task})]
        if task.kind == "deliver" and task.recipient:
            actions.append(_emit("EnRouteNotice", state.dispenser, task.recipient,
                                 stop=task.stop_id))
        return actions
    state.current = None
    state.phase = RETURNING_TO_BASE
    return [Act("fly_to_base", {})]


def _post_permission_phase(state: MissionState, t: float) -> list[Act]:
    """After permission (and any signature/operator gate): barcode or dispense."""
    task = state.current
    if task.sensitive:
        state.phase = AWAITING_BARCODE
        return [
            _emit("BarcodeChallenge", state.dispenser, task.recipient,
                  stop=task.stop_id),
            Act("start_timer", {"name": "barcode",
                                "duration": state.params.barcode_timeout_s}),
        ]
    return _begin_dispense(state, t)


def _begin_dispense(state: MissionState, t: float) -> list[Act]:
    task = state.current
    state.phase = DISPENSING
    actions = [Act("open_orifice", {"region": region, "token": state.token})
               for region in sorted(task.regions.values())]
    actions.append(Act("dwell", {"duration": state.params.dispense_dwell_s}))
    return actions


def _after_signature_gate(state: MissionState, t: float) -> list[Act]:
    task = state.current
    if task.confidence is not None and task.confidence >= state.params.confidence_threshold:
        return _post_permission_phase(state, t)
    state.phase = AWAITING_OPERATOR
    return [
        _emit("SignatureMismatch", state.dispenser, "base",
              stop=task.stop_id, confidence=task.confidence),
        _emit("OperatorDecisionRequest", state.dispenser, "base",
              stop=task.stop_id, aircraft=state.aircraft,
              confidence=task.confidence,
              deadline_t_s=t + state.params.operator_timeout_s),
        Act("start_timer", {"name": "operator",
                            "duration": state.params.operator_timeout_s}),
    ]


def mission_step(state: MissionState, event: Ev) -> tuple[MissionState, list[Act]]:
    """Advance the machine by one event; unexpected events leave state unchanged."""
    t = event.t
    kind = event.kind
    task = state.current
    p = state.params

    # Battery guard interrupts any phase.
    if kind == "battery_low":
        if state.phase in (RETURNING_TO_BASE, RECHARGING, DONE):
            return state, []
        actions = [
            _emit("BatteryLow", state.aircraft, state.dispenser,
                  battery_j=state.battery_j),
            _emit("PauseDeliveries", state.aircraft, state.dispenser, reason="battery"),
        ]
        if state.token is not None and task is not None:
            for region in task.regions.values():
                actions.append(Act("close_orifice", {"region": region}))
        state.token = None
        actions.append(Act("cancel_timers", {}))
        if task is not None:
            if state.phase in (AWAITING_ACK, CLOSING_ORIFICE):
                # articles are already out of the compartment: count the
                # delivery instead of retrying an empty region
                state.delivered.extend(task.article_ids)
            else:
                # current attempt is abandoned by the guard, not consumed
                state.attempts[task.stop_id] -= 1
                state.retry_queue.append(task)
            state.current = None
        state.battery_paused = True
        state.resume_after_recharge = True
        state.phase = RETURNING_TO_BASE
        actions.append(Act("fly_to_base", {}))
        return state, actions

    if state.phase == IDLE and kind == "depart":
        return state, _advance(state, t)

    if state.phase == EN_ROUTE and kind == "arrive":
        if task.kind == "pickup":
            state.phase = ARRIVED
            return state, [Act("land", {})]
        state.phase = GPS_VERIFYING
        return state, [Act("request_gps_fix", {})]

    if state.phase == ARRIVED and kind == "landed":
        state.alt = 0.0
        state.phase = PICKUP_LANDING
        state.token = SafeDropToken("landed", task.stop_id, t)
        return state, [
            _emit("PickupArrival", state.dispenser, task.recipient, job=task.job_id),
            Act("request_top_load", {"task": task}),
        ]

    if state.phase == PICKUP_LANDING and kind == "article_placed":
        state.phase = PICKUP_LOADING
        return state, []

    if state.phase == PICKUP_LOADING and kind == "msg" \
            and event.data["message"].kind == "LoadComplete":
        # The engine appends the drop task to the queue, then re-departs.
        state.token = None
        state.phase = IDLE
        state.current = None
        return state, [Act("pickup_complete", {"task": task})]

    if state.phase in (GPS_VERIFYING, ADDRESS_REVERIFY) and kind == "gps_fix":
        fix = event.data["position"]
        if gps_verify(fix, task.position, p.gps_tol_m) == "match":
            state.phase = ALTITUDE_CORRECTING
            cmd, target = altitude_correction(state.alt, p.safe_drop_band_m)
            if cmd == "hold":
                return state, [Act("altitude_hold", {})]
            return state, [Act("set_altitude", {"command": cmd, "target": target})]
        state.reverify_count += 1
        if state.reverify_count > p.max_gps_reverify:
            return state, _requeue_current(state, t, "gps_reverify_exhausted")
        state.phase = ADDRESS_REVERIFY
        return state, [Act("reverify", {"stop": task.stop_id,
                                        "loop": state.reverify_count})]

    if state.phase == ALTITUDE_CORRECTING and kind in ("altitude_reached", "altitude_held"):
        if kind == "altitude_reached":
            state.alt = event.data["alt"]
        lo, hi = p.safe_drop_band_m
        if not lo <= state.alt <= hi:
            cmd, target = altitude_correction(state.alt, p.safe_drop_band_m)
            return state, [Act("set_altitude", {"command": cmd, "target": target})]
        state.phase = HOVER_SAFE_DROP
        state.token = SafeDropToken("hover", task.stop_id, t)
        actions = [_emit("DeliveryAlert", state.dispenser, "base",
                         stop=task.stop_id, articles=list(task.article_ids))]
        if task.recipient:
            actions.append(_emit("DeliveryAlert", state.dispenser, task.recipient,
                                 stop=task.stop_id, articles=list(task.article_ids)))
        actions.append(Act("hover_stabilized", {}))
        return state, actions

    if state.phase == HOVER_SAFE_DROP and kind == "hover_stable":
        state.phase = AWAITING_PERMISSION
        grantor = task.recipient or "base"
        return state, [
            _emit("PermissionRequest", state.dispenser, grantor,
                  stop=task.stop_id, articles=list(task.article_ids)),
            Act("start_timer", {"name": "permission",
                                "duration": p.permission_timeout_s}),
        ]

    if state.phase == AWAITING_PERMISSION:
        if kind == "msg" and event.data["message"].kind == "PermissionResponse":
            msg = event.data["message"]
            if msg.payload.get("granted"):
                if msg.payload.get("earliest_s") is not None:
                    # recipient asked for a later slot: treat as a reschedule
                    return state, _reschedule_current(state, t, msg.payload["earliest_s"])
                if task.has_signature:
                    state.phase = VERIFYING_SIGNATURE
                    return state, [Act("capture_signature", {"stop": task.stop_id}),
                                   Act("cancel_timer", {"name": "permission"})]
                actions = [Act("cancel_timer", {"name": "permission"})]
                actions.extend(_post_permission_phase(state, t))
                return state, actions
            return state, _requeue_current(state, t, "permission_denied")
        if kind == "msg" and event.data["message"].kind == "RescheduleRequest":
            return state, _reschedule_current(
                state, t, event.data["message"].payload.get("earliest_s", 0.0))
        if kind == "timer" and event.data["name"] == "permission":
            return state, _requeue_current(state, t, "permission_timeout")

    if state.phase == VERIFYING_SIGNATURE and kind == "signature_captured":
        task.confidence = event.data["confidence"]
        return state, _after_signature_gate(state, t)

    if state.phase == AWAITING_OPERATOR:
        if kind == "msg" and event.data["message"].kind == "OperatorDecisionResponse":
            verdict = event.data["message"].payload.get("verdict")
            actions = [Act("cancel_timer", {"name": "operator"})]
            if verdict == "approve":
                actions.extend(_post_permission_phase(state, t))
                return state, actions
            return state, _requeue_current(state, t, "operator_rejected")
        if kind == "timer" and event.data["name"] == "operator":
            return state, _requeue_current(state, t, "operator_timeout")

    if state.phase == AWAITING_BARCODE:
        if kind == "msg" and event.data["message"].kind == "BarcodeScan":
            from . import protocol

            code = event.data["message"].payload.get("code", "")
            try:
                matched = protocol.barcode_verify(
                    protocol.Barcode(task.expected_barcode), code)
            except protocol.MalformedBarcode:
                matched = False
            actions = [Act("cancel_timer", {"name": "barcode"})]
            if matched:
                actions.extend(_begin_dispense(state, t))
                return state, actions
            return state, _requeue_current(state, t, "barcode_rejected")
        if kind == "timer" and event.data["name"] == "barcode":
            return state, _requeue_current(state, t, "barcode_timeout")

    if state.phase == DISPENSING and kind == "dwell_done":
        state.phase = AWAITING_ACK
        actions = [Act("release", {"article": art, "region": task.regions[art]})
                   for art in task.article_ids]
        actions.append(Act("send_acks", {"articles": list(task.article_ids)}))
        return state, actions

    if state.phase == AWAITING_ACK and kind == "acks_sent":
        state.phase = CLOSING_ORIFICE
        actions = [Act("close_orifice", {"region": region})
                   for region in sorted(task.regions.values())]
        actions.append(Act("orifices_closed", {}))
        return state, actions

    if state.phase == CLOSING_ORIFICE and kind == "closed":
        state.token = None
        state.delivered.extend(task.article_ids)
        state.current = None
        return state, _advance(state, t)

    if state.phase == RETURNING_TO_BASE and kind == "at_base":
        state.alt = 0.0
        if state.resume_after_recharge:
            state.phase = RECHARGING
            return state, [Act("recharge", {"duration": p.recharge_s})]
        state.phase = DONE
        return state, [Act("mission_done", {})]

    if state.phase == RECHARGING and kind == "recharged":
        state.battery_j = p.battery_capacity_j
        state.resume_after_recharge = False
        state.battery_paused = False
        return state, _advance(state, t)

    return state, [Act("ignored", {"event": kind, "phase": state.phase})]


def _reschedule_current(state: MissionState, t: float, earliest_s: float) -> list[Act]:
    """Recipient asked for a later time: push the stop back without burning a retry."""
    task = state.current
    actions: list[Act] = [Act("cancel_timers", {}),
                          _emit("RescheduleConfirm", state.dispenser, task.recipient,
                                stop=task.stop_id, earliest_s=earliest_s)]
    state.token = None
    state.attempts[task.stop_id] -= 1
    task.earliest_s = earliest_s
    actions.append(Act("reschedule", {"task": task, "earliest_s": earliest_s}))
    # Appended last; the recipient approves on the later attempt.
    state.queue.append(task)
    state.current = None
    actions.extend(_advance(state, t))
    return actions
