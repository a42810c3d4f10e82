"""Deterministic discrete-event engine.

Single-threaded loop over a (time, seq) priority queue.  All randomness comes
from one SplitMix64 stream seeded by the scenario; identical scenarios replay
to byte-identical event logs.  External commands (operator verdicts, live
hails) enter through an injection queue drained at loop ticks in paced mode,
or are pre-scheduled at fixed virtual times in fast mode.
"""

from __future__ import annotations

import heapq
import json
import math
import queue
import threading
import time as wall_time
from dataclasses import dataclass, field

from . import dispatch, dispenser, mission, planner, protocol
from .dispenser import Article, CompartmentGrid
from .mission import Act, Ev, MissionState, StopTask
from .rng import SplitMix64
from .world import Address, Position, Scenario


class EngineStopped(Exception):
    """Injection attempted after the simulation reached quiescence."""


@dataclass
class DeliveredItem:
    article_id: str
    t_s: float
    offset_m: float
    stop_id: str


@dataclass
class RunReport:
    delivered: list = field(default_factory=list)     # DeliveredItem
    undelivered: list = field(default_factory=list)   # (article_id, reason)
    rejected: list = field(default_factory=list)      # contraband, never loaded
    unplaced: list = field(default_factory=list)      # did not fit any grid
    energy_used_j: dict = field(default_factory=dict)
    recharges: dict = field(default_factory=dict)
    makespan_s: float = 0.0
    message_counts: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "delivered": [
                {"article": d.article_id, "t_s": d.t_s, "offset_m": d.offset_m,
                 "stop": d.stop_id} for d in self.delivered
            ],
            "undelivered": [{"article": a, "reason": r} for a, r in self.undelivered],
            "rejected": list(self.rejected),
            "unplaced": list(self.unplaced),
            "energy_used_j": dict(sorted(self.energy_used_j.items())),
            "recharges": dict(sorted(self.recharges.items())),
            "makespan_s": self.makespan_s,
            "message_counts": dict(sorted(self.message_counts.items())),
        }


@dataclass
class AircraftRuntime:
    config_id: str
    grid: CompartmentGrid
    state: MissionState
    position: Position
    at_base: bool = True
    articles: dict = field(default_factory=dict)      # article id -> Article
    plan: planner.FlightPlan | None = None
    timers: dict = field(default_factory=dict)        # name -> live token
    hover_anchor: float | None = None
    energy_used: float = 0.0
    recharge_count: int = 0
    guard_tripped: bool = False
    departed_at: float = 0.0
    departed_from: Position | None = None
    arrive_token: int = 0
    scanned_ok: bool = False

    @property
    def dispenser_id(self) -> str:
        return self.state.dispenser


@dataclass
class PendingDecision:
    id: str
    kind: str                 # signature_escalation | assistance_request
    aircraft: str
    stop: str
    confidence: float | None
    context: dict
    deadline_t_s: float
    decided: bool = False


class Engine:
    def __init__(self, scenario: Scenario, seed_override: int | None = None) -> None:
        self.scenario = scenario
        self.params = scenario.params
        self.seed = scenario.seed if seed_override is None else seed_override
        self.rng = SplitMix64(self.seed)
        self.now = 0.0
        self.log: list[dict] = []
        self.lines: list[str] = []
        self._log_seq = 0
        self._queue: list = []
        self._sched_seq = 0
        self._timer_token = 0
        self.aircraft: dict[str, AircraftRuntime] = {}
        self.jobs: dict[str, dispatch.Job] = {}
        self.report = RunReport()
        self.pending_decisions: dict[str, PendingDecision] = {}
        self.decision_outcomes: dict[str, str] = {}  # id -> decided | expired
        self._decision_counter = 0
        self._reschedule_seen: dict[str, bool] = {}
        self._recipient_codes: dict[tuple[str, str], str] = {}  # (recipient, stop) -> code
        self.stopped = False
        self.snapshot_version = 0
        self._snapshot: dict | None = None
        self._injections: "queue.Queue[dict]" = queue.Queue()
        self._lock = threading.Lock()

        self._log_record({"record": "header", "seed": self.seed,
                          "fleet": [c.id for c in scenario.fleet]})
        self._load_fleet()
        for craft in self.aircraft.values():
            if craft.state.queue:
                self._schedule(0.0, "mission_ev", craft.config_id,
                               {"ev": Ev("depart", 0.0)})
        for hail_script in scenario.agents.hails:
            self._schedule(hail_script.t_s, "hail", "", {"script": hail_script})
        for contact, points in scenario.agents.tracks.items():
            for (t, x, y) in points:
                self._schedule(t, "track", contact, {"pos": Position(x, y)})
        self._publish_snapshot()

    # -- logging and scheduling ----------------------------------------------

    def _log_record(self, body: dict, t: float | None = None) -> dict:
        rec = {"seq": self._log_seq, "t": self.now if t is None else t, **body}
        self._log_seq += 1
        self.log.append(rec)
        if "record" in rec:
            self.lines.append(json.dumps(rec, separators=(",", ":"), sort_keys=True))
        else:
            self.lines.append(protocol.encode(protocol.Message(
                rec["seq"], rec["t"], rec["src"], rec["dst"], rec["kind"],
                rec["payload"])))
        return rec

    def _schedule(self, t: float, kind: str, target: str, data: dict) -> int:
        self._sched_seq += 1
        heapq.heappush(self._queue, (t, self._sched_seq, kind, target, data))
        return self._sched_seq

    def send(self, src: str, dst: str, kind: str, payload: dict) -> protocol.Message:
        msg = protocol.Message(self._log_seq, self.now, src, dst, kind, payload)
        self._log_record({"src": msg.src, "dst": msg.dst, "kind": msg.kind,
                          "payload": msg.payload})
        self.report.message_counts[kind] = self.report.message_counts.get(kind, 0) + 1
        self._schedule(self.now + self.params.bus_latency_s, "bus", dst, {"message": msg})
        return msg

    # -- setup ---------------------------------------------------------------

    def _load_fleet(self) -> None:
        accepted, rejected = dispenser.screen_batch(list(self.scenario.articles))
        self.report.rejected = [a.id for a in rejected]
        remaining = accepted
        for cfg in self.scenario.fleet:
            grid = CompartmentGrid(cfg.rows, cfg.cols)
            assignment = dispenser.assign_articles(remaining, grid)
            placed_ids = {p.article_id for p in assignment.placements}
            placed = [a for a in remaining if a.id in placed_ids]
            remaining = [a for a in remaining if a.id not in placed_ids]
            by_id = {a.id: a for a in placed}
            manifest = dispenser.read_manifest(grid, assignment, by_id)
            self._log_record({"record": "assignment", "aircraft": cfg.id,
                              "placements": [[p.article_id, p.region_id]
                                             for p in assignment.placements],
                              "unplaced": []})
            self._log_record({"record": "manifest", "aircraft": cfg.id,
                              "entries": [[e.region_id, e.article_id, e.destination]
                                          for e in manifest.entries]})
            state = MissionState(
                aircraft=cfg.id, dispenser=f"{cfg.id}.dispenser",
                base_pos=self.scenario.base, params=self.params,
                battery_j=self.params.battery_capacity_j)
            craft = AircraftRuntime(config_id=cfg.id, grid=grid, state=state,
                                    position=self.scenario.base)
            craft.articles = by_id
            self.aircraft[cfg.id] = craft
            self._build_delivery_tasks(craft, assignment)
        self.report.unplaced = [a.id for a in remaining]

    def _build_delivery_tasks(self, craft: AircraftRuntime,
                              assignment: dispenser.Assignment) -> None:
        by_dest: dict[str, list[str]] = {}
        regions = {p.article_id: p.region_id for p in assignment.placements}
        for p in assignment.placements:
            art = craft.articles[p.article_id]
            by_dest.setdefault(art.destination, []).append(art.id)
        if not by_dest:
            return
        destinations = [(self.scenario.address(d), ids) for d, ids in sorted(by_dest.items())]
        plan = planner.build_flight_plan(self.scenario.base, destinations, self.params)
        craft.plan = plan
        for stop in plan.stops:
            craft.state.queue.append(self._make_delivery_task(craft, stop.address,
                                                              stop.article_ids, regions))

    def _make_delivery_task(self, craft: AircraftRuntime, address: Address,
                            article_ids: tuple[str, ...], regions: dict) -> StopTask:
        arts = [craft.articles[a] for a in article_ids]
        sensitive = any(a.sensitive for a in arts)
        recipient = address.registered_contacts[0] if address.registered_contacts else ""
        confidence = None
        if address.signature is not None:
            captured = address.captured_signature or address.signature
            confidence = protocol.signature_confidence(address.signature, captured)
        expected = None
        if sensitive:
            barcode = protocol.barcode_issue(arts[0].id, self.rng)
            expected = barcode.code
            if recipient:
                # advance challenge so the recipient can present the code on site
                self.send(craft.dispenser_id, recipient, "BarcodeChallenge",
                          {"stop": address.id, "code": barcode.code, "advance": True})
                self._recipient_codes[(recipient, address.id)] = barcode.code
        return StopTask(
            kind="deliver", stop_id=address.id, position=address.position,
            article_ids=tuple(article_ids),
            regions={a: regions[a] for a in article_ids},
            senders={a.id: a.sender for a in arts},
            recipient=recipient, sensitive=sensitive,
            has_signature=address.signature is not None,
            confidence=confidence, expected_barcode=expected)

    # -- main loop -----------------------------------------------------------

    def run(self, injections: list[tuple[float, dict]] | None = None) -> RunReport:
        """Fast mode: virtual time, runs to quiescence."""
        for t, command in injections or []:
            self._schedule(t, "injection", "", {"command": command})
        while self._queue:
            self._process_next()
        self._finish()
        return self.report

    def run_paced(self, pace: float, stop_flag: threading.Event | None = None) -> RunReport:
        """Wall-clock scaled mode for the operator gateway."""
        start = wall_time.monotonic()
        while True:
            if stop_flag is not None and stop_flag.is_set():
                break
            self._drain_injections()
            target = (wall_time.monotonic() - start) * pace
            progressed = False
            while self._queue and self._queue[0][0] <= target:
                self._process_next()
                progressed = True
            if not self._queue and self._injections.empty():
                break
            if not progressed:
                wall_time.sleep(0.02)
        self._finish()
        return self.report

    def inject(self, command: dict) -> None:
        """Queue an external command (thread-safe); paced loop drains at ticks."""
        if self.stopped:
            raise EngineStopped("simulation already quiescent")
        self._injections.put(command)

    def _drain_injections(self) -> None:
        while True:
            try:
                command = self._injections.get_nowait()
            except queue.Empty:
                return
            self._schedule(self.now + self.params.bus_latency_s, "injection", "",
                           {"command": command})

    def _process_next(self) -> None:
        t, _, kind, target, data = heapq.heappop(self._queue)
        self.now = max(self.now, t)
        self.report.makespan_s = self.now
        handler = getattr(self, f"_on_{kind}")
        handler(target, data)
        self._publish_snapshot()

    def _finish(self) -> None:
        self.stopped = True
        for craft in self.aircraft.values():
            for art, reason in craft.state.failed.items():
                self.report.undelivered.append((art, reason))
            self.report.energy_used_j[craft.config_id] = craft.energy_used
            self.report.recharges[craft.config_id] = craft.recharge_count
        self.report.undelivered.sort()
        self._log_record({"record": "report", **self.report.to_json_dict()})
        self._publish_snapshot()

    # -- battery -------------------------------------------------------------

    def _drain_hover(self, craft: AircraftRuntime) -> None:
        if craft.hover_anchor is not None and self.now > craft.hover_anchor:
            self._consume(craft, self.params.p_hover_w * (self.now - craft.hover_anchor))
            craft.hover_anchor = self.now

    def _consume(self, craft: AircraftRuntime, joules: float) -> None:
        craft.state.battery_j = max(0.0, craft.state.battery_j - joules)
        craft.energy_used += joules
        if craft.guard_tripped:
            return
        verdict = mission.battery_guard(craft.state.battery_j,
                                        self.params.battery_capacity_j,
                                        self.params.battery_critical_frac)
        if verdict == "pause_and_return":
            craft.guard_tripped = True
            self._log_record({"record": "battery_guard", "aircraft": craft.config_id,
                              "battery_j": craft.state.battery_j})
            self._schedule(self.now, "mission_ev", craft.config_id,
                           {"ev": Ev("battery_low", self.now)})

    # -- mission event plumbing ----------------------------------------------

    def _step_mission(self, craft: AircraftRuntime, ev: Ev) -> None:
        tripped_before = craft.guard_tripped
        self._drain_hover(craft)
        if craft.guard_tripped and not tripped_before and ev.kind == "dwell_done":
            # the hover drain just crossed the critical threshold: abort the
            # dispense cycle and let the queued battery_low interrupt requeue
            # the stop (nothing has been released yet)
            return
        before = craft.state.phase
        _, actions = mission.mission_step(craft.state, ev)
        after = craft.state.phase
        if before == mission.AWAITING_BARCODE and after == mission.DISPENSING:
            craft.scanned_ok = True
        if ev.kind == "recharged":
            craft.guard_tripped = False
        # hover bookkeeping follows the token
        if craft.state.token is not None and craft.state.token.kind == "hover":
            if craft.hover_anchor is None:
                craft.hover_anchor = self.now
        else:
            self._drain_hover(craft)
            craft.hover_anchor = None
        for act in actions:
            self._apply_action(craft, act, ev)
        # the transition record seals the step: everything the step emitted
        # (alerts, pause notices, orifice records) precedes it in the log
        if after != before:
            self._log_record({"record": "transition", "aircraft": craft.config_id,
                              "from": before, "to": after, "trigger": ev.kind})

    def _on_mission_ev(self, target: str, data: dict) -> None:
        self._step_mission(self.aircraft[target], data["ev"])

    def _on_timer(self, target: str, data: dict) -> None:
        craft = self.aircraft[target]
        name, token = data["name"], data["token"]
        if craft.timers.get(name) != token:
            return  # cancelled
        del craft.timers[name]
        if name == "dwell":
            self._step_mission(craft, Ev("dwell_done", self.now))
        else:
            if name == "operator":
                self._expire_decisions(craft)
            self._step_mission(craft, Ev("timer", self.now, {"name": name}))

    def _on_arrive(self, target: str, data: dict) -> None:
        craft = self.aircraft[target]
        if data.get("token") != craft.arrive_token:
            return  # superseded by a tracked-drop replan
        task: StopTask = data["task"]
        craft.position = task.position
        craft.at_base = False
        craft.state.alt = data["alt"]
        self._consume(craft, data["energy"])
        if craft.guard_tripped and craft.state.phase != mission.RETURNING_TO_BASE:
            return  # the battery_low event scheduled at this instant takes over
        self._step_mission(craft, Ev("arrive", self.now, {"stop": task.stop_id}))

    def _on_arrive_base(self, target: str, data: dict) -> None:
        craft = self.aircraft[target]
        craft.position = self.scenario.base
        craft.at_base = True
        craft.state.alt = 0.0
        self._consume(craft, data["energy"])
        self._step_mission(craft, Ev("at_base", self.now))

    def _on_bus(self, dst: str, data: dict) -> None:
        msg: protocol.Message = data["message"]
        for craft in self.aircraft.values():
            if dst in (craft.config_id, craft.dispenser_id):
                self._step_mission(craft, Ev("msg", self.now, {"message": msg}))
                return
        if dst == "base":
            self._base_agent(msg)
        else:
            self._recipient_agent(dst, msg)

    def _on_injection(self, _target: str, data: dict) -> None:
        command = data["command"]
        self._log_record({"record": "injection", "command": command})
        if command.get("kind") == "operator_decision":
            self._apply_operator_decision(command["id"], command["verdict"])
        elif command.get("kind") == "assistance_resolved":
            decision = self.pending_decisions.pop(command["id"], None)
            if decision is not None:
                self.send("base", decision.context.get("requester", "base"),
                          "AssistanceResolved", {"id": decision.id})
        elif command.get("kind") == "hail":
            self._handle_hail_command(command)

    def _apply_operator_decision(self, decision_id: str, verdict: str) -> bool:
        decision = self.pending_decisions.get(decision_id)
        if decision is None or decision.decided:
            return False
        decision.decided = True
        del self.pending_decisions[decision_id]
        self.decision_outcomes[decision_id] = "decided"
        craft = self.aircraft[decision.aircraft]
        self.send("base", craft.dispenser_id, "OperatorDecisionResponse",
                  {"verdict": verdict, "stop": decision.stop, "id": decision.id})
        return True

    def _expire_decisions(self, craft: AircraftRuntime) -> None:
        for did in [d.id for d in self.pending_decisions.values()
                    if d.aircraft == craft.config_id]:
            del self.pending_decisions[did]
            self.decision_outcomes[did] = "expired"

    # -- agents --------------------------------------------------------------

    def _base_agent(self, msg: protocol.Message) -> None:
        policy = self.scenario.agents.operator_policy
        if msg.kind == "PermissionRequest":
            # no registered recipient: the base station grants directly
            self.send("base", msg.src, "PermissionResponse",
                      {"granted": True, "stop": msg.payload.get("stop")})
        elif msg.kind == "OperatorDecisionRequest":
            self._decision_counter += 1
            decision = PendingDecision(
                id=f"d{self._decision_counter}",
                kind="signature_escalation",
                aircraft=msg.payload["aircraft"],
                stop=msg.payload["stop"],
                confidence=msg.payload.get("confidence"),
                context=dict(msg.payload),
                deadline_t_s=msg.payload["deadline_t_s"])
            self.pending_decisions[decision.id] = decision
            if policy == "auto_approve":
                self._schedule(self.now + self.params.reaction_delay_s, "auto_decision",
                               "", {"id": decision.id, "verdict": "approve"})
            elif policy == "auto_reject":
                self._schedule(self.now + self.params.reaction_delay_s, "auto_decision",
                               "", {"id": decision.id, "verdict": "reject"})
            # timeout/gateway: leave pending; mission timer owns expiry
        elif msg.kind == "AssistanceRequest":
            self._decision_counter += 1
            decision = PendingDecision(
                id=f"d{self._decision_counter}", kind="assistance_request",
                aircraft=msg.payload.get("aircraft", ""),
                stop=msg.payload.get("stop", ""), confidence=None,
                context=dict(msg.payload),
                deadline_t_s=self.now + self.params.operator_timeout_s)
            self.pending_decisions[decision.id] = decision

    def _on_auto_decision(self, _target: str, data: dict) -> None:
        self._apply_operator_decision(data["id"], data["verdict"])

    def _recipient_agent(self, contact: str, msg: protocol.Message) -> None:
        policy = self.scenario.agents.recipients.get(contact)
        if policy is None or policy.kind == "absent":
            return
        delay = self.params.reaction_delay_s
        if msg.kind == "PermissionRequest":
            if policy.kind == "reschedule" and not self._reschedule_seen.get(contact):
                self._reschedule_seen[contact] = True
                self._schedule(self.now + delay, "agent_reply", contact, {
                    "dst": msg.src, "kind": "RescheduleRequest",
                    "payload": {"stop": msg.payload.get("stop"),
                                "earliest_s": policy.earliest_s}})
                return
            granted = True
            if policy.kind == "approve_with_prob":
                granted = self.rng.random() < policy.p
            self._schedule(self.now + delay, "agent_reply", contact, {
                "dst": msg.src, "kind": "PermissionResponse",
                "payload": {"granted": granted, "stop": msg.payload.get("stop")}})
        elif msg.kind == "BarcodeChallenge" and not msg.payload.get("advance"):
            stop = msg.payload.get("stop")
            code = self._recipient_codes.get((contact, stop), "")
            if policy.kind == "present_barcode" and policy.barcode == "wrong" and code:
                first = str((int(code[0]) + 1) % 10)
                body = first + code[1:11]
                code = body + str(protocol.check_digit(body))
            self._schedule(self.now + delay, "agent_reply", contact, {
                "dst": msg.src, "kind": "BarcodeScan",
                "payload": {"stop": stop, "code": code}})

    def _on_agent_reply(self, contact: str, data: dict) -> None:
        self.send(contact, data["dst"], data["kind"], data["payload"])

    # -- crowd sourcing ------------------------------------------------------

    def _fleet_views(self) -> list[dispatch.FleetView]:
        views = []
        for craft in self.aircraft.values():
            available = craft.state.phase in (mission.IDLE, mission.DONE,
                                              mission.RETURNING_TO_BASE)
            free = any(craft.grid.region_free(rid) for rid in craft.grid.regions)
            views.append(dispatch.FleetView(craft.config_id, craft.position,
                                            available, free))
        return views

    def _on_hail(self, _target: str, data: dict) -> None:
        script = data["script"]
        self._handle_hail_command({
            "user": script.user, "position": script.position,
            "article": script.article, "drop_address": script.drop_address,
            "drop_tracked": script.drop_tracked})

    def _handle_hail_command(self, command: dict) -> None:
        user = command["user"]
        pos = command["position"]
        if not isinstance(pos, Position):
            pos = Position(float(pos["x"]), float(pos["y"]))
        article = command["article"]
        if not isinstance(article, Article):
            article = Article(**article)
        self.send(user, "base", "HailRequest", {"user": user, "x": pos.x, "y": pos.y})
        try:
            offer = dispatch.hail(pos, self._fleet_views(), self.params)
        except dispatch.NoneAvailable:
            self.send("base", user, "AbortNotice", {"reason": "none_available"})
            return
        job = dispatch.Job(
            id=f"job{len(self.jobs) + 1}", requester=user, pickup=pos,
            drop_address=command.get("drop_address"),
            drop_tracked=command.get("drop_tracked"),
            article_id=article.id, assigned_aircraft=offer.aircraft_id)
        self.jobs[job.id] = job
        self._log_job(job)
        self.send("base", user, "HailOffer",
                  {"job": job.id, "aircraft": offer.aircraft_id, "eta_s": offer.eta_s})
        job.advance("Offered")
        self.send(user, "base", "BookingConfirm", {"job": job.id})
        job.advance("Booked")
        self._log_job(job)
        craft = self.aircraft[offer.aircraft_id]
        craft.articles[article.id] = article
        task = StopTask(kind="pickup", stop_id=f"pickup:{job.id}", position=pos,
                        article_ids=(article.id,), recipient=user, job_id=job.id)
        craft.state.queue.append(task)
        if craft.state.phase in (mission.IDLE, mission.DONE):
            craft.state.phase = mission.IDLE
            self._schedule(self.now, "mission_ev", craft.config_id,
                           {"ev": Ev("depart", self.now)})

    def _log_job(self, job: dispatch.Job) -> None:
        self._log_record({"record": "job", "job": job.id, "state": job.state,
                          "aircraft": job.assigned_aircraft})

    def _on_track(self, contact: str, data: dict) -> None:
        pos: Position = data["pos"]
        for job in self.jobs.values():
            if job.drop_tracked != contact or job.state != "PickedUp":
                continue
            if dispatch.update_tracked_drop(job, pos, self.now):
                craft = self.aircraft[job.assigned_aircraft]
                self._log_record({"record": "replan", "job": job.id,
                                  "x": pos.x, "y": pos.y})
                self._retarget_drop(craft, job, pos)

    def _retarget_drop(self, craft: AircraftRuntime, job: dispatch.Job,
                       pos: Position) -> None:
        stop_id = f"drop:{job.id}"
        task = None
        if craft.state.current is not None and craft.state.current.stop_id == stop_id:
            task = craft.state.current
        else:
            task = next((s for s in craft.state.queue if s.stop_id == stop_id), None)
        if task is None:
            return
        task.position = pos
        if craft.state.current is task and craft.state.phase == mission.EN_ROUTE:
            # recompute the in-flight arrival against the new coordinates
            self._command_flight(craft, task, depart_t=craft.departed_at,
                                 origin=craft.departed_from)

    # -- action interpreter --------------------------------------------------

    def _travel(self, origin: Position, dest: Position, origin_at_base: bool,
                dest_is_base: bool) -> tuple[str, float, float]:
        ground = math.hypot(origin.x - dest.x, origin.y - dest.y)
        if origin_at_base or dest_is_base:
            mode = "climb"
        else:
            mode = "low" if ground < planner.d_star(self.params) else "climb"
        return (mode, planner.segment_time(ground, mode, self.params),
                planner.segment_energy(ground, mode, self.params))

    def _command_flight(self, craft: AircraftRuntime, task: StopTask,
                        depart_t: float | None = None,
                        origin: Position | None = None) -> None:
        origin = origin if origin is not None else craft.position
        depart_t = self.now if depart_t is None else depart_t
        mode, duration, energy = self._travel(origin, task.position,
                                              origin == self.scenario.base, False)
        # Climb legs arrive already descended to the band midpoint; the descent
        # is part of segment_energy's climb cost, matching the planner forecast.
        alt = self.params.band_mid_m
        craft.departed_at = depart_t
        craft.departed_from = origin
        craft.arrive_token += 1
        # rescheduled stops loiter so the aircraft never shows up early
        arrive_t = max(depart_t + duration, task.earliest_s)
        self._schedule(arrive_t, "arrive", craft.config_id,
                       {"task": task, "energy": energy, "alt": alt,
                        "token": craft.arrive_token})

    def _apply_action(self, craft: AircraftRuntime, act: Act, cause: Ev) -> None:
        data = act.data
        kind = act.kind
        if kind == "emit":
            self.send(data["src"], data["dst"], data["kind"], data["payload"])
        elif kind == "fly_to_stop":
            craft.scanned_ok = False
            self._command_flight(craft, data["task"])
            craft.at_base = False
        elif kind == "fly_to_base":
            mode, duration, energy = self._travel(craft.position, self.scenario.base,
                                                  False, True)
            self._schedule(self.now + duration, "arrive_base", craft.config_id,
                           {"energy": energy})
        elif kind == "land":
            duration = craft.state.alt / planner.VERTICAL_SPEED_M_PER_S
            self._schedule(self.now + duration, "mission_ev", craft.config_id,
                           {"ev": Ev("landed", self.now + duration)})
        elif kind == "set_altitude":
            target = data["target"]
            duration = abs(craft.state.alt - target) / planner.VERTICAL_SPEED_M_PER_S
            self._consume(craft, abs(craft.state.alt - target)
                          * self.params.p_vert_j_per_m)
            self._schedule(self.now + duration, "mission_ev", craft.config_id,
                           {"ev": Ev("altitude_reached", self.now + duration,
                                     {"alt": target})})
        elif kind == "altitude_hold":
            self._schedule(self.now, "mission_ev", craft.config_id,
                           {"ev": Ev("altitude_held", self.now)})
        elif kind == "request_gps_fix":
            # simulated GPS settles on the commanded coordinates
            self._schedule(self.now + 0.5, "mission_ev", craft.config_id,
                           {"ev": Ev("gps_fix", self.now + 0.5,
                                     {"position": craft.position})})
        elif kind == "reverify":
            self._schedule(self.now + 1.0, "mission_ev", craft.config_id,
                           {"ev": Ev("gps_fix", self.now + 1.0,
                                     {"position": craft.state.current.position})})
        elif kind == "hover_stabilized":
            self._schedule(self.now, "mission_ev", craft.config_id,
                           {"ev": Ev("hover_stable", self.now)})
        elif kind == "capture_signature":
            self._schedule(self.now + 1.0, "mission_ev", craft.config_id,
                           {"ev": Ev("signature_captured", self.now + 1.0,
                                     {"confidence": craft.state.current.confidence})})
        elif kind == "open_orifice":
            token = data["token"]
            craft.grid.set_orifice(data["region"], "open", token)
            self._log_record({"record": "orifice", "aircraft": craft.config_id,
                              "region": data["region"], "state": "open",
                              "token": token.kind, "phase": craft.state.phase})
        elif kind == "close_orifice":
            if craft.grid.orifice_open.get(data["region"]):
                craft.grid.set_orifice(data["region"], "closed")
                self._log_record({"record": "orifice", "aircraft": craft.config_id,
                                  "region": data["region"], "state": "closed",
                                  "token": None, "phase": craft.state.phase})
        elif kind == "dwell":
            self._start_timer(craft, "dwell", data["duration"])
        elif kind == "start_timer":
            self._start_timer(craft, data["name"], data["duration"])
        elif kind == "cancel_timer":
            craft.timers.pop(data["name"], None)
        elif kind == "cancel_timers":
            craft.timers.clear()
        elif kind == "release":
            self._release_article(craft, data["article"], data["region"])
        elif kind == "send_acks":
            task = craft.state.current
            for art_id in data["articles"]:
                ctx = protocol.AckContext(
                    article_id=art_id, dispenser=craft.dispenser_id, base="base",
                    sender=task.senders.get(art_id, ""),
                    scanner=task.recipient,
                    recipient_scanned=craft.scanned_ok and task.sensitive)
                for m in protocol.ack_chain(ctx):
                    self.send(m.src, m.dst, m.kind, m.payload)
            self._schedule(self.now, "mission_ev", craft.config_id,
                           {"ev": Ev("acks_sent", self.now)})
        elif kind == "orifices_closed":
            self._schedule(self.now, "mission_ev", craft.config_id,
                           {"ev": Ev("closed", self.now)})
        elif kind == "recharge":
            craft.recharge_count += 1
            self._schedule(self.now + data["duration"], "mission_ev", craft.config_id,
                           {"ev": Ev("recharged", self.now + data["duration"])})
        elif kind == "request_top_load":
            self._do_top_load(craft, data["task"])
        elif kind == "pickup_complete":
            self._complete_pickup(craft, data["task"])
        elif kind == "requeued":
            self._log_record({"record": "requeue", "aircraft": craft.config_id,
                              "stop": data["stop"], "reason": data["reason"]})
        elif kind == "gave_up":
            self._log_record({"record": "gave_up", "aircraft": craft.config_id,
                              "stop": data["stop"], "reason": data["reason"]})
        elif kind == "reschedule":
            self._log_record({"record": "reschedule", "aircraft": craft.config_id,
                              "stop": data["task"].stop_id,
                              "earliest_s": data["earliest_s"]})
        elif kind == "mission_done":
            craft.guard_tripped = False
        elif kind == "ignored":
            self._log_record({"record": "ignored_event", "aircraft": craft.config_id,
                              **data})

    def _start_timer(self, craft: AircraftRuntime, name: str, duration: float) -> None:
        self._timer_token += 1
        craft.timers[name] = self._timer_token
        self._schedule(self.now + duration, "timer", craft.config_id,
                       {"name": name, "token": self._timer_token})

    def _release_article(self, craft: AircraftRuntime, article_id: str,
                         region: str) -> None:
        craft.grid.remove(region)
        article = craft.articles[article_id]
        estimate = planner.drop_dispersion(craft.state.alt, self.scenario.wind_speed,
                                           article.ballast, self.params)
        radius = estimate.dispersion_radius_m
        r = radius * math.sqrt(self.rng.random())
        theta = self.rng.uniform(0.0, 2.0 * math.pi)
        offset = r  # uniform over the dispersion disc
        task = craft.state.current
        self._log_record({"record": "drop", "article": article_id,
                          "stop": task.stop_id, "offset_m": offset,
                          "radius_m": radius,
                          "x": task.position.x + r * math.cos(theta),
                          "y": task.position.y + r * math.sin(theta)})
        self.report.delivered.append(DeliveredItem(article_id, self.now, offset,
                                                   task.stop_id))
        job = next((j for j in self.jobs.values() if j.article_id == article_id), None)
        if job is not None:
            job.advance("Delivered")
            self._log_job(job)

    def _do_top_load(self, craft: AircraftRuntime, task: StopTask) -> None:
        article = craft.articles[task.article_ids[0]]
        region_id = None
        for rid in sorted(craft.grid.regions):
            region = craft.grid.regions[rid]
            if craft.grid.region_free(rid) and region.n_cols >= article.width_cells \
                    and region.n_rows >= article.length_cells:
                region_id = rid
                break
        if region_id is None:
            self._step_mission(craft, Ev("battery_low", self.now))  # unreachable by hail guard
            return
        entry = dispenser.top_load(craft.grid, article, region_id, craft.state.token)
        task.regions[article.id] = region_id
        self._log_record({"record": "orifice", "aircraft": craft.config_id,
                          "region": region_id, "state": "open",
                          "token": "landed", "phase": craft.state.phase})
        self._log_record({"record": "orifice", "aircraft": craft.config_id,
                          "region": region_id, "state": "closed",
                          "token": None, "phase": craft.state.phase})
        self._log_record({"record": "manifest_delta", "aircraft": craft.config_id,
                          "entry": [entry.region_id, entry.article_id, entry.destination]})
        self._schedule(self.now + 1.0, "mission_ev", craft.config_id,
                       {"ev": Ev("article_placed", self.now + 1.0)})
        # the user presses the designated button shortly after placing the article
        job = self.jobs[task.job_id]
        self._schedule(self.now + 1.0 + self.params.reaction_delay_s, "agent_reply",
                       task.recipient, {"dst": craft.dispenser_id,
                                        "kind": "LoadComplete",
                                        "payload": {"job": job.id}})

    def _complete_pickup(self, craft: AircraftRuntime, task: StopTask) -> None:
        job = self.jobs[task.job_id]
        loaded = task.article_ids[0] in craft.grid.occupant.values()
        dispatch.confirm_load(job, aircraft_landed=craft.state.alt == 0.0,
                              region_loaded=loaded)
        self._log_job(job)
        if job.drop_address is not None:
            address = self.scenario.address(job.drop_address)
            drop_pos = address.position
            recipient = (address.registered_contacts[0]
                         if address.registered_contacts else job.requester)
        else:
            track = self.scenario.agents.tracks.get(job.drop_tracked, ())
            first = track[0] if track else (0.0, task.position.x, task.position.y)
            drop_pos = Position(first[1], first[2])
            recipient = job.drop_tracked
            job.drop_position = drop_pos
            job.last_replan_s = self.now
        drop_task = StopTask(
            kind="deliver", stop_id=f"drop:{job.id}", position=drop_pos,
            article_ids=(job.article_id,), regions={job.article_id:
                                                    task.regions[job.article_id]},
            senders={job.article_id: job.requester}, recipient=recipient,
            tracked=job.drop_tracked, job_id=job.id)
        craft.state.queue.append(drop_task)
        self._schedule(self.now, "mission_ev", craft.config_id,
                       {"ev": Ev("depart", self.now)})

    # -- snapshots (for the operator gateway) --------------------------------

    def _publish_snapshot(self) -> None:
        self.snapshot_version += 1
        fleet = []
        for craft in self.aircraft.values():
            state = craft.state
            fleet.append({
                "aircraft": craft.config_id,
                "phase": state.phase,
                "battery_frac": state.battery_j / self.params.battery_capacity_j,
                "position": {"x": craft.position.x, "y": craft.position.y,
                             "alt": state.alt},
                "current_stop": state.current.stop_id if state.current else None,
                "stops_remaining": len(state.queue) + len(state.retry_queue)
                                   + (1 if state.current else 0),
                "delivered": len(state.delivered),
            })
        self._snapshot = {
            "version": self.snapshot_version,
            "t_s": self.now,
            "stopped": self.stopped,
            "fleet": fleet,
            "jobs": {j.id: j.state for j in self.jobs.values()},
            "pending_decisions": len(self.pending_decisions),
        }

    def snapshot(self) -> dict | None:
        return self._snapshot

    def decisions_view(self) -> list[dict]:
        return [
            {"id": d.id, "kind": d.kind, "aircraft": d.aircraft, "stop": d.stop,
             "confidence": d.confidence, "context": d.context,
             "deadline_t_s": d.deadline_t_s}
            for d in self.pending_decisions.values()
        ]

    # -- log output ----------------------------------------------------------

    def log_lines(self) -> list[str]:
        return list(self.lines)


def run(scenario: Scenario, seed_override: int | None = None,
        injections: list[tuple[float, dict]] | None = None) -> tuple[list[str], RunReport]:
    """Fast-mode convenience wrapper: returns (event log lines, report)."""
    engine = Engine(scenario, seed_override)
    report = engine.run(injections)
    return engine.log_lines(), report
