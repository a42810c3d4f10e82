"""World model: geometry, scenario schema, validation, and defaults.

A scenario is a UTF-8 JSON document with top-level keys "base", "addresses",
"articles", "fleet", "wind", "agents", "params", "seed".  All types here are
immutable value objects once constructed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

from .dispenser import Article


class ParseError(Exception):
    """Scenario document is not well-formed JSON or has a wrong top-level shape."""


class ValidationError(Exception):
    """Scenario content violates a schema rule; message names the offending path."""

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


@dataclass(frozen=True)
class Position:
    """Planar east/north coordinates plus altitude above ground, in meters."""

    x: float
    y: float
    alt: float = 0.0

    def __post_init__(self) -> None:
        for name in ("x", "y", "alt"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(name, "coordinate must be finite")
        if self.alt < 0:
            raise ValidationError("alt", "altitude must be >= 0")


def distance(a: Position, b: Position) -> float:
    """Ground (x, y) Euclidean distance; altitude is the planner's business."""
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True)
class SignatureVector:
    """16-component feature vector standing in for a stored drop-site image."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != 16:
            raise ValidationError("signature", "must have 16 components")
        if math.fsum(v * v for v in self.values) <= 0.0:
            raise ValidationError("signature", "must have non-zero norm")

    def norm(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.values))


@dataclass(frozen=True)
class Address:
    id: str
    position: Position
    signature: SignatureVector | None = None
    captured_signature: SignatureVector | None = None
    registered_contacts: tuple[str, ...] = ()


@dataclass(frozen=True)
class AircraftConfig:
    id: str
    rows: int = 3
    cols: int = 3


# Per-recipient behavior, selected by the "policy" key in the agents block.
@dataclass(frozen=True)
class RecipientPolicy:
    kind: str = "always_approve"  # always_approve | approve_with_prob | reschedule | absent | present_barcode
    p: float = 1.0
    earliest_s: float = 0.0
    barcode: str = "correct"  # correct | wrong

    _KINDS = ("always_approve", "approve_with_prob", "reschedule", "absent", "present_barcode")


@dataclass(frozen=True)
class HailScript:
    """A pre-scripted crowd-sourcing hail injected at a fixed simulation time."""

    t_s: float
    user: str
    position: Position
    article: Article
    drop_address: str | None = None   # fixed-address drop
    drop_tracked: str | None = None   # moving-recipient drop (tracked contact id)


@dataclass(frozen=True)
class Params:
    """Tunable knobs; defaults apply when the scenario omits the params block."""

    cruise_alt_m: float = 60.0
    safe_drop_band_m: tuple[float, float] = (4.0, 8.0)
    gps_tol_m: float = 3.0
    p_cruise_j_per_m: float = 1.0
    p_low_j_per_m: float = 1.5
    p_vert_j_per_m: float = 3.0
    p_hover_w: float = 120.0
    dispense_dwell_s: float = 20.0
    battery_capacity_j: float = 500_000.0
    battery_critical_frac: float = 0.20
    confidence_threshold: float = 0.85
    permission_timeout_s: float = 30.0
    operator_timeout_s: float = 60.0
    barcode_timeout_s: float = 30.0
    max_reattempts: int = 2
    drag_factor_plain: float = 1.3
    drag_factor_ballast: float = 1.0
    g_m_per_s2: float = 9.81
    speed_cruise_m_per_s: float = 12.0
    speed_low_m_per_s: float = 6.0
    battery_reserve_frac: float = 0.10
    bus_latency_s: float = 0.1
    recharge_s: float = 300.0
    reaction_delay_s: float = 2.0
    max_gps_reverify: int = 3

    def __post_init__(self) -> None:
        lo, hi = self.safe_drop_band_m
        if not (0 <= lo < hi < self.cruise_alt_m):
            raise ValidationError("params.safe_drop_band_m", "need 0 <= low < high < cruise_alt_m")
        if not (self.p_low_j_per_m > self.p_cruise_j_per_m > 0):
            raise ValidationError("params.p_low_j_per_m", "need p_low > p_cruise > 0")
        if self.p_vert_j_per_m <= 0:
            raise ValidationError("params.p_vert_j_per_m", "must be > 0")
        if self.speed_cruise_m_per_s <= 0 or self.speed_low_m_per_s <= 0:
            raise ValidationError("params.speed", "speeds must be > 0")

    @property
    def band_mid_m(self) -> float:
        lo, hi = self.safe_drop_band_m
        return (lo + hi) / 2.0


@dataclass(frozen=True)
class Agents:
    recipients: dict[str, RecipientPolicy] = field(default_factory=dict)
    operator_policy: str = "auto_approve"  # auto_approve | auto_reject | timeout | gateway
    hails: tuple[HailScript, ...] = ()
    # tracked recipient movement: contact id -> [(t_s, x, y), ...] sorted by t_s
    tracks: dict[str, tuple[tuple[float, float, float], ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    base: Position
    addresses: tuple[Address, ...]
    articles: tuple[Article, ...]
    fleet: tuple[AircraftConfig, ...]
    wind_speed: float
    wind_direction: float
    agents: Agents
    params: Params
    seed: int

    def address(self, addr_id: str) -> Address:
        for a in self.addresses:
            if a.id == addr_id:
                return a
        raise KeyError(addr_id)


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ValidationError(f"{path}.{key}", "missing required key")
    return obj[key]


def _position(obj, path: str, default_alt: float = 0.0) -> Position:
    if not isinstance(obj, dict):
        raise ValidationError(path, "expected an object with x/y")
    try:
        return Position(float(_require(obj, "x", path)), float(_require(obj, "y", path)),
                        float(obj.get("alt", default_alt)))
    except (TypeError, ValueError) as exc:
        raise ValidationError(path, f"bad coordinate: {exc}") from None


def _signature(raw, path: str) -> SignatureVector:
    if not isinstance(raw, list):
        raise ValidationError(path, "expected a list of 16 numbers")
    try:
        return SignatureVector(tuple(float(v) for v in raw))
    except (TypeError, ValueError):
        raise ValidationError(path, "non-numeric signature component") from None


def _article(raw: dict, i: int) -> Article:
    path = f"articles[{i}]"
    art = Article(
        id=str(_require(raw, "id", path)),
        destination=str(raw.get("destination", "")),
        width_cells=int(raw.get("width_cells", 1)),
        length_cells=int(raw.get("length_cells", 1)),
        mass_kg=float(raw.get("mass_kg", 0.5)),
        sensitive=bool(raw.get("sensitive", False)),
        ballast=bool(raw.get("ballast", False)),
        contraband=bool(raw.get("contraband", False)),
        sender=str(raw.get("sender", "")),
    )
    if art.width_cells < 1 or art.length_cells < 1:
        raise ValidationError(f"{path}.width_cells", "cell dimensions must be positive")
    if art.mass_kg <= 0:
        raise ValidationError(f"{path}.mass_kg", "mass must be positive")
    return art


def _recipient_policy(raw: dict, path: str) -> RecipientPolicy:
    kind = raw.get("policy", "always_approve")
    if kind not in RecipientPolicy._KINDS:
        raise ValidationError(f"{path}.policy", f"unknown policy {kind!r}")
    p = float(raw.get("p", 1.0))
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"{path}.p", "probability must be in [0,1]")
    return RecipientPolicy(kind=kind, p=p,
                           earliest_s=float(raw.get("earliest_s", 0.0)),
                           barcode=str(raw.get("barcode", "correct")))


def _params(raw: dict) -> Params:
    known = {f.name for f in fields(Params)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ValidationError(f"params.{key}", "unknown parameter")
        if key == "safe_drop_band_m":
            if not (isinstance(value, list) and len(value) == 2):
                raise ValidationError("params.safe_drop_band_m", "expected [low, high]")
            kwargs[key] = (float(value[0]), float(value[1]))
        elif key in ("max_reattempts", "max_gps_reverify"):
            kwargs[key] = int(value)
        else:
            kwargs[key] = float(value)
    return Params(**kwargs)


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document, filling defaults for omissions."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be a JSON object")

    base = _position(_require(doc, "base", "$"), "base")

    addresses: list[Address] = []
    seen_ids: set[str] = set()
    for i, raw in enumerate(doc.get("addresses", [])):
        path = f"addresses[{i}]"
        aid = str(_require(raw, "id", path))
        if aid in seen_ids:
            raise ValidationError(f"{path}.id", f"duplicate address id {aid!r}")
        seen_ids.add(aid)
        sig = _signature(raw["signature"], f"{path}.signature") if raw.get("signature") else None
        cap = (_signature(raw["captured_signature"], f"{path}.captured_signature")
               if raw.get("captured_signature") else None)
        addresses.append(Address(
            id=aid,
            position=_position(raw, path),
            signature=sig,
            captured_signature=cap,
            registered_contacts=tuple(str(c) for c in raw.get("contacts", [])),
        ))

    articles = []
    for i, raw in enumerate(doc.get("articles", [])):
        art = _article(raw, i)
        if art.destination not in seen_ids:
            raise ValidationError(f"articles[{i}].destination",
                                  f"references unknown address {art.destination!r}")
        articles.append(art)

    fleet_raw = doc.get("fleet", [])
    if not fleet_raw:
        raise ValidationError("fleet", "fleet must be non-empty")
    fleet = []
    for i, raw in enumerate(fleet_raw):
        rows, cols = int(raw.get("rows", 3)), int(raw.get("cols", 3))
        if rows < 1 or cols < 1:
            raise ValidationError(f"fleet[{i}]", "grid dimensions must be positive")
        fleet.append(AircraftConfig(id=str(_require(raw, "id", f"fleet[{i}]")), rows=rows, cols=cols))

    wind = doc.get("wind", {"speed": 0.0, "direction": 0.0})
    wind_speed = float(wind.get("speed", 0.0))
    wind_direction = float(wind.get("direction", 0.0))
    if wind_speed < 0:
        raise ValidationError("wind.speed", "wind speed must be >= 0")

    agents_raw = doc.get("agents", {})
    recipients = {str(k): _recipient_policy(v, f"agents.recipients.{k}")
                  for k, v in agents_raw.get("recipients", {}).items()}
    operator_policy = agents_raw.get("operator", {}).get("policy", "auto_approve")
    if operator_policy not in ("auto_approve", "auto_reject", "timeout", "gateway"):
        raise ValidationError("agents.operator.policy", f"unknown policy {operator_policy!r}")
    hails = []
    for i, raw in enumerate(agents_raw.get("hails", [])):
        path = f"agents.hails[{i}]"
        art = _article(_require(raw, "article", path), i)
        drop = raw.get("drop", {})
        drop_addr = drop.get("address")
        drop_tracked = drop.get("tracked")
        if (drop_addr is None) == (drop_tracked is None):
            raise ValidationError(f"{path}.drop", "exactly one of address/tracked required")
        if drop_addr is not None and drop_addr not in seen_ids:
            raise ValidationError(f"{path}.drop.address", f"unknown address {drop_addr!r}")
        hails.append(HailScript(
            t_s=float(_require(raw, "t", path)),
            user=str(_require(raw, "user", path)),
            position=_position(_require(raw, "position", path), f"{path}.position"),
            article=art,
            drop_address=drop_addr,
            drop_tracked=drop_tracked,
        ))
    tracks = {}
    for contact, pts in agents_raw.get("tracks", {}).items():
        tracks[str(contact)] = tuple(
            (float(p[0]), float(p[1]), float(p[2])) for p in pts)

    params = _params(doc.get("params", {}))
    seed = int(doc.get("seed", 0))
    if not 0 <= seed < 2 ** 64:
        raise ValidationError("seed", "seed must fit in 64 unsigned bits")

    return Scenario(
        base=base,
        addresses=tuple(addresses),
        articles=tuple(articles),
        fleet=tuple(fleet),
        wind_speed=wind_speed,
        wind_direction=wind_direction,
        agents=Agents(recipients=recipients, operator_policy=operator_policy,
                      hails=tuple(hails), tracks=tracks),
        params=params,
        seed=seed,
    )


def serialize_scenario(s: Scenario) -> str:
    """Inverse of load_scenario; load_scenario(serialize_scenario(s)) == s."""

    def pos(p: Position) -> dict:
        return {"x": p.x, "y": p.y, "alt": p.alt}

    def art(a: Article) -> dict:
        return {"id": a.id, "destination": a.destination,
                "width_cells": a.width_cells, "length_cells": a.length_cells,
                "mass_kg": a.mass_kg, "sensitive": a.sensitive, "ballast": a.ballast,
                "contraband": a.contraband, "sender": a.sender}

    doc = {
        "base": pos(s.base),
        "addresses": [
            {"id": a.id, "x": a.position.x, "y": a.position.y, "alt": a.position.alt,
             **({"signature": list(a.signature.values)} if a.signature else {}),
             **({"captured_signature": list(a.captured_signature.values)}
                if a.captured_signature else {}),
             "contacts": list(a.registered_contacts)}
            for a in s.addresses
        ],
        "articles": [art(a) for a in s.articles],
        "fleet": [{"id": f.id, "rows": f.rows, "cols": f.cols} for f in s.fleet],
        "wind": {"speed": s.wind_speed, "direction": s.wind_direction},
        "agents": {
            "recipients": {
                k: {"policy": v.kind, "p": v.p, "earliest_s": v.earliest_s, "barcode": v.barcode}
                for k, v in s.agents.recipients.items()
            },
            "operator": {"policy": s.agents.operator_policy},
            "hails": [
                {"t": h.t_s, "user": h.user, "position": pos(h.position),
                 "article": art(h.article),
                 "drop": ({"address": h.drop_address} if h.drop_address is not None
                          else {"tracked": h.drop_tracked})}
                for h in s.agents.hails
            ],
            "tracks": {k: [list(p) for p in v] for k, v in s.agents.tracks.items()},
        },
        "params": {
            f.name: (list(getattr(s.params, f.name)) if f.name == "safe_drop_band_m"
                     else getattr(s.params, f.name))
            for f in fields(Params)
        },
        "seed": s.seed,
    }
    return json.dumps(doc, sort_keys=True)
