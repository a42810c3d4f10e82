"""Message vocabulary and handshakes.

One reliable, ordered, simulated bus replaces all radio transports.  The wire
format is one JSON object per LF-terminated line with keys exactly
{"seq","t","src","dst","kind","payload"}; the event log and the operator
gateway stream reuse this framing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .rng import SplitMix64
from .world import SignatureVector

KINDS = frozenset({
    "EnRouteNotice", "DeliveryAlert", "PermissionRequest", "PermissionResponse",
    "SignatureMismatch", "OperatorDecisionRequest", "OperatorDecisionResponse",
    "BarcodeChallenge", "BarcodeScan", "DeliveryAck", "RescheduleRequest",
    "RescheduleConfirm", "BatteryLow", "PauseDeliveries", "HailRequest",
    "HailOffer", "BookingConfirm", "PickupArrival", "LoadComplete",
    "AssistanceRequest", "AssistanceResolved", "AbortNotice",
})


class DecodeError(Exception):
    def __init__(self, reason: str, offset: int = 0) -> None:
        super().__init__(f"{reason} (byte offset {offset})")
        self.offset = offset


class ZeroVector(Exception):
    pass


class MalformedBarcode(Exception):
    pass


@dataclass(frozen=True)
class Message:
    seq: int
    time_s: float
    src: str
    dst: str
    kind: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")


def encode(m: Message) -> str:
    """One LF-free line; the caller appends the terminator when framing."""
    return json.dumps(
        {"seq": m.seq, "t": m.time_s, "src": m.src, "dst": m.dst,
         "kind": m.kind, "payload": m.payload},
        separators=(",", ":"), sort_keys=False)


def decode(line: str) -> Message:
    line = line.rstrip("\n")
    if not line:
        raise DecodeError("empty line")
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"malformed JSON: {exc.msg}", exc.pos) from None
    if not isinstance(doc, dict):
        raise DecodeError("expected a JSON object")
    required = {"seq", "t", "src", "dst", "kind", "payload"}
    if set(doc) != required:
        raise DecodeError(f"keys must be exactly {sorted(required)}")
    kind = doc["kind"]
    if kind not in KINDS:
        raise DecodeError(f"unknown kind {kind!r}", line.find(str(kind)))
    return Message(seq=int(doc["seq"]), time_s=float(doc["t"]), src=str(doc["src"]),
                   dst=str(doc["dst"]), kind=kind, payload=doc["payload"])


def signature_confidence(stored: SignatureVector, captured: SignatureVector) -> float:
    """Cosine similarity clamped at zero; the simulated image match."""
    ns, nc = stored.norm(), captured.norm()
    if ns == 0.0 or nc == 0.0:
        raise ZeroVector("signature vectors must have non-zero norm")
    dot = math.fsum(a * b for a, b in zip(stored.values, captured.values))
    return max(0.0, min(1.0, dot / (ns * nc)))


@dataclass(frozen=True)
class Barcode:
    code: str  # 12 digits, last is the check digit

    def __post_init__(self) -> None:
        validate_barcode(self.code)


def check_digit(first11: str) -> int:
    return sum(int(d) for d in first11) % 10


def validate_barcode(code: str) -> None:
    if len(code) != 12 or not code.isdigit():
        raise MalformedBarcode(f"barcode must be 12 digits, got {code!r}")
    if int(code[-1]) != check_digit(code[:-1]):
        raise MalformedBarcode(f"bad check digit in {code!r}")


def barcode_issue(article_id: str, rng: SplitMix64) -> Barcode:
    """Deterministic check-digit-valid code drawn from the given stream."""
    digits = "".join(str(rng.randrange(10)) for _ in range(11))
    return Barcode(digits + str(check_digit(digits)))


def barcode_verify(expected: Barcode, scanned: Barcode | str) -> bool:
    """Exact equality after validating the scan; True means matched."""
    code = scanned.code if isinstance(scanned, Barcode) else scanned
    validate_barcode(code)
    return code == expected.code


@dataclass(frozen=True)
class AckContext:
    article_id: str
    dispenser: str
    base: str
    sender: str = ""          # empty: no registered sender to relay to
    scanner: str = ""         # recipient scanner party id, when scan-confirmed
    recipient_scanned: bool = False


def ack_chain(ctx: AckContext) -> list[Message]:
    """Delivery-success acknowledgement relay; seq/time stamped later by the bus."""
    payload = {"article": ctx.article_id}
    chain: list[Message] = []
    if ctx.recipient_scanned:
        chain.append(Message(0, 0.0, ctx.scanner, ctx.dispenser, "DeliveryAck", payload))
    chain.append(Message(0, 0.0, ctx.dispenser, ctx.base, "DeliveryAck", payload))
    if ctx.sender:
        chain.append(Message(0, 0.0, ctx.base, ctx.sender, "DeliveryAck", payload))
    return chain
