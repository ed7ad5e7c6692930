"""
Event log, report counters and the independent trust replay oracle.

Every counter in a :class:`MetricsReport` is derived from event log records
alone, so a finished log can always be recounted and compared with the live
report.
"""

from __future__ import annotations

from typing import (
    IO,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)

from attrs import define, field, frozen

from .adversary import BehaviorSpec, Honest, is_benign
from .errors import LogParseError
from .sim._queue import EventKind

__all__ = [
    "ENERGY_SNAPSHOT",
    "PACKET_LOST",
    "EventLogRecord",
    "MetricsCollector",
    "MetricsReport",
    "OracleState",
    "format_log",
    "oracle_replay",
    "read_log",
    "recount",
    "report_row",
    "write_log",
]

#: Log-only kinds, never scheduled on the event queue.
PACKET_LOST = "PacketLost"
ENERGY_SNAPSHOT = "EnergySnapshot"

_KINDS = frozenset(k.value for k in EventKind) | {PACKET_LOST, ENERGY_SNAPSHOT}


@frozen
class EventLogRecord:
    """
    One line of the event log.

    `detail` is a space separated list of ``key=value`` tokens.
    """

    time: int
    kind: str
    subject: str
    seq: Optional[str] = None
    detail: str = ""

    def to_line(self) -> str:
        cells = (str(self.time), self.kind, self.subject, self.seq or "", self.detail)
        return "\t".join(cells)

    @classmethod
    def from_line(cls, line: str, line_number: int) -> EventLogRecord:
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 5:
            raise LogParseError(
                f"expected 5 tab-separated fields, got {len(parts)}", line_number
            )
        time, kind, subject, seq, detail = parts
        try:
            parsed_time = int(time)
        except ValueError:
            raise LogParseError(f"invalid time {time!r}", line_number) from None
        if kind not in _KINDS:
            raise LogParseError(f"unknown event kind {kind!r}", line_number)
        if not subject:
            raise LogParseError("missing subject", line_number)
        return cls(parsed_time, kind, subject, seq or None, detail)

    def fields(self) -> Dict[str, str]:
        """The detail tokens as a mapping."""
        res = {}
        for token in self.detail.split():
            key, _, value = token.partition("=")
            res[key] = value
        return res


def format_log(records: Iterable[EventLogRecord]) -> str:
    return "".join(f"{r.to_line()}\n" for r in records)


def write_log(records: Iterable[EventLogRecord], stream: IO[str]) -> None:
    for record in records:
        stream.write(record.to_line())
        stream.write("\n")


def read_log(lines: Iterable[str]) -> List[EventLogRecord]:
    """
    Parse a tab-separated event log.

    :raises LogParseError: on the first malformed line, with its line number.
    """
    records = []
    last_time = None
    for line_number, line in enumerate(lines, 1):
        if not line.strip():
            continue
        record = EventLogRecord.from_line(line, line_number)
        if last_time is not None and record.time < last_time:
            raise LogParseError("time goes backwards", line_number)
        last_time = record.time
        records.append(record)
    return records


@define
class MetricsReport:
    packets_sent: int = 0
    packets_delivered: int = 0
    packets_lost_permanently: int = 0
    retransmissions: int = 0
    drops_before_detection: Dict[str, int] = field(factory=dict)
    detection_time: Dict[str, int] = field(factory=dict)
    false_positives: int = 0
    false_negatives: int = 0
    rtr_count: int = 0
    ack_count: int = 0
    elections_held: int = 0
    final_energy: Dict[str, float] = field(factory=dict)

    @property
    def conserved(self) -> bool:
        resolved = self.packets_delivered + self.packets_lost_permanently
        return self.packets_sent == resolved


@define
class MetricsCollector:
    """Appends log records and keeps the counters in step with them."""

    records: List[EventLogRecord] = field(factory=list)
    sent: int = 0
    delivered: int = 0
    lost: int = 0
    retransmissions: int = 0
    rtrs: int = 0
    acks: int = 0
    elections: int = 0
    drops: Dict[str, int] = field(factory=dict)
    detected_at: Dict[str, int] = field(factory=dict)
    energy: Dict[str, float] = field(factory=dict)

    def record(self, record: EventLogRecord) -> None:
        self.records.append(record)
        kind = record.kind
        if kind == EventKind.PACKET_SEND:
            if record.fields().get("attempt", "0") == "0":
                self.sent += 1
            else:
                self.retransmissions += 1
        elif kind == EventKind.PACKET_RECEIVE:
            if record.fields().get("action") == "deliver":
                self.delivered += 1
        elif kind == PACKET_LOST:
            self.lost += 1
        elif kind == EventKind.FORWARD_TIMER_EXPIRY:
            if record.fields().get("outcome") == "drop":
                self.drops[record.subject] = self.drops.get(record.subject, 0) + 1
        elif kind == EventKind.MALICIOUS_BROADCAST:
            self.detected_at.setdefault(record.subject, record.time)
        elif kind == EventKind.RTR_DELIVERY:
            self.rtrs += 1
        elif kind == EventKind.ACK_DELIVERY:
            self.acks += 1
        elif kind == EventKind.ELECTION:
            self.elections += 1
        elif kind == ENERGY_SNAPSHOT:
            self.energy[record.subject] = float(record.fields()["energy"])

    def report(self, behaviors: Mapping[str, BehaviorSpec]) -> MetricsReport:
        """
        Freeze the counters into a report.

        `behaviors` decides who is an attacker: a detected benign node is a false
        positive, an undetected attacker a false negative.
        """
        attackers = sorted(n for n, spec in behaviors.items() if not is_benign(spec))
        detected = set(self.detected_at)
        return MetricsReport(
            packets_sent=self.sent,
            packets_delivered=self.delivered,
            packets_lost_permanently=self.lost,
            retransmissions=self.retransmissions,
            drops_before_detection={a: self.drops.get(a, 0) for a in attackers},
            detection_time={n: self.detected_at[n] for n in sorted(detected)},
            false_positives=sum(
                1 for n in detected if is_benign(behaviors.get(n, Honest()))
            ),
            false_negatives=sum(1 for a in attackers if a not in detected),
            rtr_count=self.rtrs,
            ack_count=self.acks,
            elections_held=self.elections,
            final_energy={n: self.energy[n] for n in sorted(self.energy)},
        )


def recount(
    records: Iterable[EventLogRecord], behaviors: Mapping[str, BehaviorSpec]
) -> MetricsReport:
    """Recompute a report from a finished log."""
    collector = MetricsCollector()
    for record in records:
        collector.record(record)
    return collector.report(behaviors)


@frozen
class OracleState:
    streak: int = 0
    tf: float = 100.0
    detected: bool = False


def oracle_replay(
    records: Iterable[EventLogRecord],
    x: float,
    ttf: float,
    nodes: Sequence[str] = (),
) -> Dict[str, OracleState]:
    """
    Recompute every node's trust state from raw overhear and timeout records.

    A second, straight-line implementation of the trust law. A counted drop
    adds one to the streak and an overheard forward zeroes it. A node whose
    trust factor reaches `ttf` or below is frozen.
    """
    streaks: Dict[str, int] = {n: 0 for n in nodes}
    detected: Set[str] = set()
    for record in records:
        node = record.subject
        if record.kind not in (EventKind.OVERHEAR, EventKind.FORWARD_TIMER_EXPIRY):
            continue
        streaks.setdefault(node, 0)
        if record.kind == EventKind.OVERHEAR:
            if record.fields().get("role") not in ("forward", "unmatched", "ack"):
                continue
            if node not in detected:
                streaks[node] = 0
        elif record.kind == EventKind.FORWARD_TIMER_EXPIRY:
            if record.fields().get("outcome") != "drop":
                continue
            if node in detected:
                continue
            streaks[node] += 1
            if _replayed_tf(x, streaks[node]) <= ttf:
                detected.add(node)
    return {
        n: OracleState(s, _replayed_tf(x, s), n in detected)
        for n, s in sorted(streaks.items())
    }


def _replayed_tf(x: float, n: int) -> float:
    tf = 100.0
    i = 0
    while i < n:
        tf = tf * x
        i += 1
    return tf


def report_row(report: MetricsReport) -> Dict[str, object]:
    """A flat mapping of the report, with mapping fields as dotted columns."""
    row: Dict[str, object] = {}
    for name in (
        "packets_sent",
        "packets_delivered",
        "packets_lost_permanently",
        "retransmissions",
        "false_positives",
        "false_negatives",
        "rtr_count",
        "ack_count",
        "elections_held",
    ):
        row[name] = getattr(report, name)
    mappings: Tuple[Tuple[str, Mapping[str, object]], ...] = (
        ("drops_before_detection", report.drops_before_detection),
        ("detection_time", report.detection_time),
        ("final_energy", report.final_energy),
    )
    for prefix, mapping in mappings:
        for key, value in mapping.items():
            row[f"{prefix}.{key}"] = value
    return row
