"""Trace events: the append-only record of a simulation run.

Four event kinds, mirroring what the property checkers need to see:

- send: a term crossed the network (or was published on the bulletin)
- transition: an actor committed a state change or refused/aborted one
- adversary: an adversary capability was exercised
- verdict: the relying party judged an evidence bundle

All payload values are stored JSON-ready (hex strings for bytes and
terms, plain str/int/bool otherwise), so an in-memory trace and its
JSON-lines file are the same data. Timestamps are the strictly
increasing seq numbers; nothing in a trace depends on wall-clock time,
which is what makes replays byte-identical.

Transition payloads may carry protocol-internal secrets (the same way a
formal trace carries them); adversary-knowledge reconstruction uses only
send events, adversary events, and nothing else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..codec import Term, decode, encode

KIND_SEND = "send"
KIND_TRANSITION = "transition"
KIND_ADVERSARY = "adversary"
KIND_VERDICT = "verdict"


def term_hex(term: Term) -> str:
    return encode(term).hex()


def term_from_hex(text: str) -> Term:
    return decode(bytes.fromhex(text))


@dataclass(frozen=True)
class Event:
    seq: int
    kind: str
    body: dict

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "kind": self.kind, **self.body},
            sort_keys=True,
            separators=(",", ":"),
        )

    @staticmethod
    def from_json(line: str) -> "Event":
        obj = json.loads(line)
        seq = obj.pop("seq")
        kind = obj.pop("kind")
        return Event(seq=seq, kind=kind, body=obj)


class Trace:
    """Append-only event list with auto-assigned seq numbers."""

    def __init__(self) -> None:
        self.events: list[Event] = []

    def append(self, kind: str, **body) -> Event:
        event = Event(seq=len(self.events), kind=kind, body=body)
        self.events.append(event)
        return event

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    @staticmethod
    def from_jsonl(text: str) -> "Trace":
        trace = Trace()
        for line in text.splitlines():
            if line.strip():
                trace.events.append(Event.from_json(line))
        return trace
