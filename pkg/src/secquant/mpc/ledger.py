"""Message accounting for simulated protocol runs."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

PHASES = ("input", "preprocessing", "online", "output")
BITS_PER_MIB = 8 * 2**20


@dataclass(frozen=True)
class Message:
    round: int
    phase: str
    src: str
    dst: str
    bits: int
    tag: str = ""

    def as_record(self) -> dict:
        record = asdict(self)
        record["from"] = record.pop("src")
        record["to"] = record.pop("dst")
        return {k: record[k] for k in ("round", "phase", "from", "to", "bits", "tag")}


@dataclass
class CostLedger:
    """Bit counters per (sender, receiver, phase), plus a full transcript.

    Messages a server addresses to itself are recorded like any other so
    that totals follow the protocol description step by step; pass
    ``include_self=False`` to count network traffic only.
    """

    transcript: list[Message] = field(default_factory=list)
    ops: Counter = field(default_factory=Counter)
    round: int = 0

    def charge(self, src: str, dst: str, bits: int, *, phase: str, tag: str = "") -> None:
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}")
        if bits < 0:
            raise ValueError("bit counts are non-negative")
        self.transcript.append(Message(self.round, phase, src, dst, int(bits), tag))

    def next_round(self) -> None:
        self.round += 1

    def count_op(self, name: str, phase: str, count: int = 1) -> None:
        self.ops[(phase, name)] += int(count)

    def bits(
        self,
        phase: str | None = None,
        *,
        include_self: bool = True,
        src: str | None = None,
        dst: str | None = None,
        tag_prefix: str | None = None,
    ) -> int:
        total = 0
        for msg in self.transcript:
            if phase is not None and msg.phase != phase:
                continue
            if not include_self and msg.src == msg.dst:
                continue
            if src is not None and msg.src != src:
                continue
            if dst is not None and msg.dst != dst:
                continue
            if tag_prefix is not None and not msg.tag.startswith(tag_prefix):
                continue
            total += msg.bits
        return total

    def mib(self, phase: str | None = None, **kwargs) -> float:
        return self.bits(phase, **kwargs) / BITS_PER_MIB

    def by_pair(self, phase: str | None = None) -> dict[tuple[str, str, str], int]:
        out: Counter = Counter()
        for msg in self.transcript:
            if phase is None or msg.phase == phase:
                out[(msg.src, msg.dst, msg.phase)] += msg.bits
        return dict(sorted(out.items()))

    def summary(self) -> dict:
        return {
            "bits": {p: self.bits(p) for p in PHASES},
            "network_bits": {p: self.bits(p, include_self=False) for p in PHASES},
            "ops": {f"{phase}:{name}": n for (phase, name), n in sorted(self.ops.items())},
        }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(m.as_record(), sort_keys=False) + "\n" for m in self.transcript)

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())
