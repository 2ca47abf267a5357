"""Per-problem run outcomes.

``ledger.jsonl`` is an append-only journal written as problems finish, so its
line order depends on scheduling. ``ledger.json`` is the canonical snapshot,
sorted by problem id.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .records import Difficulty, PipelineTrace, Stage, TraceStatus

log = logging.getLogger(__name__)

JOURNAL = "ledger.jsonl"
SNAPSHOT = "ledger.json"


@dataclass(frozen=True)
class LedgerEntry:
    problem_id: str
    status: TraceStatus
    difficulty: Difficulty = Difficulty.UNKNOWN
    skill_tags: tuple[str, ...] = ()
    attempts: tuple[int, int, int] = (0, 0, 0)  # signature, contract, implementation
    char_length: int = 0
    hints_required: Optional[bool] = None

    @property
    def success(self) -> bool:
        return self.status == TraceStatus.SUCCESS

    @classmethod
    def from_trace(cls, trace: PipelineTrace) -> "LedgerEntry":
        counts = tuple(len(trace.stage_attempts(s)) for s in Stage)
        return cls(trace.problem_id, trace.status, trace.problem.difficulty, trace.problem.skill_tags,
                   counts, trace.char_length,
                   trace.hint_check.hints_required if trace.hint_check else None)

    def to_dict(self) -> dict:
        return {
            "problemId": self.problem_id,
            "status": self.status.value,
            "difficulty": self.difficulty.value,
            "skillTags": list(self.skill_tags),
            "attempts": dict(zip([s.value for s in Stage], self.attempts)),
            "charLength": self.char_length,
            "hintsRequired": self.hints_required,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LedgerEntry":
        att = d.get("attempts", {})
        return cls(d["problemId"], TraceStatus(d["status"]), Difficulty.parse(d.get("difficulty")),
                   tuple(d.get("skillTags", ())), tuple(int(att.get(s.value, 0)) for s in Stage),
                   int(d.get("charLength", 0)), d.get("hintsRequired"))


@dataclass
class RunLedger:
    entries: dict[str, LedgerEntry] = field(default_factory=dict)
    path: Optional[Path] = None  # output directory; None keeps the ledger in memory

    def __post_init__(self):
        self._lock = threading.Lock()

    @classmethod
    def open(cls, out_dir: Path | str) -> "RunLedger":
        """Load the journal in ``out_dir`` (if any) for appending."""
        out_dir = Path(out_dir)
        ledger = cls({}, out_dir)
        journal = out_dir / JOURNAL
        if journal.is_file():
            text = journal.read_text(encoding="utf-8")
            if text and not text.endswith("\n"):
                # drop a torn final line so the next append starts on a fresh one
                keep = text.rfind("\n") + 1
                log.warning("%s: dropping incomplete final line", journal)
                with open(journal, "r+", encoding="utf-8") as fh:
                    fh.truncate(len(text[:keep].encode("utf-8")))
                text = text[:keep]
            for n, line in enumerate(text.splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    entry = LedgerEntry.from_dict(json.loads(line))
                except (ValueError, KeyError) as e:
                    # a torn final line from an interrupted run
                    log.warning("%s:%d: ignoring unreadable ledger line (%s)", journal, n, e)
                    continue
                ledger.entries[entry.problem_id] = entry
        return ledger

    @classmethod
    def load(cls, path: Path | str) -> "RunLedger":
        """Read a snapshot file, a journal file, or an output directory."""
        path = Path(path)
        if path.is_dir():
            if (path / SNAPSHOT).is_file():
                path = path / SNAPSHOT
            else:
                return cls.open(path)
        if path.name.endswith(".jsonl"):
            return cls.open(path.parent) if path.name == JOURNAL else cls.from_lines(path.read_text("utf-8"))
        data = json.loads(path.read_text(encoding="utf-8"))
        return cls.from_entries(LedgerEntry.from_dict(d) for d in data["entries"])

    @classmethod
    def from_lines(cls, text: str) -> "RunLedger":
        return cls.from_entries(LedgerEntry.from_dict(json.loads(l)) for l in text.splitlines() if l.strip())

    @classmethod
    def from_entries(cls, entries: Iterable[LedgerEntry]) -> "RunLedger":
        out = cls()
        for e in entries:
            if e.problem_id in out.entries:
                raise ValueError(f"duplicate ledger entry for {e.problem_id}")
            out.entries[e.problem_id] = e
        return out

    def completed(self, problem_id: str) -> bool:
        return problem_id in self.entries

    def append(self, entry: LedgerEntry) -> None:
        with self._lock:
            if entry.problem_id in self.entries:
                raise ValueError(f"problem {entry.problem_id} already has a ledger entry")
            self.entries[entry.problem_id] = entry
            if self.path is not None:
                self.path.mkdir(parents=True, exist_ok=True)
                with open(self.path / JOURNAL, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")
                    fh.flush()

    def sorted_entries(self) -> list[LedgerEntry]:
        return [self.entries[k] for k in sorted(self.entries)]

    def snapshot(self) -> str:
        return json.dumps({"entries": [e.to_dict() for e in self.sorted_entries()]},
                          indent=2, ensure_ascii=False) + "\n"

    def write_snapshot(self) -> Optional[Path]:
        if self.path is None:
            return None
        target = self.path / SNAPSHOT
        target.write_text(self.snapshot(), encoding="utf-8")
        return target

    def __len__(self) -> int:
        return len(self.entries)
