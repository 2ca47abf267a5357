"""Success-rate tables by difficulty and by skill tag."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Optional, Sequence

from .ledger import LedgerEntry, RunLedger
from .records import Difficulty

SKILL_DENOMINATOR = "successes among problems carrying the tag / problems carrying the tag"

_TWO = Decimal("0.01")


def percent(successes: int, total: int) -> Optional[Decimal]:
    if total <= 0:
        return None
    return (Decimal(successes) * 100 / Decimal(total)).quantize(_TWO, rounding=ROUND_HALF_UP)


def mean_length(lengths: Sequence[int]) -> Optional[int]:
    if not lengths:
        return None
    return int((Decimal(sum(lengths)) / len(lengths)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class DifficultyRow:
    difficulty: Difficulty
    total: int
    successes: int
    rate: Optional[Decimal]
    avg_success_length: Optional[int]
    avg_fail_length: Optional[int]


@dataclass(frozen=True)
class SkillRow:
    skill: str
    tagged: int
    successes: int
    rate: Optional[Decimal]


def difficulty_table(entries: Sequence[LedgerEntry]) -> list[DifficultyRow]:
    rows = []
    for d in Difficulty:
        group = [e for e in entries if e.difficulty == d]
        if not group:
            continue
        ok = [e.char_length for e in group if e.success]
        bad = [e.char_length for e in group if not e.success]
        rows.append(DifficultyRow(d, len(group), len(ok), percent(len(ok), len(group)),
                                  mean_length(ok), mean_length(bad)))
    return rows


def skill_table(entries: Sequence[LedgerEntry]) -> list[SkillRow]:
    tags = sorted({t for e in entries for t in e.skill_tags})
    rows = []
    for t in tags:
        group = [e for e in entries if t in e.skill_tags]
        ok = sum(e.success for e in group)
        rows.append(SkillRow(t, len(group), ok, percent(ok, len(group))))
    return rows


def _cell(v) -> str:
    return "" if v is None else str(v)


DIFFICULTY_HEADER = ["Difficulty", "Total Samples", "Success Samples", "Success Rate (%)",
                     "Avg. Success Length", "Avg. Fail Length"]
SKILL_HEADER = ["Skill", "Tagged Problems", "Success Samples", "Success Rate (%)"]


def difficulty_csv(rows: Sequence[DifficultyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIFFICULTY_HEADER)
    for r in rows:
        w.writerow([r.difficulty.label, r.total, r.successes, _cell(r.rate),
                    _cell(r.avg_success_length), _cell(r.avg_fail_length)])
    return buf.getvalue()


def skill_csv(rows: Sequence[SkillRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SKILL_HEADER)
    for r in rows:
        w.writerow([r.skill, r.tagged, r.successes, _cell(r.rate)])
    return buf.getvalue()


def _text_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    for r in rows:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


@dataclass(frozen=True)
class Report:
    difficulty: list[DifficultyRow]
    skills: list[SkillRow]

    def text(self) -> str:
        drows = [[r.difficulty.label, str(r.total), str(r.successes), _cell(r.rate) or "-",
                  _cell(r.avg_success_length) or "-", _cell(r.avg_fail_length) or "-"] for r in self.difficulty]
        srows = [[r.skill, str(r.tagged), str(r.successes), _cell(r.rate) or "-"] for r in self.skills]
        parts = ["Success by difficulty (lengths in characters)", _text_table(DIFFICULTY_HEADER, drows), ""]
        parts.append("Success by skill tag")
        parts.append(f"rate = {SKILL_DENOMINATOR}")
        parts.append(_text_table(SKILL_HEADER, srows) if srows else "(no tagged problems)")
        return "\n".join(parts) + "\n"

    def write(self, out_dir: Path | str) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = {
            "report.txt": self.text(),
            "difficulty.csv": difficulty_csv(self.difficulty),
            "skills.csv": skill_csv(self.skills),
        }
        paths = []
        for name, content in files.items():
            p = out_dir / name
            p.write_text(content, encoding="utf-8")
            paths.append(p)
        return paths


def report(ledger: RunLedger | Sequence[LedgerEntry]) -> Report:
    entries = ledger.sorted_entries() if isinstance(ledger, RunLedger) else list(ledger)
    if not entries:
        raise ValueError("cannot report on an empty ledger")
    return Report(difficulty_table(entries), skill_table(entries))
