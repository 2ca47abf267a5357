from __future__ import annotations

from typing import TYPE_CHECKING

from .program import Origin, SourceText

if TYPE_CHECKING:
    from ..lemmas import VerificationLemma


def _clause_lines(keyword: str, clause) -> list[str]:
    lines = clause.expr_text.splitlines() or [""]
    out = [f"  {keyword} {lines[0]}"] + [f"  {ln}" for ln in lines[1:]]
    if clause.note:
        out[-1] += f" // {clause.note}"
    return out


def render_lemma(lemma: "VerificationLemma") -> SourceText:
    """Render a body-less lemma; clause order is the lemma's own order."""
    out = [f"lemma {lemma.name}({lemma.signature.params_text()})"]
    for c in lemma.requires:
        out.extend(_clause_lines("requires", c))
    for c in lemma.ensures:
        out.extend(_clause_lines("ensures", c))
    out.append("{}")
    return SourceText("\n".join(out) + "\n", Origin.RENDERED)
