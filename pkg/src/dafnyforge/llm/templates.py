from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template
from typing import Mapping


class TemplateError(KeyError):
    def __init__(self, message: str, placeholder: str | None = None):
        super().__init__(message)
        self.placeholder = placeholder

    def __str__(self) -> str:
        return self.args[0]


def template_ids() -> list[str]:
    root = resources.files(__package__) / "prompts"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".txt"))


@lru_cache(maxsize=None)
def load_template(template_id: str) -> Template:
    path = resources.files(__package__) / "prompts" / f"{template_id}.txt"
    if not path.is_file():
        raise TemplateError(f"no prompt template named {template_id!r}")
    return Template(path.read_text(encoding="utf-8"))


def render_template(template_id: str, variables: Mapping[str, str]) -> str:
    tmpl = load_template(template_id)
    try:
        return tmpl.substitute(variables)
    except KeyError as e:
        name = e.args[0]
        raise TemplateError(f"template {template_id!r} has unbound placeholder ${{{name}}}", name) from None
    except ValueError as e:
        raise TemplateError(f"template {template_id!r} is malformed: {e}") from None
