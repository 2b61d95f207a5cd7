"""The three built-in prompt styles and rendering into chat messages.

Built-in template texts live as fixture files under ``templates/`` and are
the normative wording; code never re-types them.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .ingest import PurchaseRecord

logger = logging.getLogger(__name__)

#: Hard cap per rendered message; longer content is tail-truncated.
MAX_MESSAGE_CHARS = 4000

BUILTIN_TEMPLATE_IDS = ("P1", "P2", "P3")


class UnknownTemplateId(KeyError):
    pass


class PlaceholderUnresolved(KeyError):
    """A template references a placeholder the record cannot fill."""


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt with ``{item_name}``/``{item_description}`` placeholders."""

    template_id: str
    style: str  # instruction | cloze | few_shot | custom
    user_text: str
    system_text: str | None = None

    def __post_init__(self) -> None:
        if "{item_name}" not in self.user_text:
            raise ValueError(f"template {self.template_id}: user text must use {{item_name}}")


@dataclass(frozen=True)
class RenderedPrompt:
    template_id: str
    record_id: str
    messages: tuple[Message, ...]

    def as_chat(self) -> list[dict[str, str]]:
        return [{"role": m.role, "content": m.content} for m in self.messages]


def _fixture(name: str) -> str:
    text = resources.files(__package__).joinpath("templates", name).read_text(encoding="utf-8")
    return text.rstrip("\n")


def builtin_template(template_id: str) -> PromptTemplate:
    """Return one of the built-in templates by id (case-insensitive)."""
    tid = template_id.strip().upper()
    if tid == "P1":
        return PromptTemplate(
            "P1", "instruction", user_text=_fixture("item_user.txt"), system_text=_fixture("p1_system.txt")
        )
    if tid == "P2":
        return PromptTemplate("P2", "cloze", user_text=_fixture("p2_user.txt"))
    if tid == "P3":
        return PromptTemplate(
            "P3", "few_shot", user_text=_fixture("item_user.txt"), system_text=_fixture("p3_system.txt")
        )
    raise UnknownTemplateId(template_id)


def load_template(path: str | Path) -> PromptTemplate:
    """Load a custom template from a UTF-8 text file.

    A line containing exactly ``---`` splits an optional system section from
    the user section; without it the whole file is the user text.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    system_text: str | None = None
    user_text = text
    for marker in ("\n---\n", "\r\n---\r\n"):
        if marker in text:
            system_part, user_text = text.split(marker, 1)
            system_text = system_part.strip("\n")
            break
    return PromptTemplate(
        template_id=path.stem,
        style="custom",
        user_text=user_text.strip("\n"),
        system_text=system_text,
    )


def _substitute(text: str, values: dict[str, str]) -> str:
    try:
        return text.format_map(values)
    except KeyError as exc:
        raise PlaceholderUnresolved(f"unknown placeholder {exc}") from exc
    except (IndexError, ValueError) as exc:
        raise PlaceholderUnresolved(f"bad placeholder syntax: {exc}") from exc


def render(template: PromptTemplate, record: PurchaseRecord) -> RenderedPrompt:
    """Substitute the record's fields into the template, verbatim.

    Item text is never escaped; messages above MAX_MESSAGE_CHARS are
    truncated with a warning.
    """
    values = {"item_name": record.item_name, "item_description": record.item_description}
    messages: list[Message] = []
    if template.system_text is not None:
        messages.append(Message("system", _substitute(template.system_text, values)))
    messages.append(Message("user", _substitute(template.user_text, values)))

    capped: list[Message] = []
    for message in messages:
        content = message.content
        if len(content) > MAX_MESSAGE_CHARS:
            logger.warning(
                "truncating %s message for record %s from %d to %d chars",
                message.role,
                record.record_id,
                len(content),
                MAX_MESSAGE_CHARS,
            )
            content = content[:MAX_MESSAGE_CHARS]
        capped.append(Message(message.role, content))
    return RenderedPrompt(template.template_id, record.record_id, tuple(capped))


def prompt_digest(rendered: RenderedPrompt, model: str, temperature: float) -> str:
    """Collision-resistant cache key over model, temperature, and messages."""
    payload = {
        "model": model,
        "temperature": float(temperature),
        "messages": [[m.role, m.content] for m in rendered.messages],
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("ascii")).hexdigest()
