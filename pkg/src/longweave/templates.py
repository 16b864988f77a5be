"""Versioned prompt templates, shipped as text assets and referenced by id."""

from __future__ import annotations

from importlib import resources

SYSTEM_TEMPLATE = "system_v1"
KEYCHAIN_TEMPLATE = "keychain_v1"
QA_TEMPLATE = "qa_v1"

_KNOWN = (SYSTEM_TEMPLATE, KEYCHAIN_TEMPLATE, QA_TEMPLATE)


class UnknownTemplateError(KeyError):
    pass


def get_template(template_id: str) -> str:
    """Raw template text for the given id; raises UnknownTemplateError."""
    if template_id not in _KNOWN:
        raise UnknownTemplateError(f"unknown template {template_id!r}; known: {_KNOWN}")
    path = resources.files("longweave").joinpath("assets", f"{template_id}.txt")
    return path.read_text(encoding="utf-8").rstrip("\n")


def system_prompt(template_id: str = SYSTEM_TEMPLATE) -> str:
    return get_template(template_id)


def render_qa_prompt(context: str, question: str, template_id: str = QA_TEMPLATE) -> str:
    return get_template(template_id).format(context=context, question=question)
