"""Intent grammar, catalogs and form filling."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Sequence

from ..backend import N_ACTIONS, N_FORMS, ActionDescriptor, FormSchema, load_actions, load_forms
from ..lvcsr_stub import RecognitionResult, Vocabulary, default_vocabulary


class IntentKind(str, Enum):
    ACTION = "ACTION"
    FORM = "FORM"              # open a form
    FIELD_FILL = "FIELD_FILL"
    GAME = "GAME"
    GESTURE = "GESTURE"
    MAP = "MAP"
    STOP = "STOP"
    FALLBACK = "FALLBACK"


@dataclass(frozen=True)
class Intent:
    kind: IntentKind
    action_id: int | None = None
    form_id: int | None = None
    field: str | None = None
    value: str | None = None
    name: str | None = None          # game or gesture name
    params: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.action_id is not None and not 1 <= self.action_id <= N_ACTIONS:
            raise ValueError(f"action id {self.action_id} outside 1..{N_ACTIONS}")
        if self.form_id is not None and not 1 <= self.form_id <= N_FORMS:
            raise ValueError(f"form id {self.form_id} outside 1..{N_FORMS}")


FALLBACK = Intent(IntentKind.FALLBACK)


@dataclass(frozen=True)
class GrammarRule:
    pattern: tuple[str, ...]
    intent: Intent


def _parse_intent_spec(spec: str) -> Intent:
    kind, _, arg = spec.partition(":")
    if kind == "action":
        return Intent(IntentKind.ACTION, action_id=int(arg))
    if kind == "form":
        return Intent(IntentKind.FORM, form_id=int(arg))
    if kind == "gesture":
        return Intent(IntentKind.GESTURE, name=arg)
    if kind == "game":
        return Intent(IntentKind.GAME, name=arg)
    if kind == "map":
        return Intent(IntentKind.MAP)
    if kind == "stop":
        return Intent(IntentKind.STOP)
    raise ValueError(f"unknown intent {spec!r}")


def load_grammar(path: str | Path | None = None) -> list[GrammarRule]:
    """``token pattern<TAB>intent`` lines; ``#`` starts a comment line."""
    if path is None:
        text = resources.files("duobot.data").joinpath("grammar.txt").read_text()
    else:
        text = Path(path).read_text()
    rules = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        pattern, spec = line.split("\t")
        rules.append(GrammarRule(tuple(pattern.split()), _parse_intent_spec(spec.strip())))
    return rules


@dataclass
class Catalog:
    grammar: list[GrammarRule] = field(default_factory=load_grammar)
    forms: dict[int, FormSchema] = field(default_factory=load_forms)
    actions: list[ActionDescriptor] = field(default_factory=load_actions)
    vocabulary: Vocabulary = field(default_factory=default_vocabulary)

    def __post_init__(self):
        missing = sorted({t for r in self.grammar for t in r.pattern} - set(self.vocabulary.tokens))
        if missing:
            raise ValueError(f"grammar words missing from the vocabulary: {missing[:5]}")
        self.field_names = frozenset(f.name for s in self.forms.values() for f in s.fields)


@dataclass(frozen=True)
class Session:
    id: str
    form_id: int | None = None
    fields: tuple[tuple[str, str], ...] = ()
    history: tuple[str, ...] = ()

    @property
    def field_map(self) -> dict[str, str]:
        return dict(self.fields)


def _find(tokens: Sequence[str], pattern: Sequence[str]) -> int:
    n = len(pattern)
    for i in range(len(tokens) - n + 1):
        if tuple(tokens[i:i + n]) == tuple(pattern):
            return i
    return -1


def parse_intent(result: RecognitionResult | Sequence[str], catalog: Catalog,
                 session: Session | None = None) -> Intent:
    """Keyword-grammar match over the transcript.

    While a form is open, a transcript starting with a field word fills that
    field with the remaining words. Otherwise the longest grammar pattern
    found as a contiguous run wins (earliest rule on ties); action parameters
    are read as ``<param> <value>`` pairs after the pattern.
    """
    tokens = list(result.tokens if isinstance(result, RecognitionResult) else result)
    if not tokens:
        return FALLBACK
    if session is not None and session.form_id is not None and tokens[0] in catalog.field_names:
        value = " ".join(tokens[1:])
        if value:
            return Intent(IntentKind.FIELD_FILL, form_id=session.form_id, field=tokens[0], value=value)
    best, best_len, best_at = None, 0, -1
    for rule in catalog.grammar:
        at = _find(tokens, rule.pattern)
        if at >= 0 and len(rule.pattern) > best_len:
            best, best_len, best_at = rule, len(rule.pattern), at
    if best is None:
        return FALLBACK
    intent = best.intent
    if intent.kind is IntentKind.ACTION:
        wanted = catalog.actions[intent.action_id - 1].required
        rest = tokens[best_at + best_len:]
        params = tuple((rest[i], rest[i + 1]) for i in range(len(rest) - 1) if rest[i] in wanted)
        if params:
            intent = replace(intent, params=params)
    return intent


# --------------------------------------------------------------------------
# form filling


@dataclass(frozen=True)
class SubmitRequest:
    form_id: int
    fields: tuple[tuple[str, str], ...]
    token: str


@dataclass(frozen=True)
class FormPrompt:
    form_id: int
    field: str
    text: str


@dataclass(frozen=True)
class ValidationProblem:
    form_id: int | None
    field: str | None
    text: str


FillOutcome = SubmitRequest | FormPrompt | ValidationProblem


def submission_token(session_id: str, form_id: int, fields: dict[str, str]) -> str:
    """Idempotency token: depends on the content, not on the order fields were filled."""
    body = "|".join([session_id, str(form_id)] + [f"{k}={v}" for k, v in sorted(fields.items())])
    return hashlib.sha256(body.encode()).hexdigest()[:20]


def fill_and_submit(session: Session, intent: Intent, catalog: Catalog) -> tuple[Session, FillOutcome]:
    """Apply a form intent; returns the updated session and what to do next."""
    if intent.kind is IntentKind.FORM:
        session = replace(session, form_id=intent.form_id, fields=())
    elif intent.kind is IntentKind.FIELD_FILL:
        if session.form_id is None or intent.form_id != session.form_id:
            return session, ValidationProblem(intent.form_id, intent.field,
                                              f"form {intent.form_id} is not the open form")
        schema = catalog.forms[session.form_id]
        if intent.field not in schema.field_names:
            return session, ValidationProblem(session.form_id, intent.field,
                                              f"{intent.field} is not part of {schema.name}")
        fields = session.field_map
        fields[intent.field] = intent.value
        session = replace(session, fields=tuple(sorted(fields.items())))
    else:
        raise ValueError(f"not a form intent: {intent.kind}")
    schema = catalog.forms[session.form_id]
    filled = session.field_map
    for name in schema.required:
        if name not in filled:
            return session, FormPrompt(schema.id, name, f"please say your {name}")
    token = submission_token(session.id, schema.id, filled)
    req = SubmitRequest(schema.id, tuple(sorted(filled.items())), token)
    return replace(session, form_id=None, fields=()), req
