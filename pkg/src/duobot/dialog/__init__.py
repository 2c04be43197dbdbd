"""Conversation loop: intent grammar, form filling and the dialog state machine."""

from .catalog import (Catalog, Intent, IntentKind, Session, fill_and_submit, parse_intent,
                      submission_token)
from .machine import (AgeClientError, Command, DialogConfig, DialogContext, DialogState,
                      EventKind, InteractionEvent, Phase, Rejected, StubAgeClient, Target,
                      Transition, age_game, handle_event)

__all__ = [
    "AgeClientError", "Catalog", "Command", "DialogConfig", "DialogContext", "DialogState",
    "EventKind", "Intent", "IntentKind", "InteractionEvent", "Phase", "Rejected", "Session",
    "StubAgeClient", "Target", "Transition", "age_game", "fill_and_submit", "handle_event",
    "parse_intent", "submission_token",
]
