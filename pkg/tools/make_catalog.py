"""Regenerate the shipped dialog data files (actions, forms, grammar, vocabulary).

The contents are placeholders with realistic shapes; only the counts matter.
Run from the repository root: ``python3 tools/make_catalog.py``.
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parents[1] / "src" / "duobot" / "data"

VERBS = ["book", "check", "cancel", "renew", "pay", "show", "print", "update",
         "request", "track", "change", "confirm", "open"]
OBJECTS = {"appointment": ["date"], "loan": ["reference"], "balance": [], "installment": ["amount"],
           "contract": ["reference"], "certificate": [], "receipt": ["reference"], "profile": [],
           "complaint": ["reference"], "card": []}
KINDS = ["application", "request", "complaint", "renewal", "transfer", "inquiry", "registration"]
SUBJECTS = ["housing", "land", "villa", "apartment", "maintenance", "marriage", "grant", "pension",
            "water", "electricity", "sewage", "road", "school", "medical", "disability", "elderly",
            "widow", "orphan", "student", "employee", "retirement", "emergency", "furniture", "solar",
            "garden", "mosque", "parking", "fence", "roof", "kitchen", "bathroom", "extension",
            "demolition", "survey", "permit", "deed", "mortgage"]
EXTRA_FIELDS = ["district", "amount", "date", "reason", "number"]
GESTURES = {"raise_hand": "raise hand", "shake": "shake hand", "wave": "wave", "selfie_pose": "selfie",
            "nod": "nod", "bow": "bow", "point": "point", "clap": "clap", "shrug": "shrug",
            "welcome": "welcome"}
VALUES = ["ahmed", "fatima", "mohammed", "aisha", "omar", "mariam", "khalid", "noura", "saeed",
          "hessa", "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
          "ten", "hundred", "thousand", "deira", "karama", "jumeirah", "barsha", "mirdif", "hatta",
          "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday", "today",
          "tomorrow", "urgent", "damage", "family", "new", "old"]
GENERAL = ["please", "i", "want", "to", "the", "my", "a", "for", "hello", "thanks", "yes", "no",
           "can", "you", "me", "is", "what", "where", "how", "and"]
CONTROL = {"stop": "stop", "show map": "map", "guess my age": "game:age", "age game": "game:age"}


def main() -> None:
    combos = list(itertools.product(VERBS, OBJECTS))[:129]
    actions = [(i + 1, f"{v}_{o}", OBJECTS[o]) for i, (v, o) in enumerate(combos)]
    forms = []
    for i, (subj, kind) in enumerate(itertools.product(SUBJECTS, KINDS)):
        n_extra = 1 + i % 3
        extra = [EXTRA_FIELDS[(i + k) % len(EXTRA_FIELDS)] for k in range(n_extra)]
        fields = [{"name": f, "required": True} for f in ["name", "phone"] + extra]
        if len(fields) == 5:
            fields[-1]["required"] = False
        forms.append({"id": i + 1, "name": f"{subj}_{kind}", "fields": fields})
    assert len(forms) == 259 and len(actions) == 129

    lines = ["# id\tname\trequired parameters (comma separated)"]
    lines += [f"{i}\t{n}\t{','.join(p)}" for i, n, p in actions]
    (DATA / "actions.tsv").write_text("\n".join(lines) + "\n")
    body = ",\n".join("  " + json.dumps(f) for f in forms)
    (DATA / "forms.json").write_text(
        '{"format": "duobot-forms", "version": 1, "forms": [\n' + body + "\n]}\n")

    g = ["# token pattern\tintent  (action:<id> | form:<id> | gesture:<name> | game:<name> | map | stop)"]
    g += [f"{n.replace('_', ' ')}\taction:{i}" for i, n, _ in actions]
    g += [f"{f['name'].replace('_', ' ')} form\tform:{f['id']}" for f in forms]
    g += [f"{phrase}\tgesture:{name}" for name, phrase in GESTURES.items()]
    g += [f"{phrase}\t{intent}" for phrase, intent in CONTROL.items()]
    (DATA / "grammar.txt").write_text("\n".join(g) + "\n")

    vocab: dict[str, str] = {}

    def add(tokens, tag):
        for t in tokens:
            vocab.setdefault(t, tag)
    add(VERBS, "ACTION")
    add(OBJECTS, "OBJECT")
    add(KINDS + ["form"], "FORM")
    add(SUBJECTS, "FORM")
    add(["name", "phone"] + EXTRA_FIELDS, "FIELD")
    add([t for p in GESTURES.values() for t in p.split()], "GESTURE")
    add(["stop", "map", "guess", "age", "game"], "CONTROL")
    add(VALUES, "VALUE")
    add(GENERAL, "GENERAL")
    rng = np.random.default_rng(500)
    cons, vow = "bdfhjklmnqrstwz", "aiu"
    while len(vocab) < 500:
        n = int(rng.integers(2, 4))
        w = "".join(cons[rng.integers(len(cons))] + vow[rng.integers(len(vow))] for _ in range(n))
        vocab.setdefault(w, "GENERAL")
    lines = ["# token\tintent tag"] + [f"{t}\t{tag}" for t, tag in vocab.items()]
    (DATA / "vocabulary.tsv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
