"""Regenerate the shipped eye transition table from its rules.

Run from the repository root: ``python3 tools/make_eye_table.py``.
"""

from pathlib import Path

COLORS = ["BLUE", "GREEN", "RED"]
ICONS = ["NONE", "CLOCK", "MAP", "CAMERA"]
EVENTS = ["WAKE_DETECTED", "STOP_LISTENING", "ERROR", "WAIT_BEGIN", "WAIT_END", "SHOW_MAP",
          "HIDE_MAP", "PHOTO_BEGIN", "PHOTO_END", "ERROR_CLEARED"]
ICON_EVENTS = {"WAIT_BEGIN": ("CLOCK", True), "WAIT_END": ("CLOCK", False),
               "SHOW_MAP": ("MAP", True), "HIDE_MAP": ("MAP", False),
               "PHOTO_BEGIN": ("CAMERA", True), "PHOTO_END": ("CAMERA", False)}


def rule(color, icon, event):
    if event == "WAKE_DETECTED":
        return ("GREEN", icon) if color == "BLUE" else None
    if event == "STOP_LISTENING":
        return ("BLUE", icon) if color == "GREEN" else None
    if event == "ERROR":
        return ("RED", icon)
    if event == "ERROR_CLEARED":
        return ("BLUE", icon) if color == "RED" else None
    target, begin = ICON_EVENTS[event]
    if begin:
        return (color, target) if icon != target else None
    return (color, "NONE") if icon == target else None


def main():
    lines = ["# color\ticon\tevent\tnext color\tnext icon   (REJECT marks an illegal pair)"]
    for c in COLORS:
        for i in ICONS:
            for e in EVENTS:
                nxt = rule(c, i, e)
                lines.append("\t".join([c, i, e] + (list(nxt) if nxt else ["REJECT", "REJECT"])))
    out = Path(__file__).resolve().parents[1] / "src" / "duobot" / "data" / "eye_transitions.tsv"
    out.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
