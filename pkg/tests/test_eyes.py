"""Eye display machine against an independently written rule set."""

from __future__ import annotations

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from duobot.eyes import (Color, EyeDisplay, EyeEvent, EyeRejection, EyeState, Icon, apply_event,
                         default_table, load_table)

STATES = [EyeState(c, i) for c in Color for i in Icon]

# which icon each icon event shows (True) or hides (False)
ICON_OF = {EyeEvent.WAIT_BEGIN: (Icon.CLOCK, True), EyeEvent.WAIT_END: (Icon.CLOCK, False),
           EyeEvent.SHOW_MAP: (Icon.MAP, True), EyeEvent.HIDE_MAP: (Icon.MAP, False),
           EyeEvent.PHOTO_BEGIN: (Icon.CAMERA, True), EyeEvent.PHOTO_END: (Icon.CAMERA, False)}


def expected(s: EyeState, e: EyeEvent) -> EyeState | None:
    """Color follows the attention signal; icons are independent of color."""
    c, i = s.color, s.icon
    if e is EyeEvent.ERROR:
        return EyeState(Color.RED, i)                       # any color to red
    if e is EyeEvent.ERROR_CLEARED:
        return EyeState(Color.BLUE, i) if c is Color.RED else None
    if e is EyeEvent.WAKE_DETECTED:
        return EyeState(Color.GREEN, i) if c is Color.BLUE else None
    if e is EyeEvent.STOP_LISTENING:
        return EyeState(Color.BLUE, i) if c is Color.GREEN else None
    icon, show = ICON_OF[e]
    if show:
        return None if i is icon else EyeState(c, icon)
    return EyeState(c, Icon.NONE) if i is icon else None


def test_table_shape():
    t = default_table()
    assert len(STATES) == 12 and len(EyeEvent) == 10 and len(t) == 120


@pytest.mark.parametrize("state,event", list(itertools.product(STATES, EyeEvent)),
                         ids=lambda x: str(x).replace(" ", "_") if isinstance(x, EyeState) else x.value)
def test_every_pair_matches_rules(state, event):
    got = apply_event(state, event)
    want = expected(state, event)
    if want is None:
        assert got == EyeRejection(state, event)
    else:
        assert got == want


def test_named_transitions():
    assert apply_event(EyeState(Color.BLUE, Icon.NONE), EyeEvent.WAKE_DETECTED) == EyeState(Color.GREEN)
    assert apply_event(EyeState(Color.GREEN, Icon.NONE), EyeEvent.STOP_LISTENING) == EyeState(Color.BLUE)
    assert apply_event(EyeState(Color.GREEN, Icon.CLOCK), EyeEvent.ERROR) == EyeState(Color.RED, Icon.CLOCK)


def test_red_is_absorbing_except_clear():
    for s in STATES:
        if s.color is not Color.RED:
            continue
        for e in EyeEvent:
            out = apply_event(s, e)
            if isinstance(out, EyeState) and e is not EyeEvent.ERROR_CLEARED:
                assert out.color is Color.RED
        assert apply_event(s, EyeEvent.ERROR_CLEARED).color is Color.BLUE


def test_incomplete_table_rejected(tmp_path):
    lines = (tmp_path / "t.tsv")
    lines.write_text("BLUE\tNONE\tWAKE_DETECTED\tGREEN\tNONE\n")
    with pytest.raises(ValueError):
        load_table(lines)


@given(st.lists(st.sampled_from(list(EyeEvent)), max_size=40))
def test_display_log_replays(events):
    d = EyeDisplay()
    state = EyeState()
    n_rejected = 0
    for t, e in enumerate(events):
        ok = d.handle(t, e)
        want = expected(state, e)
        assert ok == (want is not None)
        n_rejected += want is None
        state = want or state
        assert d.state == state
    assert len(d.rejections) == n_rejected
    # the log holds exactly the changes of state
    if d.log:
        assert d.log[-1].split(" ", 1)[1] == str(d.state)
