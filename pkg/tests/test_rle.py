import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from layerworld.rle import Pattern, RLEError, emit_rle, parse_rle


def test_glider_decode():
    pat = parse_rle("x = 3, y = 3, rule = B3/S23\nbob$2bo$3o!")
    assert set(pat.cells) == {(1, 0), (2, 1), (0, 2), (1, 2), (2, 2)}
    assert (pat.width, pat.height) == (3, 3)


def test_empty_pattern():
    pat = parse_rle("x = 0, y = 0, rule = B3/S23\n!")
    assert not pat.cells


def test_run_exceeds_width():
    with pytest.raises(RLEError) as exc:
        parse_rle("x = 2, y = 1, rule = B3/S23\n3o!")
    assert exc.value.line == 2


def test_comments_and_whitespace():
    pat = parse_rle("#N glider\n#C comment\nx = 3, y = 3, rule = B3/S23\nbo$\n2bo$ 3o!\n")
    assert len(pat.cells) == 5


@pytest.mark.parametrize("text", [
    "x = 3 y = 3\nbo!",
    "x = 3, y = 3, rule = B36/S23\nbo!",
    "x = 3, y = 3, rule = B3/S23\nbxo!",
    "x = 3, y = 3, rule = B3/S23\nbo$",
    "x = 3, y = 1, rule = B3/S23\no$o!",
    "x = 3, y = 3, rule = B3/S23\n99999999999o!",
])
def test_parse_errors(text):
    with pytest.raises(RLEError):
        parse_rle(text)


def test_error_position():
    with pytest.raises(RLEError) as exc:
        parse_rle("x = 3, y = 3, rule = B3/S23\nbo$\n2bz!")
    assert (exc.value.line, exc.value.column) == (3, 3)


def test_emit_line_length():
    grid = np.tile(np.array([[1, 0]], dtype=np.uint8), (30, 60))
    text = emit_rle(Pattern.from_grid(grid))
    assert all(len(line) <= 70 for line in text.splitlines())
    assert np.array_equal(parse_rle(text).to_grid(), grid)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 25), st.integers(1, 25), st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_round_trip(w, h, seed, density):
    grid = (np.random.default_rng(seed).random((h, w)) < density).astype(np.uint8)
    once = parse_rle(emit_rle(Pattern.from_grid(grid)))
    assert np.array_equal(once.to_grid(), grid)
    assert emit_rle(parse_rle(emit_rle(once))) == emit_rle(once)
