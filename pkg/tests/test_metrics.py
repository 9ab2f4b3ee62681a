import json
import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reflguide import metrics as M
from reflguide.errors import InvalidInputError


def grid_si_mse(p, g, lo=0.0, hi=4.0, step=1e-5):
    # brute force over alpha, using expanded sums so the grid stays cheap
    a = np.arange(lo, hi + step / 2, step)
    n = p.size
    pp, pg, gg = (p * p).sum(), (p * g).sum(), (g * g).sum()
    return float(((a * a * pp - 2 * a * pg + gg) / n).min())


@pytest.mark.parametrize("seed", range(50))
def test_si_mse_matches_grid_search(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.05, 1, (12, 10))
    g = rng.uniform(0.3, 2.5) * p + rng.normal(0, 0.05, p.shape)
    assert abs(M.si_mse(p, g) - grid_si_mse(p, g)) < 1e-8


def test_si_mse_properties():
    rng = np.random.default_rng(0)
    g = rng.uniform(0.1, 1, (6, 6, 3))
    assert M.si_mse(3.0 * g, g) == pytest.approx(0, abs=1e-25)
    assert M.si_mse(np.zeros_like(g), g) == pytest.approx((g.mean(-1) ** 2).mean())
    p = rng.uniform(0.1, 1, (6, 6, 3))
    chan = np.mean([M.si_mse(p[..., c], g[..., c]) for c in range(3)])
    assert M.si_mse(p, g, mode="channels") == pytest.approx(chan)
    assert M.si_mse(p, g) == M.si_mse(p.mean(-1), g.mean(-1))
    with pytest.raises(InvalidInputError):
        M.si_mse(p, g[:5])
    with pytest.raises(InvalidInputError):
        M.si_mse(p, g, mode="max")


@given(st.integers(0, 10**6), st.floats(0.01, 100))
def test_si_mse_scale_invariant(seed, k):
    rng = np.random.default_rng(seed)
    p, g = rng.uniform(0.1, 1, (5, 7)), rng.uniform(0.1, 1, (5, 7))
    assert M.si_mse(k * p, g) == pytest.approx(M.si_mse(p, g), rel=1e-9, abs=1e-15)


def loop_si_lmse(p, g, frac=0.1):
    h, w = p.shape
    win = max(int(math.floor(frac * max(h, w) + 0.5)), 2)
    stride = win // 2

    def starts(n):
        size = min(win, n)
        s = []
        y = 0
        while y + size <= n:
            s.append(y)
            y += stride
        if s[-1] + size != n:
            s.append(n - size)
        return s, size

    ys, hy = starts(h)
    xs, hx = starts(w)
    vals = []
    for y in ys:
        for x in xs:
            a, b = p[y:y + hy, x:x + hx], g[y:y + hy, x:x + hx]
            pp = float((a * a).sum())
            alpha = float((a * b).sum()) / pp if pp > 0 else 0.0
            vals.append(float(((alpha * a - b) ** 2).mean()))
    return float(np.mean(vals))


@pytest.mark.parametrize("shape", [(40, 40), (37, 53), (9, 31), (2, 2), (100, 13)])
def test_si_lmse_matches_window_loop(shape):
    rng = np.random.default_rng(shape[0] * shape[1])
    p, g = rng.uniform(0, 1, shape), rng.uniform(0, 1, shape)
    assert M.si_lmse(p, g) == loop_si_lmse(p, g)


def test_si_lmse_edges():
    with pytest.raises(InvalidInputError):
        M.si_lmse(np.ones((1, 5)), np.ones((1, 5)))
    g = np.random.default_rng(1).uniform(0.1, 1, (20, 20))
    assert M.si_lmse(2 * g, g) == pytest.approx(0, abs=1e-25)
    assert M.window_starts(10, 4, 2) == ([0, 2, 4, 6], 4)
    assert M.window_starts(11, 4, 2) == ([0, 2, 4, 6, 7], 4)
    assert M.window_starts(3, 5, 2) == ([0], 3)


# ----------------------------------------------------------------------- WHDR

def fixture_image():
    L = np.full((4, 4), 0.3)
    L[0, 0], L[0, 3], L[3, 0], L[3, 3] = 0.5, 0.525, 0.2, 0.8
    return L[..., None] * np.array([0.5, 1.0, 1.5])


FIXTURE = [
    {"p1": [0.1, 0.1], "p2": [0.1, 0.9], "darker": "E", "weight": 1.0},   # 0.952 -> E, right
    {"p1": [0.1, 0.1], "p2": [0.9, 0.1], "darker": "2", "weight": 2.0},   # 2.5 -> 2, right
    {"p1": [0.9, 0.1], "p2": [0.9, 0.9], "darker": "2", "weight": 0.5},   # 0.25 -> 1, wrong
    {"p1": [0.1, 0.9], "p2": [0.9, 0.9], "darker": "1", "weight": 1.0},   # 0.656 -> 1, right
    {"p1": [1.0, 1.0], "p2": [0.1, 0.1], "darker": "E", "weight": 1.5},   # 1.6 -> 2, wrong
    {"p1": [0.1, 0.1], "p2": [0.1, 0.9], "darker": "1", "weight": 1.0},   # 0.952 -> E, wrong
]


def test_whdr_hand_computed():
    J = M.judgments_from_records(FIXTURE)
    R = fixture_image()
    assert M.whdr(R, J) == pytest.approx(3.0 / 7.0, abs=1e-15)
    # at delta 0.7 judgment 4 becomes E (wrong) and judgment 5 becomes E (right)
    assert M.whdr(R, J, delta=0.7) == pytest.approx(2.5 / 7.0, abs=1e-15)


@pytest.mark.parametrize("k", [0.1, 10.0])
def test_whdr_scale_invariant(k):
    J = M.judgments_from_records(FIXTURE)
    R = fixture_image()
    assert M.whdr(k * R, J) == M.whdr(R, J)


def test_whdr_zero_luminance_counts_as_error(caplog):
    R = fixture_image()
    R[0, 0] = 0
    J = M.judgments_from_records(FIXTURE[:2])
    with caplog.at_level(logging.WARNING, logger="reflguide.metrics"):
        assert M.whdr(R, J) == 1.0
    assert "zero-luminance" in caplog.text


def test_whdr_errors(tmp_path):
    with pytest.raises(InvalidInputError):
        M.whdr(fixture_image(), [])
    with pytest.raises(InvalidInputError):
        M.whdr(fixture_image(), M.judgments_from_records([dict(FIXTURE[0], weight=0)]))
    for bad in ({"p1": [1.2, 0], "p2": [0, 0], "darker": "1"},
                {"p1": [0, 0], "p2": [0, 0], "darker": "3"},
                {"p1": [0, 0], "p2": [0, 0], "darker": "1", "weight": -1},
                {"p1": [0, 0], "darker": "1"}):
        with pytest.raises(InvalidInputError):
            M.judgments_from_records([bad])
    path = tmp_path / "j.json"
    path.write_text(json.dumps(FIXTURE))
    assert len(M.load_judgments(path)) == 6
    path.write_text("{not json")
    with pytest.raises(InvalidInputError):
        M.load_judgments(path)
