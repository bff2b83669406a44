import math
import re
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from depthnav import metrics
from depthnav.controller import TerminalReason
from depthnav.errors import CardinalityMismatchError, EmptyPoolError
from depthnav.metrics import MetricsSummary, SplitMetrics, aggregate, nav_error, report, success

from conftest import run_corpus

coords = st.floats(-1e4, 1e4)


def test_nav_error_examples():
    assert nav_error((0, 0), (3, 4)) == 5.0
    assert nav_error((2.5, -1.0), (2.5, -1.0)) == 0.0
    assert nav_error((0, 0), (0, 2.5)) == 2.5


@given(coords, coords, coords, coords, coords, coords)
def test_nav_error_is_a_metric(ax, ay, bx, by, cx, cy):
    ab, ba = nav_error((ax, ay), (bx, by)), nav_error((bx, by), (ax, ay))
    assert ab == ba and ab >= 0.0
    ac = nav_error((ax, ay), (cx, cy))
    bc = nav_error((bx, by), (cx, cy))
    assert ac <= ab + bc + 1e-9 * (1 + ab + bc)


def _tr(reason, ne):
    return SimpleNamespace(terminal_reason=reason, nav_error=ne)


@pytest.mark.parametrize(
    "reason, ne, expected",
    [
        (TerminalReason.PREDICTED_STOP, 1.71, True),
        (TerminalReason.PREDICTED_STOP, 2.0, True),
        (TerminalReason.PREDICTED_STOP, 3.63, False),
        (TerminalReason.DEVIATED, 0.5, False),
        (TerminalReason.MAX_STEPS, 0.0, False),
        (TerminalReason.PARSE_FAILURE, 0.0, False),
    ],
)
def test_success_truth_table(reason, ne, expected):
    assert success(_tr(reason, ne)) is expected


def test_trimmed_mean_examples():
    assert metrics.round_half_up(metrics.trimmed_mean([1000] * 100 + [10**6] * 2)) == 1000
    assert metrics.trimmed_mean([10] * 5) == 10
    assert metrics.trimmed_mean([1, 2, 3]) == 2
    with pytest.raises(EmptyPoolError):
        metrics.trimmed_mean([])


def test_small_pool_is_not_trimmed():
    pool = [1] * 18 + [10**6]
    assert metrics.trimmed_mean(pool) == pytest.approx((18 + 10**6) / 19)


def test_round_half_up():
    assert [metrics.round_half_up(x) for x in (0.5, 1.5, 2.5, 2.49, 568.5)] == [1, 2, 3, 2, 569]


pools = st.lists(st.integers(0, 5000), min_size=20, max_size=200)


@st.composite
def steady_pools(draw):
    # per-step prompt tokens under one template vary by a handful of tokens
    n = draw(st.integers(20, 200))
    base = draw(st.integers(0, 5000))
    return draw(st.lists(st.integers(base, base + 8), min_size=n, max_size=n))


@given(steady_pools())
def test_duplicating_median_moves_tu_less_than_one(pool):
    median = sorted(pool)[len(pool) // 2]
    shift = metrics.trimmed_mean(pool + [median]) - metrics.trimmed_mean(pool)
    assert abs(shift) < 1.0


@pytest.mark.parametrize(
    "pool, expected",
    [
        # spread far above the pool size: one sample moves the untrimmed tail weight
        ([0] * 18 + [295, 295], (30, 28)),
        # a tied block just under P5 drops out together once the pool grows
        ([1321] * 37 + [1261] * 2 + [1321] * 8 + [1261] * 2 + [1321] * 6 + [1267] + [1262] * 5, (1311, 1315)),
    ],
)
def test_duplicating_median_can_move_other_pools(pool, expected):
    median = sorted(pool)[len(pool) // 2]
    before = metrics.round_half_up(metrics.trimmed_mean(pool))
    after = metrics.round_half_up(metrics.trimmed_mean(pool + [median]))
    assert (before, after) == expected


@given(pools, st.randoms())
def test_trimmed_mean_is_permutation_invariant(pool, rnd):
    shuffled = list(pool)
    rnd.shuffle(shuffled)
    assert metrics.trimmed_mean(shuffled) == pytest.approx(metrics.trimmed_mean(pool), rel=1e-12)


@given(pools)
def test_trimmed_mean_stays_in_trim_band(pool):
    lo, hi = np.percentile(pool, [5, 95])
    assert lo - 1e-9 <= metrics.trimmed_mean(pool) <= hi + 1e-9


# corpus ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def corpus():
    return run_corpus()


def test_corpus_hand_values(corpus):
    episodes, transcripts = corpus
    s = aggregate(episodes, transcripts)
    overall, low, high = s.split("overall"), s.split("low"), s.split("high")
    assert (overall.count, low.count, high.count) == (6, 3, 3)
    assert overall.sr == pytest.approx(0.5, abs=1e-9)
    assert overall.ne == pytest.approx((9.2 + math.sqrt(2)) / 6, abs=1e-9)
    assert low.sr == pytest.approx(2 / 3, abs=1e-9)
    assert low.ne == pytest.approx(3.7 / 3, abs=1e-9)
    assert high.sr == pytest.approx(1 / 3, abs=1e-9)
    assert high.ne == pytest.approx((5.5 + math.sqrt(2)) / 3, abs=1e-9)
    assert (overall.tu_p, overall.tu_c) == (569, 7)
    assert s.split("farm").sr == 0.5 and s.split("farm").ne == pytest.approx(3.0)
    assert s.split("village").sr == 1.0 and s.split("village").ne == pytest.approx(0.85)
    assert s.split("forest").sr == 0.0
    assert s.split("greenhouse").count == 0 and s.split("greenhouse").sr is None


def test_overall_ne_is_weighted_split_ne(corpus):
    s = aggregate(*corpus)
    o, lo, hi = s.split("overall"), s.split("low"), s.split("high")
    assert lo.count + hi.count == o.count
    assert o.ne == pytest.approx((lo.ne * lo.count + hi.ne * hi.count) / o.count, abs=1e-12)
    scenes = [x for x in s.splits[3:] if x.count]
    assert sum(x.count for x in scenes) == o.count


def test_labels_from_transcripts_match_episode_labels(corpus):
    episodes, transcripts = corpus
    assert aggregate(None, transcripts) == aggregate(episodes, transcripts)


def test_cardinality_mismatch(corpus):
    episodes, transcripts = corpus
    with pytest.raises(CardinalityMismatchError):
        aggregate(episodes, transcripts[:-1])
    with pytest.raises(CardinalityMismatchError):
        aggregate(episodes[:-1], transcripts)


def test_summary_json_roundtrip(corpus):
    s = aggregate(*corpus)
    assert MetricsSummary.from_dict(__import__("json").loads(s.dumps())) == s


# report --------------------------------------------------------------------------

def _summary(sr=0.32, ne=4.08, tu_p=2205, tu_c=198):
    overall = SplitMetrics("overall", 10, sr, ne, tu_p, tu_c)
    rest = [SplitMetrics(n, 0, None, None, None, None) for n in
            ("low", "high", "farm", "greenhouse", "forest", "mountain", "garden", "village")]
    return MetricsSummary((overall, *rest))


def test_text_report_layout():
    text = report(_summary())
    assert re.search(r"0\.32\s+4\.08", text)
    assert "2,205" in text
    names = [line.split()[0] for line in text.splitlines()[2:]]
    assert names == ["overall", "low", "high", "farm", "greenhouse", "forest", "mountain", "garden", "village"]
    assert text.splitlines()[0].split() == ["split", "episodes", "SR", "NE", "TU_p", "TU_c"]


def test_csv_report():
    rows = report(_summary(), "csv").splitlines()
    assert rows[0] == "split,episodes,SR,NE,TU_p,TU_c"
    assert len(rows) == 10
    assert rows[1] == "overall,10,0.32,4.08,2205,198"
    assert rows[2] == "low,0,-,-,-,-"


def test_unknown_format():
    with pytest.raises(ValueError):
        report(_summary(), "html")


def test_svg_chart_has_one_bar_per_scene(corpus):
    svg = metrics.sr_chart_svg(aggregate(*corpus))
    assert svg.startswith("<svg") and svg.count("<rect") == 6
