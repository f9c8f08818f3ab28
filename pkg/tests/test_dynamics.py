import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcaffect.dialogue import Role
from mcaffect.dynamics import TYPOLOGY_TABLE, LagValue, _pick_optimal, Typology, analyze, classify, correlogram_csv, nccf, slope
from mcaffect.errors import AnalysisInfeasible
from mcaffect.estimator import DyadTrajectories, Trajectory
from mcaffect.fixtures import sweep_means

# standardized means of the personification dialogue at tau = 0.7
MEANS = sweep_means(0.7)
TEACHER = [MEANS[i] for i in range(0, 15, 2)]
STUDENT = [MEANS[i] for i in range(1, 15, 2)]


def dyad(teacher=TEACHER, student=STUDENT):
    return DyadTrajectories(Trajectory.from_values(Role.TEACHER, teacher), Trajectory.from_values(Role.STUDENT, student))


def brute_nccf(t, s, lag, min_overlap=3, convention="reverse"):
    t, s = np.asarray(t, float), np.asarray(s, float)
    tb, sb = t.mean(), s.mean()
    num = den_t = den_s = 0.0
    n = 0
    for i in range(len(t)):
        j = i - lag if convention == "reverse" else i + lag
        if 0 <= j < len(s):
            num += (t[i] - tb) * (s[j] - sb)
            den_t += (t[i] - tb) ** 2
            den_s += (s[j] - sb) ** 2
            n += 1
    if n < min_overlap or den_t * den_s == 0:
        return None
    return num / math.sqrt(den_t * den_s)


def test_fixture_means():
    assert TEACHER == [0, -0.2, -0.42, -0.15, 0.04, 0.52, 0.88, 1.0]
    assert STUDENT == [-0.4, -0.63, -0.35, -0.17, 0.25, 0.68, 0.89]


def test_personification_default():
    c = nccf(TEACHER, STUDENT)
    expected = {-3: -0.7924, -2: -0.3322, -1: 0.4077, 0: 0.8735, 1: 0.9955, 2: 0.7812, 3: 0.1632}
    for lag, r in expected.items():
        assert c.r(lag) == pytest.approx(r, abs=5e-4)
    assert c.optimal_lag == 1
    assert c.optimal_r == pytest.approx(0.99551, abs=1e-5)


def test_personification_slopes_and_label():
    result = analyze(dyad())
    assert result.slope_teacher.beta == pytest.approx(1541 / 8400, abs=1e-12)
    assert result.slope_student.beta == pytest.approx(0.2532142857142856, abs=1e-12)
    assert result.typology is Typology.EFFECTIVE_SCAFFOLDING


def test_published_figure_replay():
    # overlap centering plus truncation to a common length reproduces the figure
    result = analyze(dyad(), centering="overlap", common_length=True)
    assert result.correlogram.optimal_lag == 1
    assert result.correlogram.optimal_r == pytest.approx(0.999, abs=1e-3)
    assert round(result.slope_teacher.beta, 4) == 0.1621
    assert round(result.slope_student.beta, 4) == 0.2532


def test_self_correlation():
    x = [0.1, -0.3, 0.5, 0.2, -0.1, 0.4]
    c = nccf(x, x)
    assert c.optimal_lag == 0 and c.optimal_r == pytest.approx(1.0, abs=1e-12)


def test_shift_forward_convention():
    teacher = [0.0, 0.4, -0.2, 0.6, 0.1, -0.5, 0.3, 0.8]
    student = [0.9] + teacher[:-1]  # student_t = teacher_{t-1}
    c = nccf(teacher, student, convention="forward")
    assert c.optimal_lag == 1
    assert c.optimal_r > 0.9
    assert nccf(teacher, student).optimal_lag == -1


def test_shift_reverse_convention():
    teacher = [0.0, 0.4, -0.2, 0.6, 0.1, -0.5, 0.3, 0.8]
    student = teacher[1:] + [0.2]  # student_t = teacher_{t+1}
    assert nccf(teacher, student).optimal_lag == 1


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=4, max_size=12),
    st.lists(st.floats(-1, 1), min_size=4, max_size=12),
    st.sampled_from(["reverse", "forward"]),
)
def test_matches_brute_force(t, s, convention):
    try:
        c = nccf(t, s, convention=convention)
    except AnalysisInfeasible:
        assert all(brute_nccf(t, s, lag, convention=convention) is None for lag in range(-3, 4))
        return
    for v in c.values:
        ref = brute_nccf(t, s, v.lag, convention=convention)
        if ref is None:
            assert v.r is None
            continue
        assert v.r is not None and v.r == pytest.approx(ref, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=10), st.lists(st.floats(-1, 1), min_size=6, max_size=10))
def test_role_swap_antisymmetry(t, s):
    try:
        a, b = nccf(t, s), nccf(s, t)
    except AnalysisInfeasible:
        return
    for lag in range(-3, 4):
        ra, rb = a.r(lag), b.r(-lag)
        assert (ra is None) == (rb is None)
        if ra is not None:
            assert ra == pytest.approx(rb, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=10), st.floats(-5, 5), st.floats(0.1, 10))
def test_affine_invariance(t, shift, scale):
    s = list(reversed(t))
    try:
        a = nccf(t, s)
    except AnalysisInfeasible:
        return
    b = nccf([scale * x + shift for x in t], s)
    for va, vb in zip(a.values, b.values):
        if va.r is not None and vb.r is not None:
            assert va.r == pytest.approx(vb.r, abs=1e-6)


def test_constant_series_infeasible():
    with pytest.raises(AnalysisInfeasible):
        nccf([0.2] * 8, STUDENT)


def test_overlap_threshold():
    c = nccf(TEACHER[:4], STUDENT[:4], lag_min=-3, lag_max=3, min_overlap=3)
    assert c.r(3) is None and c.r(-2) is None
    assert c.values[3].overlap == 4


def test_min_overlap_two_warns(caplog):
    nccf(TEACHER, STUDENT, min_overlap=2)
    assert "min_overlap=2" in caplog.text
    with pytest.raises(ValueError):
        nccf(TEACHER, STUDENT, min_overlap=1)


def test_tie_breaks_to_smaller_lag():
    x = [1.0, -1.0] * 5  # period two: |r| ties at lags 0, +/-2
    c = nccf(x, x, lag_min=-2, lag_max=2)
    assert c.optimal_lag == 0
    c = nccf(x, x, lag_min=-3, lag_max=3)
    assert c.optimal_lag == 0
    y = [0.1, 0.5, -0.3, 0.2, 0.9, -0.4, 0.0, 0.6]
    d = nccf(y, y, lag_min=-3, lag_max=3)
    assert d.optimal_lag == 0


def test_tie_prefers_positive_lag():
    values = [LagValue(-2, 0.8, 5), LagValue(-1, -0.9, 6), LagValue(0, 0.3, 7), LagValue(1, 0.9, 6)]
    assert _pick_optimal(values).lag == 1
    assert _pick_optimal(values[:3]).lag == -1
    assert _pick_optimal([LagValue(-1, 0.5, 6), LagValue(0, None, 7), LagValue(1, -0.5 + 1e-13, 6)]).lag == 1


def test_correlogram_csv():
    lines = correlogram_csv(nccf(TEACHER, STUDENT)).splitlines()
    assert lines[0] == "lag,r,overlap,is_optimal"
    assert len(lines) == 8
    assert lines[5].startswith("1,") and lines[5].endswith(",1")


@pytest.mark.parametrize("values, beta", [
    ([0, 1, 2, 3], 1.0),
    ([3, 2, 1, 0], -1.0),
    ([0.5] * 5, 0.0),
    ([0, 0.2, 0.1, 0.3], 0.08),
])
def test_slope_closed_form(values, beta):
    assert slope(values).beta == pytest.approx(beta, abs=1e-12)


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=20))
def test_slope_matches_polyfit(values):
    assert slope(values).beta == pytest.approx(np.polyfit(np.arange(len(values)), values, 1)[0], abs=1e-7)


@pytest.mark.parametrize("lag, r, bt, bs, label", [
    (1, 0.9, 0.1, 0.2, Typology.EFFECTIVE_SCAFFOLDING),
    (2, 0.5, -0.1, -0.1, Typology.NEGATIVE_CONTAGION),
    (1, -0.6, 0.05, -0.05, Typology.UNRECIPROCATED_SUPPORT),
    (-1, 0.7, 0.1, 0.1, Typology.STUDENT_DRIVEN_SUCCESS),
    (-2, 0.7, -0.1, -0.1, Typology.FEEDBACK_BURNOUT),
    (-1, -0.4, 0.1, -0.1, Typology.ADAPTIVE_BALANCING),
    (0, 0.8, 0.1, 0.1, Typology.AFFECTIVE_SYNCHRONY),
    (0, 0.8, -0.1, -0.1, Typology.SHARED_FATIGUE),
    (0, -0.8, 0.1, -0.1, Typology.DYNAMIC_COMPENSATION),
    (0, -0.8, -0.1, 0.1, Typology.DYNAMIC_COMPENSATION),
    (2, -0.5, -0.1, 0.1, Typology.UNCLASSIFIED),
    (1, 0.9, 0.005, 0.2, Typology.UNCLASSIFIED),
    (1, 0.0, 0.1, 0.2, Typology.UNCLASSIFIED),
])
def test_classify(lag, r, bt, bs, label):
    assert classify(lag, r, bt, bs) is label


def test_classify_band_is_configurable():
    assert classify(1, 0.9, 0.005, 0.2, slope_band=0.001) is Typology.EFFECTIVE_SCAFFOLDING


def test_typology_is_total():
    signs = list(itertools.product((-1, 0, 1), (-1, 1), (-1, 0, 1), (-1, 0, 1)))
    assert len(signs) == 54
    labels = {classify(*key) for key in signs}
    named = [key for key in signs if classify(*key) is not Typology.UNCLASSIFIED]
    assert len(named) == 10 == len(TYPOLOGY_TABLE)
    assert len(labels - {Typology.UNCLASSIFIED}) == 9
    assert all(lbl.interpretation for lbl in Typology)
