import numpy as np
import pytest
import scipy.stats as ss
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gramtraj.errors import ValidationError
from gramtraj.stats import (kruskal_wallis, one_way_anova, pairwise_t, pearson, rankdata,
                            spearman, two_sample_t)

vals = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=25)


def _spread(x):
    return len(set(x)) > 1


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30))
def test_pearson_spearman_match_scipy(xy):
    x, y = map(list, zip(*xy))
    assume(np.std(x) > 1e-6 and np.std(y) > 1e-6)
    assert pearson(x, y) == pytest.approx(ss.pearsonr(x, y)[0], abs=1e-9)
    if _spread(x) and _spread(y):
        assert spearman(x, y) == pytest.approx(ss.spearmanr(x, y)[0], abs=1e-9)


def test_correlation_edge_cases():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [1, 8, 27, 64]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2, 3])


def test_rankdata_average_ties():
    assert list(rankdata([10, 20, 20, 5])) == [2.0, 3.5, 3.5, 1.0]
    assert list(rankdata([3, 3, 3])) == [2.0, 2.0, 2.0]


@settings(max_examples=100)
@given(st.lists(vals, min_size=2, max_size=5))
def test_anova_matches_scipy(groups):
    within = sum(np.var(g) * len(g) for g in groups)
    assume(within > 1e-6)
    r = one_way_anova(groups)
    F, p = ss.f_oneway(*groups)
    n = sum(map(len, groups))
    assert r.df == (len(groups) - 1, n - len(groups))
    assert r.statistic == pytest.approx(F, rel=1e-8, abs=1e-12)
    if r.statistic == 0:
        assert r.p_value == 1.0  # scipy reports nan for equal group means
    elif np.isnan(p):
        # equal means up to roundoff: scipy's F is a tiny negative number
        assert r.statistic < 1e-20 and r.p_value == pytest.approx(1.0, abs=1e-12)
    else:
        assert r.p_value == pytest.approx(p, rel=1e-7, abs=1e-14)


def test_anova_needs_two_groups():
    with pytest.raises(ValidationError):
        one_way_anova([[1, 2, 3]])


@settings(max_examples=100)
@given(vals, vals, st.booleans())
def test_t_test_matches_scipy(a, b, pooled):
    assume(np.var(a) > 1e-6 and np.var(b) > 1e-6)
    r = two_sample_t(a, b, pooled=pooled)
    t, p = ss.ttest_ind(a, b, equal_var=pooled)
    assert r.statistic == pytest.approx(t, rel=1e-8, abs=1e-10)
    assert r.p_value == pytest.approx(p, rel=1e-7, abs=1e-14)
    assert r.test == ("pooled_t" if pooled else "welch_t")


@settings(max_examples=100)
@given(st.lists(st.lists(st.integers(0, 8), min_size=2, max_size=15), min_size=2, max_size=4))
def test_kruskal_matches_scipy_with_ties(groups):
    flat = [v for g in groups for v in g]
    assume(len(set(flat)) > 1 and len(flat) >= 5)
    r = kruskal_wallis(groups)
    H, p = ss.kruskal(*groups)
    assert r.statistic == pytest.approx(H, rel=1e-9)
    assert r.p_value == pytest.approx(p, rel=1e-7, abs=1e-14)


def test_kruskal_all_tied_gives_zero():
    r = kruskal_wallis([[1, 1], [1, 1, 1]])
    assert (r.statistic, r.p_value, r.df) == (0.0, 1.0, (1,))


def test_kruskal_hand_computed():
    # ranks: a = 1, 2, 4 ; b = 3, 5, 6 -> H = 12/42 * (49/3 + 196/3) - 21
    r = kruskal_wallis([[1.0, 2.0, 4.0], [3.0, 5.0, 6.0]])
    assert r.statistic == pytest.approx(12 / 42 * (49 / 3 + 196 / 3) - 21, abs=1e-9)
    with pytest.raises(ValidationError):
        kruskal_wallis([[1.0, 2.0], [3.0, 4.0]])


def test_t_identical_samples():
    r = two_sample_t([1.0, 2.0, 4.0], [1.0, 2.0, 4.0])
    assert (r.statistic, r.p_value) == (0.0, 1.0)
    with pytest.raises(ValidationError):
        two_sample_t([2.0, 2.0], [2.0, 2.0])


def test_t_equal_variance_variants_agree():
    a = [1.0, 3.0, 4.0, 8.0]
    b = [v + 2.5 for v in a]
    w, p = two_sample_t(a, b), two_sample_t(a, b, pooled=True)
    assert w.statistic == pytest.approx(p.statistic, abs=1e-9)
    assert w.statistic == pytest.approx(-2.5 / np.sqrt(2 * np.var(a, ddof=1) / 4), abs=1e-9)


def test_pairwise_t_keys_and_order():
    groups = {"CES": [1, 2, 3, 4], "CLS": [5, 6, 9], "EES": [0, 1, 1, 3]}
    out = pairwise_t(groups)
    assert list(out) == [("CES", "CLS"), ("CES", "EES"), ("CLS", "EES")]
    assert out[("CES", "CLS")].statistic < 0


def test_anova_textbook_sums_of_squares():
    groups = [[6.0, 8.0, 4.0, 5.0, 3.0], [8.0, 12.0, 9.0, 11.0, 6.0], [13.0, 9.0, 11.0, 8.0, 7.0]]
    flat = [x for g in groups for x in g]
    grand = sum(flat) / len(flat)
    ssb = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups)
    ssw = sum((x - sum(g) / len(g)) ** 2 for g in groups for x in g)
    r = one_way_anova(groups)
    assert r.statistic == pytest.approx((ssb / 2) / (ssw / 12), abs=1e-9)
    assert r.df == (2, 12)


def test_welch_four_vs_four_by_hand():
    a, b = [1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 6.0, 8.0]
    va, vb = np.var(a, ddof=1), np.var(b, ddof=1)
    t = (2.5 - 5.0) / np.sqrt(va / 4 + vb / 4)
    df = (va / 4 + vb / 4) ** 2 / ((va / 4) ** 2 / 3 + (vb / 4) ** 2 / 3)
    r = two_sample_t(a, b)
    assert r.statistic == pytest.approx(t, abs=1e-9)
    assert r.df[0] == pytest.approx(df, abs=1e-9)


def test_kruskal_with_ties_by_hand():
    a, b, c = [1.0, 2.0, 2.0], [2.0, 3.0, 4.0], [4.0, 5.0, 6.0]
    # ranks: 1; 3,3,3 (three 2s); 5; 6.5,6.5 (two 4s); 8; 9
    ra, rb, rc = 1 + 3 + 3, 3 + 5 + 6.5, 6.5 + 8 + 9
    N = 9
    H = 12 / (N * (N + 1)) * (ra ** 2 + rb ** 2 + rc ** 2) / 3 - 3 * (N + 1)
    C = 1 - ((3 ** 3 - 3) + (2 ** 3 - 2)) / (N ** 3 - N)
    assert kruskal_wallis([a, b, c]).statistic == pytest.approx(H / C, abs=1e-9)
