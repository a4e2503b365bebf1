import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowroute.errors import InputValidationError
from flowroute.stats import edge_ttest, fdr_bh, fdr_by, group_stats, topk_edges


def test_identical_groups():
    a = np.random.default_rng(0).standard_normal((6, 4))
    t, p, deg = edge_ttest(a, a.copy())
    assert np.all(t == 0) and np.all(p == 1) and not deg.any()


def test_large_shift_is_significant(rng):
    a = rng.standard_normal((30, 3)) + 10.0
    b = rng.standard_normal((30, 3))
    t, p, _ = edge_ttest(a, b)
    assert np.all(p < 1e-6) and np.all(t > 0)


def test_matches_permutation_test(rng):
    a = rng.standard_normal(12) + 0.8
    b = rng.standard_normal(15) * 1.5
    _, p, _ = edge_ttest(a[:, None], b[:, None])
    pooled = np.concatenate([a, b])
    obs = abs(a.mean() - b.mean())
    n_perm = 20000
    hits = 0
    for _ in range(n_perm):
        x = rng.permutation(pooled)
        hits += abs(x[:12].mean() - x[12:].mean()) >= obs
    p_perm = hits / n_perm
    se = np.sqrt(p_perm * (1 - p_perm) / n_perm)
    assert abs(p[0] - p_perm) < 4 * se + 0.02


def test_welch_matches_textbook_formula(rng):
    a, b = rng.standard_normal(9), rng.standard_normal(14) * 3 + 1
    t, p, _ = edge_ttest(a[:, None], b[:, None])
    va, vb = a.var(ddof=1) / 9, b.var(ddof=1) / 14
    t_ref = (a.mean() - b.mean()) / np.sqrt(va + vb)
    assert abs(t[0] - t_ref) <= 1e-12 * abs(t_ref)


def test_degenerate_columns():
    a = np.array([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])
    b = np.array([[1.0, 3.0], [1.0, 3.0]])
    t, p, deg = edge_ttest(a, b)
    assert t[0] == 0 and p[0] == 1 and not deg[0]
    assert t[1] == -np.inf and p[1] == 0 and deg[1]


def test_group_size_precondition():
    with pytest.raises(InputValidationError):
        edge_ttest(np.ones((1, 3)), np.ones((4, 3)))


def test_bh_hand_example():
    r = fdr_bh(np.array([0.01, 0.02, 0.03, 0.04, 0.2]), 0.05)
    assert r.tolist() == [True, True, True, True, False]


def test_bh_extremes():
    assert not fdr_bh(np.ones(7)).any()
    assert fdr_bh(np.zeros(7)).all()
    assert fdr_bh(np.array([])).size == 0
    with pytest.raises(InputValidationError):
        fdr_bh(np.array([0.5, 1.5]))


def test_bh_is_step_up():
    # 0.04 alone would fail its own threshold at rank 2 (0.02) but rank 4 passes (0.04 <= 0.04).
    r = fdr_bh(np.array([0.001, 0.04, 0.039, 0.04]), 0.04)
    assert r.all()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(0.001, 0.5))
def test_bh_matches_definition(ps, q):
    p = np.array(ps)
    m = p.size
    sorted_p = np.sort(p)
    passing = [i for i in range(1, m + 1) if sorted_p[i - 1] <= i * q / m]
    k = max(passing) if passing else 0
    r = fdr_bh(p, q)
    assert r.sum() >= k
    if k:
        assert np.all(r[p < sorted_p[k - 1]])
        assert not np.any(r[p > sorted_p[k - 1]])
    assert fdr_by(p, q).sum() <= r.sum()


def test_topk_full_ranking_and_sort_oracle(rng):
    phi = rng.random(20)
    edges = np.array([(i, j) for i in range(7) for j in range(i + 1, 7)])[:20]
    full = topk_edges(phi, edges, 20)
    assert sorted(full.tolist()) == list(range(20))
    assert full.tolist() == sorted(range(20), key=lambda m: -phi[m])


def test_topk_ties_lexicographic():
    edges = np.array([[0, 2], [0, 1], [1, 2], [0, 3]])
    r = topk_edges(np.array([1.0, 1.0, 2.0, 1.0]), edges, 4)
    assert r.tolist() == [2, 1, 0, 3]


def test_topk_clamps_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        r = topk_edges(np.array([1.0, 2.0]), np.array([[0, 1], [1, 2]]), 5)
    assert r.tolist() == [1, 0]
    assert "only 2 edges" in caplog.text


def test_group_stats_direction_and_log(rng):
    pat = rng.uniform(2.0, 3.0, (10, 3))
    ctl = rng.uniform(1.0, 1.5, (10, 3))
    gs = group_stats(pat, ctl, log_flow=True)
    assert gs.reject.all() and np.all(gs.direction == 1)
