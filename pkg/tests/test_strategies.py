import numpy as np
import pytest

from haarthin.dyadic import DomainError, HaarId, shape_count
from haarthin.strategies import (
    CandidatesExhausted,
    CandidateSource,
    Kind,
    StrategyConfig,
    ThinningEngine,
    greedy_keep_prob,
    haar_keep_prob,
    make_streams,
    monte_carlo_keep_prob,
    run,
)
from haarthin.table import new_state
from oracles import grid_midpoints, haar_values

STRATEGIES = ["monte_carlo", "haar", "greedy", "greedy_paper_sign"]


def table_with(points, h, d=1):
    t = new_state(d)
    for p in points:
        t.insert(np.atleast_1d(p))
    if h:
        t.grow(h)
    return t


# -- keep probabilities -----------------------------------------------------


def test_config_validation():
    assert StrategyConfig("haar").kind is Kind.HAAR
    assert StrategyConfig("greedy_paper_sign", 0.5, 2).name == "greedy_paper_sign"
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            StrategyConfig("haar", bad)
    with pytest.raises(ValueError):
        StrategyConfig("two_choice")
    with pytest.raises(ValueError):
        StrategyConfig("haar", 1.0, 0)


def test_monte_carlo_keep_prob():
    assert monte_carlo_keep_prob() == monte_carlo_keep_prob([0.3]) == 1.0


def test_haar_keep_prob_examples():
    for beta in (0.2, 1.0):
        v = haar_keep_prob(new_state(2), beta, [0.4, 0.9])
        assert (v.lam, v.f) == (1.0, 1.0 - beta / 2)
    t = table_with([0.1], 1)
    v = haar_keep_prob(t, 1.0, [0.25])
    assert (v.lam, v.f) == (0.5, 0.0)
    v = haar_keep_prob(t, 1.0, [0.75])
    assert (v.lam, v.f) == (1.5, 1.0)


def test_haar_keep_prob_second_order():
    # kept {0.1} gives coefficients +1 (order 1) and +1 at the left order-2
    # function; the order-2 function containing 0.75 has coefficient 0
    t = table_with([0.1], 2)
    assert t.signed_sum([0.75]) == 1
    v = haar_keep_prob(t, 0.5, [0.75])
    assert v.lam == pytest.approx(1.125, abs=1e-15)
    assert v.f == pytest.approx(0.875, abs=1e-15)
    assert t.signed_sum([0.3]) == 0  # -1 from order 1, +1 from the odd half of [0,1/2)
    assert t.signed_sum([0.2]) == -2


def test_greedy_keep_prob_examples():
    for beta in (0.3, 1.0):
        assert greedy_keep_prob(new_state(1), beta, [0.6]) == 1 - beta / 2
    t = table_with([0.1], 1)
    assert greedy_keep_prob(t, 1.0, [0.75]) == 1.0
    assert greedy_keep_prob(t, 1.0, [0.25]) == 0.0
    assert greedy_keep_prob(t, 1.0, [0.75], "paper_sign") == 0.0
    assert greedy_keep_prob(t, 1.0, [0.25], "paper_sign") == 1.0
    assert greedy_keep_prob(t, 0.4, [0.25]) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        greedy_keep_prob(t, 1.0, [0.25], "other")
    with pytest.raises(DomainError):
        greedy_keep_prob(t, 1.0, [1.25])


# -- engine -----------------------------------------------------------------


def test_engine_trace_example():
    engine = ThinningEngine(StrategyConfig("greedy", 1.0, 1), 3)
    first = engine.offer([0.1])
    if not first.kept:
        assert engine.offer([0.1]).forced
    assert engine.outputs.tolist() == [[0.1]] and engine.n_next == 2
    rec = engine.offer([0.3])
    assert (rec.output_index, rec.keep_prob, rec.kept, rec.forced) == (2, 0.0, False, False)
    rec = engine.offer([0.8])
    assert (rec.output_index, rec.keep_prob, rec.kept, rec.forced) == (2, 1.0, True, True)
    assert engine.outputs.tolist() == [[0.1], [0.8]]
    assert engine.n_next == 3


def test_first_step_keep_prob():
    for name, expected in (("haar", 0.75), ("greedy", 0.75), ("monte_carlo", 1.0)):
        engine = ThinningEngine(StrategyConfig(name, 0.5, 2), 0)
        assert engine.keep_prob([0.3, 0.3]) == expected


def test_monte_carlo_keeps_candidates():
    cands = np.random.default_rng(1).random((40, 2))
    res = run(StrategyConfig("monte_carlo", 1.0, 2), 0, 5, cands)
    np.testing.assert_array_equal(res.points, cands[:5])
    assert res.candidates_consumed == 5
    assert all(r.kept and r.keep_prob == 1.0 for r in res.decisions)


@pytest.mark.parametrize("name", STRATEGIES)
@pytest.mark.parametrize("d,beta", [(1, 1.0), (2, 0.5), (3, 0.1)])
def test_run_contract(name, d, beta):
    n = 700
    res = run(StrategyConfig(name, beta, d), 17, n)
    tr = res.trace
    assert res.points.shape == (n, d)
    assert n <= res.candidates_consumed == len(tr) <= 2 * n
    assert np.all(tr.kept[tr.forced])
    # forced records are exactly those following a rejection
    np.testing.assert_array_equal(tr.forced[1:], ~tr.kept[:-1])
    assert not tr.forced[0]
    free = tr.keep_prob[~tr.forced]
    assert np.all((free >= 1 - beta - 1e-15) & (free <= 1 + 1e-15))
    np.testing.assert_array_equal(tr.candidates[tr.kept], res.points)
    assert tr.output_index[-1] == n
    assert np.all(np.diff(tr.output_index) == tr.kept[:-1])


@pytest.mark.parametrize("name", STRATEGIES)
def test_determinism(name):
    cfg = StrategyConfig(name, 0.7, 2)
    a = run(cfg, 99, 3000, run_index=4)
    b = run(cfg, 99, 3000, run_index=4)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.trace.keep_prob.tobytes() == b.trace.keep_prob.tobytes()
    c = run(cfg, 99, 3000, run_index=5)
    assert a.points.tobytes() != c.points.tobytes()


@pytest.mark.parametrize("name", STRATEGIES)
def test_offer_matches_advance(name):
    d = 2
    cfg = StrategyConfig(name, 0.8, d)
    cands = np.random.default_rng(5).random((2400, d))
    n = 1000
    bulk = ThinningEngine(cfg, np.random.default_rng(8))
    bulk.advance(CandidateSource(cands, d), n)
    small = ThinningEngine(cfg, np.random.default_rng(8))
    small.advance(CandidateSource(cands, d), n, chunk=7)
    step = ThinningEngine(cfg, np.random.default_rng(8))
    recs = []
    i = 0
    while step.n_next <= n:
        recs.append(step.offer(cands[i]))
        i += 1
    for other in (small.outputs, step.outputs):
        assert bulk.outputs.tobytes() == other.tobytes()
    assert list(bulk.trace().records()) == recs
    assert bulk.candidates_consumed == small.candidates_consumed == step.candidates_consumed == i


def test_iterable_source_matches_array():
    cands = np.random.default_rng(2).random((500, 1))
    cfg = StrategyConfig("haar", 1.0, 1)
    a = run(cfg, 3, 200, cands)
    b = run(cfg, 3, 200, iter([tuple(c) for c in cands]))
    assert a.points.tobytes() == b.points.tobytes()


def test_candidate_exhaustion():
    cfg = StrategyConfig("greedy", 1.0, 1)
    with pytest.raises(CandidatesExhausted) as info:
        run(cfg, 0, 10, np.array([0.1, 0.2, 0.3]))
    assert 0 < info.value.produced <= 3 and info.value.requested == 10
    assert "of 10 outputs" in str(info.value)


def test_bad_external_candidate():
    with pytest.raises(DomainError):
        run(StrategyConfig("haar", 1.0, 1), 0, 10, np.array([0.1, 1.2, 0.3, 0.4]))


def test_stream_separation():
    cand, dec = make_streams(7, 0)
    assert cand.random() != dec.random()


def test_table_order_follows_output_index():
    engine = ThinningEngine(StrategyConfig("haar", 1.0, 1), 0)
    src = CandidateSource(None, 1, np.random.default_rng(0))
    for n in (1, 2, 3, 4, 7, 8, 100):
        engine.advance(src, n - 1)
        engine.prepare()
        assert engine.table.h == n.bit_length() - 1
        assert engine.table.n_kept == n - 1


# -- density identities on reachable states -----------------------------------


def _reachable_states(count, seed):
    rng = np.random.default_rng(seed)
    for i in range(count):
        d = int(rng.integers(1, 3))
        beta = float(rng.choice([0.25, 0.5, 1.0]))
        n_next = int(rng.integers(2, 64))  # h = floor(log2 n_next) <= 5
        engine = ThinningEngine(StrategyConfig("haar", beta, d), np.random.default_rng(i))
        engine.advance(CandidateSource(None, d, rng), n_next - 1)
        engine.prepare()
        yield engine.table, beta


def test_density_integral_and_balancing_identity():
    checked = 0
    for table, beta in _reachable_states(200, 2024):
        d, h = table.d, table.h
        levels = [h] * d
        mids = grid_midpoints(levels)
        cell = 2.0 ** (-h * d)
        dens = np.array([haar_keep_prob(table, beta, x) for x in mids])
        lam = np.array([v.lam for v in dens])
        assert np.all(lam >= 1 - beta / 2 - 1e-15) and np.all(lam <= 1 + beta / 2 + 1e-15)
        np.testing.assert_allclose([v.f for v in dens], lam - beta / 2, rtol=0, atol=1e-15)
        assert abs(lam.sum() * cell - 1.0) <= 1e-12
        W = shape_count(h, d)
        for hid in table.ids():
            c = table.coefficient(hid)
            if c == 0:
                continue
            hv = haar_values(hid, mids)
            got = float(np.sum(lam * hv)) * cell
            expected = beta * hid.kappa * np.sign(-c) / W
            assert abs(got - expected) <= 1e-12
            checked += 1
    assert checked > 1000


def test_balancing_identity_example():
    t = table_with([0.1], 1)
    mids = grid_midpoints([1])
    lam = np.array([haar_keep_prob(t, 1.0, x).lam for x in mids])
    hv = haar_values(HaarId((1,), (0,)), mids)
    assert float(np.sum(lam * hv)) / 2 == -0.5
