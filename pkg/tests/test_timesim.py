import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photon_bench import timesim
from photon_bench.optics import SourceKind, SourceSpec
from photon_bench.qcore import DensityMatrix
from photon_bench.timesim import D1, D2, D3, EventStream, RunConfig, WindowConfig

from _oracles import greedy_groups

PAIR = SourceSpec(SourceKind.PAIR, 2000, 9.6e6, 20e-9)
LASER = SourceSpec(SourceKind.LASER, 8e5, 1e6)
WINDOWS = WindowConfig(16e-9, 3e-9, 16e-9)


def _stream(times, chans, duration=None):
    times = np.asarray(times, dtype=np.int64)
    return EventStream.from_unsorted(times, chans, int(times.max(initial=0)) if duration is None else duration)


# -- event streams ----------------------------------------------------------

def test_stream_rejects_unsorted():
    with pytest.raises(ValueError):
        EventStream(np.array([5, 3]), np.array([0, 0]), 10)
    with pytest.raises(ValueError):
        EventStream(np.array([3, 3]), np.array([1, 0]), 10)
    with pytest.raises(ValueError):
        EventStream(np.array([3, 30]), np.array([0, 0]), 10)


def test_stream_is_read_only():
    s = _stream([1, 2, 3], [0, 1, 2])
    with pytest.raises(ValueError):
        s.times[0] = 7


def test_select_and_count():
    s = _stream([1, 2, 3, 4], [0, 1, 2, 1])
    assert s.count(1) == 2
    assert s.select([1]).times.tolist() == [2, 4]


def test_merge_streams_sorted_and_duration_checked():
    a = _stream([1, 5], [0, 0], 10)
    b = _stream([2, 5], [1, 1], 10)
    m = timesim.merge_streams([b, a])
    assert m.times.tolist() == [1, 2, 5, 5]
    assert m.channels.tolist() == [0, 1, 0, 1]
    with pytest.raises(ValueError):
        timesim.merge_streams([a, _stream([1], [0], 11)])


def test_merge_intervals():
    lo, hi = timesim.merge_intervals(np.array([0, 2, 10, 11]), np.array([5, 3, 12, 20]))
    assert lo.tolist() == [0, 10] and hi.tolist() == [5, 20]


# -- coincidence search -------------------------------------------------------

def test_find_coincidences_simple():
    s = _stream([0, 1000, 5000, 9000, 9500], [0, 1, 0, 0, 1])
    g = timesim.find_coincidences_ps(s, [0, 1], 1000)
    assert g.tolist() == [[0, 1], [3, 4]]


def test_window_is_inclusive():
    s = _stream([0, 1000], [0, 1])
    assert len(timesim.find_coincidences_ps(s, [0, 1], 1000)) == 1
    assert len(timesim.find_coincidences_ps(s, [0, 1], 999)) == 0


def test_each_tag_used_once():
    s = _stream([0, 10, 20], [0, 1, 1])
    g = timesim.find_coincidences_ps(s, [0, 1], 100)
    assert g.tolist() == [[0, 1]]


def test_column_order_follows_channels():
    s = _stream([0, 10], [0, 1])
    assert timesim.find_coincidences_ps(s, [1, 0], 100).tolist() == [[1, 0]]


def test_seconds_and_ps_agree():
    rng = np.random.default_rng(1)
    s = _stream(np.sort(rng.integers(0, 10**7, 2000)), rng.integers(0, 3, 2000), 10**7)
    a = timesim.find_coincidences(s, [0, 1, 2], 20e-9)
    b = timesim.find_coincidences_ps(s, [0, 1, 2], 20_000)
    np.testing.assert_array_equal(a, b)


def test_bad_channel_lists_rejected():
    s = _stream([0, 1], [0, 1])
    with pytest.raises(ValueError):
        timesim.find_coincidences_ps(s, [0], 10)
    with pytest.raises(ValueError):
        timesim.find_coincidences_ps(s, [0, 0], 10)
    with pytest.raises(ValueError):
        timesim.find_coincidences(s, [0, 1], 0.0)


def test_empty_stream():
    assert timesim.find_coincidences_ps(EventStream.empty(100), [0, 1], 10).shape == (0, 2)


@st.composite
def tag_streams(draw):
    n = draw(st.integers(0, 60))
    span = draw(st.integers(1, 400))
    times = draw(st.lists(st.integers(0, span), min_size=n, max_size=n))
    chans = draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    return _stream(times, chans, span)


@settings(max_examples=300, deadline=None)
@given(s=tag_streams(), w=st.integers(1, 80), k=st.sampled_from([2, 3]))
def test_sweep_matches_bruteforce(s, w, k):
    channels = [0, 1, 2][:k] if k == 3 else [0, 2]
    got = timesim.find_coincidences_ps(s, channels, w)
    want = greedy_groups(s.times, s.channels, channels, w)
    np.testing.assert_array_equal(got, want)


@settings(max_examples=100, deadline=None)
@given(s=tag_streams(), w=st.integers(1, 80))
def test_groups_are_disjoint_and_within_window(s, w):
    g = timesim.find_coincidences_ps(s, [0, 1, 2], w)
    assert len(set(g.ravel().tolist())) == g.size
    if g.size:
        t = s.times[g]
        assert np.all(t.max(axis=1) - t.min(axis=1) <= w)
        np.testing.assert_array_equal(s.channels[g], np.broadcast_to([0, 1, 2], g.shape))


# -- generation ---------------------------------------------------------------

def test_pair_stream_deterministic_across_workers():
    a = timesim.gen_pair_stream(PAIR, 3.5, seed=11, workers=1)
    b = timesim.gen_pair_stream(PAIR, 3.5, seed=11, workers=4)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.emitters, b.emitters)
    c = timesim.gen_pair_stream(PAIR, 3.5, seed=12)
    assert not np.array_equal(a.times[:100], c.times[:100])


def test_pair_stream_rate_and_partners():
    s = timesim.gen_pair_stream(PAIR, 5.0, seed=3)
    n1, n2 = s.count(D1), s.count(D2)
    assert abs(n1 - 10_000) < 5 * 100
    assert abs(n1 - n2) < 10  # only edge losses differ
    pairs = timesim.find_coincidences(s, [D1, D2], 16e-9)
    # one-sided window w captures 1 - exp(-w/tau) of Laplace delays
    expected = n1 * (1 - math.exp(-16 / 20))
    assert abs(len(pairs) - expected) < 3 * math.sqrt(expected)


def test_poisson_stream_rate():
    s = timesim.gen_poisson_stream(LASER.with_rate(1e5), 2.0, seed=8, channel=D3)
    assert abs(len(s) - 2e5) < 5 * math.sqrt(2e5)
    assert np.all(s.channels == D3)


def test_gated_poisson_only_inside_gates():
    lo = np.array([0, 10**9, 5 * 10**9], dtype=np.int64)
    hi = lo + 10**6
    s = timesim.gen_poisson_stream(LASER, 6.0, seed=1, gates=(lo, hi))
    assert len(s) > 0
    inside = np.zeros(len(s), dtype=bool)
    for a, b in zip(lo, hi):
        inside |= (s.times >= a) & (s.times < b)
    assert inside.all()
    assert abs(len(s) - 3 * 8e5 * 1e-6) < 5 * math.sqrt(2.4)


def test_thinning_rate():
    s = timesim.gen_poisson_stream(LASER.with_rate(1e5), 1.0, seed=2)
    t = timesim.thin(s, (1.0, 1.0, 0.25), seed=4)
    assert abs(len(t) - 0.25 * len(s)) < 5 * math.sqrt(len(s) * 0.25 * 0.75)
    assert timesim.thin(s, (1.0, 1.0, 1.0), seed=4) is s


def test_jitter_keeps_sorted():
    s = timesim.gen_pair_stream(PAIR, 1.0, seed=2)
    j = timesim.add_jitter(s, 1e-9, seed=3)
    assert len(j) == len(s)
    assert not np.array_equal(j.times, s.times)


# -- rates and coherence ------------------------------------------------------

def test_accidental_rate_analytic():
    assert timesim.accidental_rate_analytic(8e5, 1e4, 3e-9) == pytest.approx(24.0)
    with pytest.raises(ValueError):
        timesim.accidental_rate_analytic(-1, 1, 1)


def test_coherence_numbers():
    assert timesim.coherence_time_from_linewidth(9.6e6) == pytest.approx(16.58e-9, rel=1e-3)
    assert timesim.coherence_length(9.6e6) == pytest.approx(4.97, rel=1e-2)
    with pytest.raises(ValueError):
        timesim.coherence_time_from_linewidth(1e6, "Gaussian")


# -- three-fold pipeline -------------------------------------------------------

def _run(duration=2.0, seed=5, **kw):
    return RunConfig(duration, seed, PAIR, LASER, WINDOWS, **kw)


def test_threefolds_structure():
    s = timesim.simulate_stream(_run())
    g = timesim.find_threefolds(s, WINDOWS)
    assert g.shape[1] == 3 and len(g) > 0
    np.testing.assert_array_equal(s.channels[g], np.broadcast_to([D1, D2, D3], g.shape))
    assert np.all(np.abs(s.times[g[:, 1]] - s.times[g[:, 2]]) <= timesim.to_ps(3e-9))
    assert np.all(np.abs(s.times[g[:, 0]] - s.times[g[:, 1]]) <= timesim.to_ps(16e-9))


def test_gated_laser_equivalent_three_folds():
    """Restricting the laser to D2 gates must not change the three-fold rate."""
    n_gated, n_full = [], []
    for seed in range(6):
        run = _run(duration=1.0, seed=seed)
        n_gated.append(len(timesim.find_threefolds(timesim.simulate_stream(run), WINDOWS)))
        n_full.append(len(timesim.find_threefolds(timesim.simulate_stream(run, gated=False), WINDOWS)))
    a, b = sum(n_gated), sum(n_full)
    assert abs(a - b) < 5 * math.sqrt(a + b)


def test_classify_threefolds_true_fraction():
    s = timesim.simulate_stream(_run(duration=3.0))
    g = timesim.find_threefolds(s, WINDOWS)
    true = timesim.classify_threefolds(s, g)
    assert 0.5 < true.mean() <= 1.0


def _ghz_like():
    from photon_bench.qcore import ghz_state
    return timesim.QuantumModel(ghz_state(-1).dm(), DensityMatrix.maximally_mixed(3), 0.5)


def test_count_bookkeeping_conserved():
    sim = timesim.simulate_counts_detailed(_run(duration=2.0), "ghz", ["ZZZ", "XXX"], _ghz_like())
    for setting in ("ZZZ", "XXX"):
        total = sim.total.total(setting)
        assert total == sim.true.total(setting) + sim.accidental.total(setting)
        assert total <= sim.candidates[setting]


def test_counts_deterministic_across_workers():
    run = _run(duration=2.0, seed=9)
    a = timesim.simulate_counts(run, "ghz", ["ZZZ", "YYX"], _ghz_like(), workers=1)
    b = timesim.simulate_counts(run, "ghz", ["ZZZ", "YYX"], _ghz_like(), workers=3)
    assert a == b and a.digest() == b.digest()


def test_accidental_fraction_topup():
    q = timesim.QuantumModel(_ghz_like().true_state, DensityMatrix.maximally_mixed(3), 0.5, 0.4)
    sim = timesim.simulate_counts_detailed(_run(duration=4.0), "ghz", ["ZZZ"], q)
    n_t, n_a = sim.true.total("ZZZ"), sim.accidental.total("ZZZ")
    frac = n_a / (n_t + n_a)
    assert abs(frac - 0.4) < 5 * math.sqrt(0.24 / (n_t + n_a))


def test_simulate_counts_rejects_bad_setting():
    with pytest.raises(ValueError):
        timesim.simulate_counts(_run(), "ghz", ["ZZ"], _ghz_like())
    with pytest.raises(ValueError):
        timesim.simulate_counts(_run(), "bell", ["ZZZ"], _ghz_like())


def test_sample_counts_direct_accidentals():
    q = timesim.QuantumModel(_ghz_like().true_state, DensityMatrix.maximally_mixed(3), 0.5, 0.25)
    sim = timesim.sample_counts_direct(q, ["ZZZ"], 20_000, seed=1)
    assert sim.total.total("ZZZ") == 20_000
    assert abs(sim.accidental.total("ZZZ") - 5000) < 5 * math.sqrt(20_000 * 0.25 * 0.75)
    assert sim.true.get_count("ZZZ", "HHV") == 0
