import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advnids.features import (DEFAULT_LAMBDAS, DampedStat1D, ExtractorState, StaleSnapshotError,
                              TimeRegressionError, read_feature_csv, stream_keys, update_1d,
                              write_feature_csv)
from advnids.pcap_io import Protocol, build_frame
from oracles import FEATURES_PER_LAMBDA, brute_force_features
from tracegen import arp_frame, random_trace

A = ("02:00:00:00:00:01", "192.168.0.2")
B = ("02:00:00:00:00:02", "192.168.0.10")
C = ("02:00:00:00:00:03", "192.168.0.20")


def pkt(t, size=100, src=A, dst=B, sport=5000, dport=80, proto=Protocol.TCP, index=0):
    header = 54 if proto is Protocol.TCP else 42
    return build_frame(src[0], dst[0], src[1], dst[1], proto, sport, dport,
                       bytes(max(0, size - header)), int(round(t * 1e6)), index)


# ------------------------------------------------------------------ update_1d

def test_single_observation():
    s = update_1d(DampedStat1D([1.0]), 5.0, 123.0)
    assert s.w[0] == 1.0 and s.mean[0] == 5.0 and s.std[0] == 0.0


def test_no_decay_between_simultaneous_updates():
    s = update_1d(update_1d(DampedStat1D([1.0]), 4.0, 0.0), 8.0, 0.0)
    assert s.w[0] == 2.0 and s.mean[0] == 6.0


def test_decay_of_one_half_per_second():
    s = update_1d(update_1d(DampedStat1D([1.0]), 4.0, 0.0), 8.0, 1.0)
    assert s.w[0] == pytest.approx(1.5)
    assert s.lin_sum[0] == pytest.approx(10.0)
    assert s.mean[0] == pytest.approx(20 / 3)
    # full-history weighted sums
    g = np.array([0.5, 1.0])
    x = np.array([4.0, 8.0])
    assert s.sq_sum[0] == pytest.approx((g * x * x).sum())
    assert s.std[0] == pytest.approx(math.sqrt((g * x * x).sum() / 1.5 - (20 / 3) ** 2))


def test_update_1d_leaves_input_untouched():
    s = DampedStat1D([1.0])
    update_1d(s, 3.0, 0.0)
    assert s.last_t is None and s.w[0] == 0.0


def test_time_regression_rejected():
    s = update_1d(DampedStat1D(), 1.0, 10.0)
    with pytest.raises(TimeRegressionError):
        s.update(1.0, 9.0)
    state = ExtractorState()
    state.extract(pkt(5.0))
    with pytest.raises(TimeRegressionError):
        state.extract(pkt(4.0))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e4), st.floats(0, 10)), min_size=1, max_size=40))
def test_mean_stays_within_observed_range(obs):
    s = DampedStat1D()
    t = 0.0
    xs = []
    for x, dt in obs:
        t += dt
        s.update(x, t)
        xs.append(x)
        scale = max(1.0, max(xs))
        assert np.all(s.mean >= min(xs) - 1e-9 * scale) and np.all(s.mean <= max(xs) + 1e-9 * scale)
        assert np.all(s.var >= -1e-9 * scale ** 2)
        assert np.all(s.w >= 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 100), st.lists(st.floats(0, 50), min_size=2, max_size=10))
def test_weight_never_grows_without_packets(t0, gaps):
    s = update_1d(DampedStat1D(), 1.0, t0)
    t, prev = t0, s.weight_at(t0)
    for g in gaps:
        t += g
        w = s.weight_at(t)
        assert np.all(w <= prev)
        prev = w


# ------------------------------------------------------------------ extract

def test_first_packet_vector():
    v = ExtractorState().extract(pkt(1.0, size=154)).values.reshape(len(DEFAULT_LAMBDAS), FEATURES_PER_LAMBDA)
    assert v.shape == (5, 20)
    for row in v:
        assert row[0] == 1 and row[1] == 154 and row[2] == 0            # source size stream
        assert row[3] == 1 and row[4] == 0 and row[5] == 0              # jitter stream
        for off in (6, 13):                                             # channel, socket
            w, mu, sd, mag, rad, cov, pcc = row[off:off + 7]
            assert (w, mu, sd) == (1, 154, 0)
            assert mag == 154 and rad == 0 and cov == 0 and pcc == 0


def test_missing_network_addresses_only_touch_link_stream():
    a = arp_frame(A[0], 1_000_000, 0)
    state = ExtractorState()
    v = state.extract(a).values.reshape(5, 20)
    assert np.all(v[:, 0] == 1) and np.all(v[:, 3:] == 0)
    assert list(state.streams) == [("srcmi", a.src_link, None)]


def test_identical_back_to_back_socket_mean():
    state = ExtractorState()
    state.extract(pkt(1.0, size=300))
    v = state.extract(pkt(1.0, size=300)).values.reshape(5, 20)
    assert np.all(v[:, 14] == 300.0)
    assert np.all(v[:, 13] == 2.0)


def test_three_packet_hand_trace_matches_oracle():
    packets = [pkt(0.0, 100, index=0), pkt(0.1, 200, index=1), pkt(0.2, 100, index=2)]
    got = ExtractorState([1.0]).extract_all(packets)
    want = brute_force_features(packets, [1.0])
    assert np.max(np.abs(got - want)) <= 1e-9
    # socket weight by hand: 2^-0.2 + 2^-0.1 + 1
    assert got[2, 13] == pytest.approx(2 ** -0.2 + 2 ** -0.1 + 1)


def test_two_way_flow_matches_oracle():
    ps = []
    for i in range(30):
        fwd = i % 3 != 2
        src, dst = (A, B) if fwd else (B, A)
        sp, dp = (5000, 80) if fwd else (80, 5000)
        ps.append(pkt(0.05 * i, 60 + 13 * i, src, dst, sp, dp, index=i))
    got = ExtractorState().extract_all(ps)
    want = brute_force_features(ps, DEFAULT_LAMBDAS)
    assert np.max(np.abs(got - want)) <= 1e-9
    assert np.all(np.abs(got[:, 19::20]) <= 1)


@pytest.mark.parametrize("seed", range(5))
def test_random_traces_match_oracle(seed):
    ps = random_trace(np.random.default_rng(seed), 150)
    got = ExtractorState().extract_all(ps)
    assert np.max(np.abs(got - brute_force_features(ps, DEFAULT_LAMBDAS))) <= 1e-9
    assert np.all(np.isfinite(got))


def test_dimension_does_not_depend_on_streams():
    ps = random_trace(np.random.default_rng(11), 60)
    state = ExtractorState()
    assert all(len(state.extract(p)) == 100 for p in ps)
    assert state.dim == 100 and len(state.feature_names()) == 100


def test_extraction_is_deterministic():
    ps = random_trace(np.random.default_rng(4), 200)
    assert np.array_equal(ExtractorState().extract_all(ps), ExtractorState().extract_all(ps))


def test_feature_csv_round_trip(tmp_path):
    ps = random_trace(np.random.default_rng(2), 20)
    state = ExtractorState()
    X = state.extract_all(ps)
    write_feature_csv(X, tmp_path / "f.csv", state.feature_names())
    idx, Y = read_feature_csv(tmp_path / "f.csv")
    assert np.array_equal(idx, np.arange(20)) and np.array_equal(X, Y)
    header = (tmp_path / "f.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "packet_index" and len(header) == 101


# ------------------------------------------------------------------ snapshots

def _warm(n=300, seed=0):
    state = ExtractorState()
    ps = random_trace(np.random.default_rng(seed), n, long_gaps=False)
    state.extract_all(ps)
    return state, ps[-1].ts_us


def test_snapshot_process_restore_probe():
    state, t = _warm()
    probe = pkt(t / 1e6 + 2.0, 500, index=99)
    candidates = [pkt(t / 1e6 + 0.1 * (j + 1), 80 + j, index=j) for j in range(7)]
    reference = copy.deepcopy(state).extract(probe).values
    snap = state.snapshot_for(candidates)
    for c in candidates:
        state.extract(c)
    state.restore(snap)
    assert np.array_equal(state.extract(probe).values, reference)


def test_empty_snapshot_restore_is_noop():
    state, _ = _warm()
    before = copy.deepcopy(state)
    state.restore(state.snapshot([]))
    assert state.equals(before)


def test_stale_snapshot_detected():
    state, t = _warm()
    p = pkt(t / 1e6 + 1, src=A, dst=B)
    other = pkt(t / 1e6 + 2, src=C, dst=B, sport=7000, dport=7001)
    snap = state.snapshot_for([p])
    state.extract(p)
    state.extract(other)
    with pytest.raises(StaleSnapshotError):
        state.restore(snap)


def test_snapshot_from_a_rolled_back_history_is_stale():
    state, t = _warm()
    p = pkt(t / 1e6 + 1)
    outer = state.snapshot_for([p])
    state.extract(p)
    inner = state.snapshot_for([p])
    state.restore(outer)
    with pytest.raises(StaleSnapshotError):
        state.restore(inner)


def test_snapshot_of_another_state_rejected():
    a, _ = _warm()
    b = a.clone()
    with pytest.raises(StaleSnapshotError):
        b.restore(a.snapshot([]))


def test_clone_is_independent():
    state, t = _warm()
    c = state.clone()
    c.extract(pkt(t / 1e6 + 1))
    assert not c.equals(state)


def test_stream_keys_cover_updates():
    for p in random_trace(np.random.default_rng(8), 50):
        state = ExtractorState()
        state.extract(p)
        assert set(state.streams) == set(stream_keys(p))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 8))
def test_snapshot_is_observationally_identity(seed, n_candidates):
    rng = np.random.default_rng(seed)
    state = ExtractorState()
    hist = random_trace(rng, 40, long_gaps=False)
    state.extract_all(hist)
    t = hist[-1].ts_us
    cands = []
    for j in range(n_candidates):
        t += int(rng.integers(0, 200_000))
        cands.append(hist[int(rng.integers(len(hist)))].retimed(t, index=j))
    oracle = copy.deepcopy(state)
    snap = state.snapshot_for(cands)
    for c in cands:
        state.extract(c)
    state.restore(snap)
    assert state.equals(oracle)
    probe = hist[int(rng.integers(len(hist)))].retimed(t + 1)
    assert np.array_equal(state.extract(probe).values, oracle.extract(probe).values)
