import numpy as np
import pytest

from minimax_gda.core import (
    ContractError,
    MiniBatch,
    RngStream,
    as_vector,
    batch_mean,
    dot,
    draw_batch,
    matvec,
    norm,
    sqnorm,
)


@pytest.mark.parametrize("a,b,expected", [((1, 2), (3, 4), 11.0), ((0, 0), (5, -5), 0.0), ((1, 0), (0, 1), 0.0)])
def test_dot_examples(a, b, expected):
    assert dot(np.array(a, float), np.array(b, float)) == expected


def test_dot_sums_left_to_right():
    # (1e16 + 1) - 1e16 loses the 1 when added in order; pairwise or reversed order would not
    a = np.array([1e16, 1.0, -1e16])
    assert dot(a, np.ones(3)) == 0.0
    assert dot(a[::-1], np.ones(3)) == 1.0 - 1e16 + 1e16


def test_dot_rejects_mismatch():
    with pytest.raises(ContractError):
        dot(np.ones(2), np.ones(3))


def test_dot_lanes_match_single(gen):
    a = gen.standard_normal((7, 13))
    b = gen.standard_normal((7, 13))
    lanes = dot(a, b)
    for i in range(7):
        assert lanes[i] == dot(a[i], b[i])


def test_norms():
    v = np.array([3.0, 4.0])
    assert sqnorm(v) == 25.0
    assert norm(v) == 5.0


def test_matvec_matches_numpy_and_is_lane_invariant(gen):
    m = gen.standard_normal((5, 4))
    x = gen.standard_normal((6, 4))
    out = matvec(m, x)
    np.testing.assert_allclose(out, x @ m.T, rtol=1e-13, atol=1e-13)
    for i in range(6):
        assert np.array_equal(matvec(m, x[i]), out[i])
    with pytest.raises(ContractError):
        matvec(m, np.ones(3))


def test_batch_mean_order_and_size_one():
    s = np.array([[1e16], [1.0], [-1e16]])
    assert batch_mean(s)[0] == 0.0
    one = np.array([[0.1, 0.2]])
    assert np.array_equal(batch_mean(one), one[0])
    with pytest.raises(ContractError):
        batch_mean(np.zeros((0, 2)))


def test_as_vector_contract():
    assert as_vector([1, 2]).dtype == np.float64
    with pytest.raises(ContractError):
        as_vector([1.0, np.nan])
    with pytest.raises(ContractError):
        as_vector([1.0, np.inf])
    with pytest.raises(ContractError):
        as_vector(3.0)
    with pytest.raises(ContractError):
        as_vector([1.0, 2.0], dim=3)


def test_stream_matches_reference_philox():
    # independent reference: numpy's Philox with the documented key layout
    seed, sid = 987654321, 5
    ref = np.random.Philox(key=seed | (sid << 64)).random_raw(40)
    rng = RngStream(seed, sid)
    got = np.concatenate([rng.words(3), rng.words(17), rng.words(20)])
    assert np.array_equal(got, ref)
    assert rng.counter == 40


def test_stream_counter_addressing():
    full = RngStream(1, 2).words(100)
    for start in (0, 1, 4, 37, 99):
        assert np.array_equal(RngStream(1, 2, counter=start).words(100 - start), full[start:])


def test_stream_crosses_buffer_boundary():
    rng = RngStream(3)
    a = rng.words(16383)
    b = rng.words(10)
    ref = np.random.Philox(key=3).random_raw(16393)
    assert np.array_equal(np.concatenate([a, b]), ref)


def test_stream_rejects_out_of_range():
    with pytest.raises(ContractError):
        RngStream(-1)
    with pytest.raises(ContractError):
        RngStream(0, stream_id=1 << 64)


def test_uniforms_open_interval():
    u = RngStream(0).uniforms(100000)
    assert u.min() > 0.0 and u.max() < 1.0


def test_draw_batch_determinism():
    a = draw_batch(RngStream(11, 0, 5), 8)
    b = draw_batch(RngStream(11, 0, 5), 8)
    assert np.array_equal(a.draws, b.draws)


def test_draw_batch_sizes_and_counter():
    rng = RngStream(0)
    b = draw_batch(rng, 1)
    assert b.size == 1 and b.width == 1
    draw_batch(rng, 4, width=3)
    assert rng.counter == 1 + 12
    with pytest.raises(ContractError):
        draw_batch(rng, 0)


def test_two_streams_are_centred():
    # CLT bound: |mean| <= 4 / sqrt(n) for standard normals
    n = 10_000
    for sid in (0, 1):
        draws = draw_batch(RngStream(2024, sid), n).draws
        assert abs(draws.mean()) <= 4.0 / np.sqrt(n)


def test_distinct_streams_differ():
    assert not np.array_equal(RngStream(1, 0).words(8), RngStream(1, 1).words(8))


def test_minibatch_requires_draws():
    with pytest.raises(ContractError):
        MiniBatch(np.zeros((0, 1)))
