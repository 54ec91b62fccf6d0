import numpy as np
import pytest

from minimax_gda.adapt import AdaptRule, AdaptSpec, AdaptState, update_adabelief, update_adam_diag, update_global_norm
from minimax_gda.core import ContractError


def state(rule, **kw):
    return AdaptState(AdaptSpec(AdaptRule(rule), **kw))


def test_adam_diag_one_step():
    m = update_adam_diag(state("adam-diag", varrho=0.5, rho=0.001), np.array([3.0, 4.0]))
    assert m.kind == "diagonal"
    np.testing.assert_allclose(m.value, [np.sqrt(4.5) + 0.001, np.sqrt(8.0) + 0.001], rtol=1e-15)
    np.testing.assert_allclose(m.value, [2.12232, 2.82943], atol=1e-5)


def test_adam_diag_zero_gradient_stays_at_floor():
    s = state("adam-diag", rho=0.01)
    for _ in range(50):
        m = update_adam_diag(s, np.zeros(3))
        np.testing.assert_array_equal(m.value, np.full(3, 0.01))


def test_adam_diag_constant_gradient_limit():
    s = state("adam-diag", varrho=0.9, rho=0.001)
    g = np.array([0.5, -2.0, 3.0])
    for _ in range(200):
        m = update_adam_diag(s, g)
    np.testing.assert_allclose(m.value, np.abs(g) + 0.001, atol=1e-6)


def test_adam_diag_monotone_in_gradient():
    g_small, g_big = np.array([1.0, -1.0]), np.array([2.0, -1.5])
    a = update_adam_diag(state("adam-diag"), g_small).value
    b = update_adam_diag(state("adam-diag"), g_big).value
    assert np.all(b >= a)


def test_global_norm_one_step():
    m = update_global_norm(state("adam-global", b0=1.0, varrho=0.5, rho=0.001), np.array([3.0, 4.0]))
    assert m.kind == "scalar"
    assert m.value == pytest.approx(3.001, abs=1e-15)


def test_global_norm_floor_and_cap():
    s = state("adam-global", b0=1.0, varrho=0.5, rho=0.001, b_floor=1e-3, b_cap=3.0)
    for _ in range(100):
        m = update_global_norm(s, np.zeros(2))
    assert m.value == pytest.approx(1e-3 + 0.001)
    s = state("adam-global", b0=1.0, varrho=0.5, rho=0.001, b_cap=3.0)
    assert update_global_norm(s, np.array([1e6, 0.0])).value == pytest.approx(3.001)


def test_global_recursion_runs_unclipped():
    s = state("adam-global", b0=1.0, varrho=0.5, rho=0.001, b_cap=3.0)
    update_global_norm(s, np.array([100.0]))
    assert s.b == pytest.approx(50.5)
    m = update_global_norm(s, np.array([0.0]))
    assert s.b == pytest.approx(25.25) and m.value == pytest.approx(3.001)


def test_global_norm_monotone():
    a = update_global_norm(state("adam-global", b_cap=100.0), np.array([1.0])).value
    b = update_global_norm(state("adam-global", b_cap=100.0), np.array([2.0])).value
    assert b > a


def test_adabelief_diag_one_step():
    s = state("adabelief-diag", varrho=0.5, rho=0.001)
    m = update_adabelief(s, np.array([1.0, -1.0]), np.zeros(2))
    np.testing.assert_allclose(m.value, [np.sqrt(0.5) + 0.001] * 2, rtol=1e-15)


def test_adabelief_zero_residual_decays():
    g = np.array([2.0, 3.0])
    s = state("adabelief-diag", rho=0.01)
    for _ in range(400):
        m = update_adabelief(s, g, g)
    np.testing.assert_allclose(m.value, 0.01)
    s = state("adabelief-global", rho=0.01, b_floor=0.05)
    for _ in range(400):
        m = update_adabelief(s, g, g)
    assert m.value == pytest.approx(0.06)


def test_adabelief_symmetric_residuals():
    m = update_adabelief(state("adabelief-diag"), np.array([0.7, -0.7]), np.zeros(2))
    assert m.value[0] == m.value[1]


def test_adabelief_shape_mismatch():
    with pytest.raises(ContractError):
        update_adabelief(state("adabelief-diag"), np.ones(2), np.ones(3))


def test_non_finite_gradient_rejected():
    with pytest.raises(ContractError):
        update_adam_diag(state("adam-diag"), np.array([np.nan, 1.0]))
    with pytest.raises(ContractError):
        update_global_norm(state("adam-global"), np.array([np.inf]))


def test_state_update_dispatch_and_constant():
    s = state("constant", scale=2.0, rho=0.5)
    m = s.update(np.ones((3, 4)))
    assert m.kind == "scalar" and np.all(m.value == 2.0)
    assert state("constant").update(np.ones(2)).kind == "identity"
    with pytest.raises(ContractError):
        state("adabelief-global").update(np.ones(2))


def test_unchecked_path_matches_checked(gen):
    for rule in ("adam-diag", "adam-global", "adabelief-diag", "adabelief-global"):
        a, b = state(rule), state(rule)
        for _ in range(5):
            g, e = gen.normal(size=(3, 4)), gen.normal(size=(3, 4))
            ma, mb = a.update(g, e), b.update(g, e, check=False)
            assert np.array_equal(ma.value, mb.value)


def test_floor_holds_every_step(gen):
    for rule in ("adam-diag", "adam-global", "adabelief-diag", "adabelief-global"):
        s = state(rule, rho=0.05)
        for _ in range(100):
            g = gen.normal(scale=10, size=5)
            assert s.update(g, gen.normal(size=5)).satisfies_floor()


def test_global_bounds_reported():
    spec = AdaptSpec(AdaptRule.ADAM_GLOBAL, rho=0.5, b_floor=0.5, b_cap=1.5)
    assert spec.metric_bounds() == (1.0, 2.0)
    assert AdaptSpec(AdaptRule.ADAM_DIAG).metric_bounds() is None


@pytest.mark.parametrize("kw", [dict(varrho=0.0), dict(varrho=1.0), dict(rho=0.0), dict(b_floor=2.0, b_cap=1.0),
                                dict(rule="constant", scale=1e-4)])
def test_spec_validation(kw):
    kw = dict(kw)
    rule = kw.pop("rule", "adam-global")
    with pytest.raises(ContractError):
        AdaptSpec(AdaptRule(rule), **kw)
