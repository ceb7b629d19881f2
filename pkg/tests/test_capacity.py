import pytest

from memchan.capacity import OptimizerOptions, maximize_holevo
from memchan.metrics import holevo_quantity
from memchan.zoo import MPParams, correlated_dephasing_cphase, identity_channel, mp_channel


def test_options_validation():
    with pytest.raises(ValueError):
        OptimizerOptions(restarts=0)
    with pytest.raises(ValueError):
        OptimizerOptions(ensemble_size=0)
    with pytest.raises(ValueError):
        OptimizerOptions(convergence_tol=0)


def test_identity_reaches_one_bit():
    res = maximize_holevo(identity_channel(), 1, OptimizerOptions(restarts=1))
    assert abs(res.value - 1) < 1e-6
    assert "exceeds-log-d" not in res.flags


def test_depolarizing_is_useless():
    res = maximize_holevo(mp_channel(MPParams(0.0)), 1, OptimizerOptions(restarts=1, ensemble_size=2))
    assert res.value <= 1e-6


def test_returned_ensemble_achieves_value():
    ch = correlated_dephasing_cphase()
    res = maximize_holevo(ch, 1, OptimizerOptions(restarts=1, ensemble_size=2))
    assert abs(holevo_quantity(res.ensemble, ch, 1) - res.value) < 1e-9
    assert res.value <= 1 + 1e-9


def test_monotone_in_restarts():
    ch = mp_channel(MPParams(0.5, (0.6, 0.2, 0.1, 0.1)))
    small = maximize_holevo(ch, 1, OptimizerOptions(restarts=2, ensemble_size=2, max_iters=5))
    big = maximize_holevo(ch, 1, OptimizerOptions(restarts=3, ensemble_size=2, max_iters=5))
    assert big.restart_values[:2] == small.restart_values
    assert big.value >= small.value


def test_threads_do_not_change_result():
    ch = mp_channel(MPParams(0.5, (0.6, 0.2, 0.1, 0.1)))
    opts = dict(restarts=3, ensemble_size=2, max_iters=5)
    a = maximize_holevo(ch, 1, OptimizerOptions(**opts, threads=1))
    b = maximize_holevo(ch, 1, OptimizerOptions(**opts, threads=3))
    assert a.value == b.value and a.restart_values == b.restart_values


def test_product_search_on_two_uses():
    ch = correlated_dephasing_cphase()
    opts = OptimizerOptions(restarts=1, ensemble_size=4, max_iters=3)
    res = maximize_holevo(ch, 2, opts, product=True)
    # computational-basis products already give one bit per use
    assert res.value <= 1 + 1e-9
    assert res.value > 0.9


def test_budget_flag():
    ch = mp_channel(MPParams(0.5, (0.6, 0.2, 0.1, 0.1)))
    res = maximize_holevo(ch, 1, OptimizerOptions(restarts=1, ensemble_size=3, max_iters=1))
    # one coordinate round cannot certify convergence
    assert res.flags == ["budget-exhausted:restart-0"]
