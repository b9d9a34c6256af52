import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rsma_isac.estimator import RsmaIsacBeamformer, check_channel_matrix
from rsma_isac.metrics import evaluate
from rsma_isac.scene import SystemConfig, generate_channel_set, make_rng
from rsma_isac.solver import Status


@pytest.fixture(scope="module")
def channels():
    cfg = SystemConfig(n_tx=8, n_rx=8, n_rf=4, n_users=2)
    return generate_channel_set(cfg, "LowCorrelation", make_rng(4)).channels


@pytest.fixture(scope="module")
def fitted(channels):
    return RsmaIsacBeamformer(n_rf=4, n_rx=8).fit(channels)


def test_params_roundtrip():
    est = RsmaIsacBeamformer(scheme="SdmaHybrid", n_rf=6)
    params = est.get_params()
    assert params["scheme"] == "SdmaHybrid" and params["n_rf"] == 6
    est.set_params(power_dbm=25.0)
    assert clone(est).get_params()["power_dbm"] == 25.0


def test_fit_attributes(fitted, channels):
    assert fitted.precoder_.shape == (8, 3)
    assert fitted.n_features_in_ == 8
    assert fitted.status_ is Status.CONVERGED
    assert fitted.converged_
    assert fitted.report_.feasible
    rep = evaluate(fitted.solution_, channels, fitted.scene_, fitted.config_)
    assert fitted.score(channels) == pytest.approx(rep.wsr, rel=1e-12)


def test_predict_and_transform(fitted, channels):
    rates = fitted.predict(channels)
    np.testing.assert_allclose(rates, fitted.common_rates_ + fitted.report_.rate_private, rtol=1e-12)
    gains = fitted.transform(channels)
    np.testing.assert_allclose(gains, channels.conj() @ fitted.precoder_)


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        RsmaIsacBeamformer().predict(np.ones((2, 8)))


def test_fit_is_deterministic(channels):
    a = RsmaIsacBeamformer(n_rf=4, n_rx=8, random_state=3).fit(channels)
    b = RsmaIsacBeamformer(n_rf=4, n_rx=8, random_state=3).fit(channels)
    assert a.precoder_.tobytes() == b.precoder_.tobytes()


@pytest.mark.parametrize("bad", [np.ones((2, 0)), np.array([[np.nan, 1.0]]), np.array([["a", "b"]]),
                                 np.ones((2, 2, 2))])
def test_check_channel_matrix_rejects(bad):
    with pytest.raises(ValueError):
        check_channel_matrix(bad)


def test_shape_mismatch_rejected(fitted):
    with pytest.raises(ValueError, match="antennas"):
        fitted.predict(np.ones((2, 7)))
    with pytest.raises(ValueError, match="users"):
        fitted.predict(np.ones((3, 8)))


def test_invalid_scheme_and_rf_chains(channels):
    with pytest.raises(ValueError):
        RsmaIsacBeamformer(scheme="Noma", n_rx=8).fit(channels)
    with pytest.raises(ValueError):
        RsmaIsacBeamformer(n_rf=2, n_rx=8).fit(channels)  # K + 1 > N_RF
