import numpy as np
import pytest

from cellfree_fronthaul.config import SystemConfig
from cellfree_fronthaul.signal import (STREAM_LABELS, ChannelRealization, add_quantization, distort,
                                       draw_channels, make_pilots, project_pilots, receive_data, receive_pilot,
                                       streams)


def test_pilots():
    assert make_pilots(1, 1).phi.shape == (1, 1)
    assert abs(make_pilots(1, 1).phi[0, 0]) == pytest.approx(1.0)
    assert np.allclose(make_pilots(4, 4).gram, np.eye(4), atol=1e-12)
    with pytest.raises(ValueError):
        make_pilots(3, 4)


def test_channels():
    g = draw_channels(np.ones((1, 1)), seed=0, draws=100_000).g
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, abs=0.02)
    assert np.array_equal(draw_channels(np.ones((3, 2)), seed=5).g, draw_channels(np.ones((3, 2)), seed=5).g)


def test_distort():
    rng = np.random.default_rng(0)
    x = (rng.standard_normal(100_000) + 1j * rng.standard_normal(100_000)) / np.sqrt(2)
    assert np.array_equal(distort(x, 1.0, rng), x)
    y = distort(x, 0.8, rng, power=1.0)
    assert np.mean(np.abs(y) ** 2) == pytest.approx(1.0, abs=0.02)
    corr = np.real(np.mean(y * x.conj()))
    assert corr == pytest.approx(np.sqrt(0.8), abs=0.01)
    z = distort(x, 0.0, rng, power=1.0)
    assert abs(np.mean(z * x.conj())) < 0.02
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, abs=0.02)


def test_streams_are_independent_and_labeled():
    a, b = streams(1), streams(1)
    assert set(a) == set(STREAM_LABELS)
    assert a["channel"].random() == b["channel"].random()
    assert a["pilot_tx"].random() != a["pilot_rx"].random()


def test_noiseless_pilot():
    cfg = SystemConfig(M=4, K=3, N=1e-300)
    pilots = make_pilots(3, 3)
    g = draw_channels(np.ones((4, 3)), seed=2).g
    y = receive_pilot(ChannelRealization(g), pilots, cfg, streams(0)).y_p
    assert np.allclose(y, np.sqrt(cfg.tau * cfg.rho_p) * g @ pilots.phi.T)
    assert np.allclose(project_pilots(y, pilots), np.sqrt(cfg.tau * cfg.rho_p) * g)


def test_pilot_conditional_variance():
    # K = 1: given g, Var(y) = rho_p (1 - xi_t) xi_r |g|^2 + rho_p (1 - xi_r) |g|^2 + N
    cfg = SystemConfig(M=1, K=1, xi_t=0.7, xi_r=0.8, rho_p=1.0, N=0.5)
    g = np.full((200_000, 1, 1), 1.3 + 0.4j)
    rngs = streams(3)
    y = receive_pilot(ChannelRealization(g), make_pilots(1, 1), cfg, rngs).y_p[:, 0, 0]
    mean = np.sqrt(cfg.xi_r * cfg.xi_t * cfg.rho_p) * g[0, 0, 0]
    g2 = abs(g[0, 0, 0]) ** 2
    want = cfg.rho_p * (1 - cfg.xi_t) * cfg.xi_r * g2 + cfg.rho_p * (1 - cfg.xi_r) * g2 + cfg.N
    assert np.mean(np.abs(y - mean) ** 2) == pytest.approx(want, rel=0.02)


def test_ue_distortion_shared_across_aps():
    cfg = SystemConfig(M=3, K=2, xi_t=0.5)
    g = draw_channels(np.ones((3, 2)), seed=1).g
    _, parts = receive_pilot(ChannelRealization(g), make_pilots(2, 2), cfg, streams(0), components=True)
    assert parts["z_t"].shape == (2, 2)  # one draw per UE and pilot sample, not per AP
    assert parts["z_r"].shape == (3, 2)


def test_data_reception():
    cfg = SystemConfig(M=2, K=2, N=0.3)
    beta = np.array([[1.0, 0.5], [0.2, 2.0]])
    ch = draw_channels(beta, seed=0, draws=100_000)
    silent = receive_data(ch, 0.0, cfg, streams(1))
    assert np.mean(np.abs(silent.y) ** 2) == pytest.approx(cfg.N, rel=0.02)
    loud = receive_data(ch, [1.0, 0.5], cfg.replace(rho_u=2.0, xi_t=0.8, xi_r=0.9), streams(2))
    want = 2.0 * beta @ np.array([1.0, 0.5]) + cfg.N
    assert np.allclose(np.mean(np.abs(loud.y) ** 2, axis=0), want, rtol=0.02)
    ideal = receive_data(ch, 1.0, cfg, streams(3))
    rebuilt = np.einsum("bmk,bk->bm", ch.g, np.sqrt(cfg.rho_u) * ideal.s) + ideal.n
    assert np.allclose(ideal.y, rebuilt)
    with pytest.raises(ValueError):
        receive_data(ch, 1.5, cfg, streams(0))


def test_add_quantization():
    rng = np.random.default_rng(0)
    x = np.zeros(100_000, complex)
    assert np.mean(np.abs(add_quantization(x, 0.25, rng)) ** 2) == pytest.approx(0.25, rel=0.02)
    assert add_quantization(x, 0.0, rng) is x
    with pytest.raises(ValueError):
        add_quantization(x, np.inf, rng)
