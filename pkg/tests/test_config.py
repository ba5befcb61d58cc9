import pytest

from cellfree_fronthaul.config import ConfigError, SystemConfig, desk_scale, paper_scale, write_keyvalue


def test_defaults_derive_tau_and_noise():
    cfg = SystemConfig()
    assert cfg.tau == cfg.K
    assert cfg.N == pytest.approx(6.36e-13, rel=2e-3)
    assert cfg.data_fraction == pytest.approx((200 - 5) / 200)


def test_presets():
    assert (paper_scale().M, paper_scale().K) == (200, 20)
    assert (desk_scale().M, desk_scale().K) == (50, 5)


@pytest.mark.parametrize("bad", [dict(xi_t=1.1), dict(xi_r=-0.1), dict(M=0), dict(K=3, tau=4),
                                 dict(rho_p=0.0), dict(K=5, T=5)])
def test_invalid(bad):
    with pytest.raises(ConfigError):
        SystemConfig(**bad)


def test_replace_recomputes_derived():
    cfg = SystemConfig().replace(K=7)
    assert cfg.tau == 7
    assert SystemConfig().replace(bandwidth_hz=40e6).N == pytest.approx(2 * SystemConfig().N)


def test_file_roundtrip(tmp_path):
    cfg = desk_scale(xi_t=0.9, M=12)
    p = tmp_path / "c.cfg"
    write_keyvalue(cfg, p)
    assert SystemConfig.from_file(p) == cfg


def test_file_errors(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("M = 10\nbogus = 3\n")
    with pytest.raises(ConfigError):
        SystemConfig.from_file(p)
    p.write_text("M = 2.5\n")
    with pytest.raises(ConfigError):
        SystemConfig.from_file(p)
    p.write_text("just text\n")
    with pytest.raises(ConfigError):
        SystemConfig.from_file(p)
