import numpy as np
import pytest

from mpnlsim import channel as ch
from mpnlsim import fec, linksim
from mpnlsim.core import DEFAULT_NUMEROLOGY, mcs_entry

MCS_QPSK = mcs_entry(7)      # QPSK, mid rate


def make_cfg(**kw):
    base = dict(n_streams=2, m_antennas=4, mcs=MCS_QPSK, detector="mmse",
                rb_per_vehicle=1, seed=11)
    base.update(kw)
    return linksim.LinkConfig(**base)


def make_grid(cfg, seed=0):
    return ch.rayleigh_block(cfg.m_antennas, cfg.n_streams, seed=seed,
                             n_subcarriers=cfg.n_subcarriers)


def test_config_validation():
    with pytest.raises(ValueError):
        make_cfg(n_streams=13)
    with pytest.raises(ValueError):
        make_cfg(m_antennas=0)
    with pytest.raises(ValueError):
        make_cfg(detector="genie-aided")
    with pytest.raises(ValueError):
        make_cfg(csi="perfect")
    with pytest.raises(ValueError):
        make_cfg(rb_per_vehicle=10_000)


def test_bits_per_block():
    cfg = make_cfg(rb_per_vehicle=2)
    assert cfg.n_subcarriers == 24
    assert cfg.bits_per_block == 24 * 12 * 2


@pytest.mark.parametrize("idx", [0, 2, 7, 12, 16, 20])
def test_default_rb_allocation_always_rate_matchable(idx):
    mcs = mcs_entry(idx)
    rb = linksim.default_rb_allocation(mcs)
    assert rb >= 1
    bits = rb * 12 * DEFAULT_NUMEROLOGY.data_symbols * \
        mcs.constellation.bits_per_symbol
    fec.design_rate_match(fec.default_code(), mcs.code_rate, bits)


def test_default_rb_allocation_is_maximal():
    # one more RB would break the rate match (or exceed the codeword)
    mcs = mcs_entry(9)
    rb = linksim.default_rb_allocation(mcs)
    bits_per_rb = 12 * DEFAULT_NUMEROLOGY.data_symbols * \
        mcs.constellation.bits_per_symbol
    with pytest.raises(ValueError):
        fec.design_rate_match(fec.default_code(), mcs.code_rate,
                              (rb + 1) * bits_per_rb)


def test_dmrs_combs_disjoint():
    _, ports = linksim._dmrs_pattern(DEFAULT_NUMEROLOGY, 12, 24)
    seen = set()
    for sym, sc in ports:
        key = {(sym, s) for s in sc}
        assert not key & seen
        seen |= key


def test_dmrs_too_many_streams():
    num = DEFAULT_NUMEROLOGY
    with pytest.raises(ValueError):
        linksim._dmrs_pattern(num, 13, 24)


def test_ls_estimate_exact_on_constant_channel():
    cfg = make_cfg(n_streams=2, m_antennas=3, csi="ls_dmrs")
    rng = np.random.default_rng(5)
    h = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    num, n_sc = cfg.numerology, cfg.n_subcarriers
    _, ports = linksim._dmrs_pattern(num, 2, n_sc)
    obs = np.zeros((num.symbols_per_slot, n_sc, 3), dtype=complex)
    pilots = []
    for v, (sym, sc) in enumerate(ports):
        obs[sym, sc, :] += h[:, v]
        pilots.append(np.ones(sc.size, dtype=complex))
    est = linksim.estimate_channel_ls(obs, np.array(pilots), cfg)
    assert np.allclose(est, h[None, None], atol=1e-12)


@pytest.mark.parametrize("detector", ["mmse", "zf", "mpnl", "ml"])
def test_near_noiseless_all_blocks_decode(detector):
    cfg = make_cfg(detector=detector)
    grid = make_grid(cfg)
    ok = linksim.simulate_frames(cfg, grid, 1e-9, 0, range(3))
    assert ok.shape == (3, 2)
    assert ok.all()


def test_heavy_noise_all_blocks_fail():
    cfg = make_cfg()
    grid = make_grid(cfg)
    ok = linksim.simulate_frames(cfg, grid, 1e3, 0, range(3))
    assert not ok.any()


def test_frames_deterministic_and_batch_invariant():
    cfg = make_cfg(detector="mpnl")
    grid = make_grid(cfg)
    nv = 0.05
    full = linksim.simulate_frames(cfg, grid, nv, 0, range(6))
    again = linksim.simulate_frames(cfg, grid, nv, 0, range(6))
    assert np.array_equal(full, again)
    parts = np.concatenate([
        linksim.simulate_frames(cfg, grid, nv, 0, range(0, 2)),
        linksim.simulate_frames(cfg, grid, nv, 0, range(2, 6))])
    assert np.array_equal(full, parts)


def test_frames_differ_across_channel_index():
    cfg = make_cfg()
    grid = make_grid(cfg)
    nv = 0.3
    a = linksim.simulate_frames(cfg, grid, nv, 0, range(20))
    b = linksim.simulate_frames(cfg, grid, nv, 1, range(20))
    assert not np.array_equal(a, b)


def test_ls_csi_decodes_at_high_snr():
    cfg = make_cfg(csi="ls_dmrs", m_antennas=6)
    grid = make_grid(cfg)
    ok = linksim.simulate_frames(cfg, grid, 1e-4, 0, range(3))
    assert ok.all()


def test_grid_too_small_rejected():
    cfg = make_cfg(m_antennas=8)
    grid = ch.rayleigh_block(4, 2, seed=0, n_subcarriers=cfg.n_subcarriers)
    with pytest.raises(ValueError):
        linksim.simulate_frames(cfg, grid, 0.1, 0, [0])


def test_simulate_slot_matches_first_frame():
    cfg = make_cfg()
    grid = make_grid(cfg)
    slot = linksim.simulate_slot(cfg, grid, 0.05)
    assert np.array_equal(slot,
                          linksim.simulate_frames(cfg, grid, 0.05, 0, [0])[0])


def test_per_result_stats():
    r = linksim.PerResult(frames=400, errors=40)
    assert r.per == pytest.approx(0.1)
    assert r.ci95_halfwidth == pytest.approx(1.96 * np.sqrt(0.09 / 400))


def test_measure_per_counts_blocks():
    cfg = make_cfg()
    grids = [make_grid(cfg, seed=s) for s in range(3)]
    res = linksim.measure_per(cfg, grids, [1e-9] * 3, frames_per_channel=5)
    assert res.frames == 3 * 5 * cfg.n_streams
    assert res.per == 0.0


def test_measure_per_early_stop():
    cfg = make_cfg()
    grids = [make_grid(cfg, seed=s) for s in range(20)]
    res = linksim.measure_per(cfg, grids, [1e3] * 20, frames_per_channel=50,
                              stop_threshold=0.10, min_frames=400)
    assert res.per > 0.9
    assert 400 <= res.frames < 20 * 50 * cfg.n_streams


def test_measure_per_rejects_empty_budget():
    cfg = make_cfg()
    with pytest.raises(ValueError):
        linksim.measure_per(cfg, [], [], frames_per_channel=0)
