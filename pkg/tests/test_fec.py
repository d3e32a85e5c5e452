from fractions import Fraction

import numpy as np
import pytest

from mpnlsim import fec


@pytest.fixture(scope="module")
def code():
    return fec.default_code()


def test_code_dimensions(code):
    assert (code.n, code.k) == (1296, 648)
    assert code.rate == Fraction(1, 2)


def test_parity_matrix_full_rank(code):
    h = code.parity_check.astype(np.float64)
    # GF(2) rank via elimination
    h = h.copy().astype(np.uint8)
    rank, rows, cols = 0, h.shape[0], h.shape[1]
    r = 0
    for c in range(cols):
        piv = np.nonzero(h[r:, c])[0]
        if piv.size == 0:
            continue
        p = piv[0] + r
        h[[r, p]] = h[[p, r]]
        mask = h[:, c].astype(bool).copy()
        mask[r] = False
        h[mask] ^= h[r]
        r += 1
        if r == rows:
            break
    assert r == code.n - code.k


def test_girth_at_least_six(code):
    h = code.parity_check
    m = h.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            assert np.sum(h[i] & h[j]) <= 1


def test_encode_satisfies_parity(code):
    rng = np.random.default_rng(0)
    info = rng.integers(0, 2, (8, code.k)).astype(np.uint8)
    cw = fec.ldpc_encode(code, info)
    assert cw.shape == (8, code.n)
    assert np.array_equal(cw[:, :code.k], info)       # systematic
    assert not fec.ldpc_syndrome(code, cw).any()


def test_encode_linearity(code):
    rng = np.random.default_rng(1)
    a = rng.integers(0, 2, code.k).astype(np.uint8)
    b = rng.integers(0, 2, code.k).astype(np.uint8)
    ca, cb = fec.ldpc_encode(code, a), fec.ldpc_encode(code, b)
    assert np.array_equal(fec.ldpc_encode(code, a ^ b), ca ^ cb)


def test_encode_zero_word(code):
    cw = fec.ldpc_encode(code, np.zeros(code.k, dtype=np.uint8))
    assert not cw.any()


def test_decode_noiseless(code):
    rng = np.random.default_rng(2)
    info = rng.integers(0, 2, (4, code.k)).astype(np.uint8)
    cw = fec.ldpc_encode(code, info)
    llr = 8.0 * (1 - 2 * cw.astype(np.float64))      # positive <=> bit 0
    out, conv = fec.ldpc_decode(code, llr)
    assert conv.all()
    assert np.array_equal(out, info)


def test_decode_corrects_scattered_errors(code):
    rng = np.random.default_rng(3)
    info = rng.integers(0, 2, code.k).astype(np.uint8)
    cw = fec.ldpc_encode(code, info)
    llr = 4.0 * (1 - 2 * cw.astype(np.float64))
    flips = rng.choice(code.n, 20, replace=False)
    llr[flips] *= -1
    out, conv = fec.ldpc_decode(code, llr[None])
    assert conv[0]
    assert np.array_equal(out[0], info)


def test_decode_awgn_waterfall(code):
    """Coded BPSK over AWGN: near-certain failure at low SNR, near-certain
    success a couple of dB later."""
    rng = np.random.default_rng(4)
    n_words = 40
    info = rng.integers(0, 2, (n_words, code.k)).astype(np.uint8)
    cw = fec.ldpc_encode(code, info)
    tx = 1 - 2 * cw.astype(np.float64)

    def wer(snr_db):
        nv = 10 ** (-snr_db / 10)
        y = tx + rng.normal(0, np.sqrt(nv), tx.shape)
        out, conv = fec.ldpc_decode(code, 2 * y / nv)
        ok = conv & np.all(out == info, axis=1)
        return 1 - ok.mean()

    assert wer(-2.0) > 0.9
    assert wer(3.0) < 0.05


def test_decode_unconverged_flag(code):
    rng = np.random.default_rng(5)
    llr = rng.normal(0, 1, (2, code.n))     # pure noise, no codeword
    _, conv = fec.ldpc_decode(code, llr, max_iter=5)
    assert not conv.any()


def test_decode_batch_matches_single(code):
    rng = np.random.default_rng(6)
    info = rng.integers(0, 2, (3, code.k)).astype(np.uint8)
    cw = fec.ldpc_encode(code, info)
    llr = 2.0 * (1 - 2 * cw.astype(np.float64))
    llr += rng.normal(0, 0.8, llr.shape)
    batch_out, batch_conv = fec.ldpc_decode(code, llr)
    for i in range(3):
        single_out, single_conv = fec.ldpc_decode(code, llr[i][None])
        assert np.array_equal(batch_out[i], single_out[0])
        assert batch_conv[i] == single_conv[0]


# ---------------------------------------------------------------------------
# rate matching
# ---------------------------------------------------------------------------

def test_rate_match_identity(code):
    rm = fec.design_rate_match(code, Fraction(1, 2), code.n)
    assert rm.n_shortened == 0 and rm.n_punctured == 0
    assert rm.method == "none"


def test_rate_match_low_rate_shortens(code):
    rm = fec.design_rate_match(code, Fraction(120, 1024), 720)
    assert rm.k_tb == round(720 * 120 / 1024)
    assert rm.n_shortened == code.k - rm.k_tb
    assert abs(rm.effective_rate - 120 / 1024) <= 0.02 * 120 / 1024
    assert "shorten" in rm.method


def test_rate_match_high_rate_punctures(code):
    rm = fec.design_rate_match(code, Fraction(3, 4), 800)
    assert rm.k_tb == 600
    assert rm.n_punctured == (code.n - code.k) - 200
    assert rm.method.endswith("puncture")


def test_rate_match_rejects_infeasible(code):
    with pytest.raises(ValueError):
        fec.design_rate_match(code, Fraction(1, 2), 2 * code.n)
    with pytest.raises(ValueError):
        fec.design_rate_match(code, Fraction(999, 1000), 1000)
    with pytest.raises(ValueError):
        fec.design_rate_match(code, Fraction(3, 2), 100)


def test_rate_matched_roundtrip_noiseless(code):
    rng = np.random.default_rng(7)
    for rate, n_tx in ((Fraction(1, 3), 900), (Fraction(193, 1024), 576),
                       (Fraction(3, 4), 800)):
        rm = fec.design_rate_match(code, rate, n_tx)
        info = rng.integers(0, 2, (4, rm.k_tb)).astype(np.uint8)
        tx = fec.encode_rate_matched(code, rm, info)
        assert tx.shape == (4, n_tx)
        llr = 8.0 * (1 - 2 * tx.astype(np.float64))
        out, conv = fec.decode_rate_matched(code, rm, llr)
        assert conv.all()
        assert np.array_equal(out, info)


def test_rate_matched_low_rate_outcodes_mother(code):
    """Heavy shortening should decode reliably at an SNR where the
    un-shortened rate-1/2 code mostly fails."""
    rng = np.random.default_rng(8)
    rm = fec.design_rate_match(code, Fraction(1, 4), 864)
    info = rng.integers(0, 2, (30, rm.k_tb)).astype(np.uint8)
    tx = fec.encode_rate_matched(code, rm, info)
    nv = 10 ** (-0.15)                      # 1.5 dB: mother code mostly fails
    y = (1 - 2 * tx.astype(np.float64)) + rng.normal(0, np.sqrt(nv), tx.shape)
    out, conv = fec.decode_rate_matched(code, rm, 2 * y / nv)
    ok = conv & np.all(out == info, axis=1)
    assert ok.mean() > 0.9


def test_alist_roundtrip(code, tmp_path):
    p = tmp_path / "code.alist"
    fec.save_alist(code, p)
    back = fec.load_alist(p)
    assert np.array_equal(back.parity_check, code.parity_check)
