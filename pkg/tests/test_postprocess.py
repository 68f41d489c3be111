import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from lossqkd.postprocess import (
    BitKey,
    LdpcCode,
    RateInsufficient,
    ToeplitzSeed,
    collision_probe,
    ec_leakage,
    privacy_amplify,
    reconcile,
    split_blocks,
)
from lossqkd.postprocess.bitkey import KeyFileError, concat
from lossqkd.postprocess.toeplitz import toeplitz_hash

bit_lists = st.lists(st.integers(0, 1), min_size=1, max_size=300)


# ---------------------------------------------------------------- keys
@given(bit_lists)
def test_key_file_round_trip(bits):
    key = BitKey(np.array(bits))
    assert BitKey.from_bytes(key.to_bytes()) == key
    assert len(key.to_bytes()) == 16 + (len(bits) + 7) // 8


def test_key_file_layout(tmp_path):
    key = BitKey(np.array([1, 0, 0, 0, 0, 0, 0, 0, 1]))
    data = key.to_bytes()
    assert data[:4] == b"LQKY"
    assert int.from_bytes(data[4:6], "little") == 1
    assert int.from_bytes(data[8:16], "little") == 9
    assert data[16:] == bytes([0x01, 0x01])
    key.write(tmp_path / "k.bin")
    assert BitKey.read(tmp_path / "k.bin") == key


@pytest.mark.parametrize(
    "data",
    [b"short", b"XXXX" + bytes(12), b"LQKY\x02\x00" + bytes(10), b"LQKY\x01\x00\x00\x00" + (9).to_bytes(8, "little") + b"\x00"],
)
def test_corrupt_key_files_rejected(data):
    with pytest.raises(KeyFileError):
        BitKey.from_bytes(data)


def test_key_is_immutable_and_validated():
    key = BitKey(np.array([0, 1]))
    with pytest.raises(ValueError):
        key.bits[0] = 1
    with pytest.raises(ValueError):
        BitKey(np.array([0, 2]))
    with pytest.raises(ValueError):
        BitKey(np.zeros((2, 2)))
    assert concat([key, key]).bits.tolist() == [0, 1, 0, 1]
    assert concat([]).length == 0


# ---------------------------------------------------------------- leakage
def test_ec_leakage_examples():
    assert ec_leakage(1.15, 0.0) == 0.0
    assert ec_leakage(1.0, 0.5) == pytest.approx(1.0)
    h = -(0.05 * math.log2(0.05) + 0.95 * math.log2(0.95))
    assert ec_leakage(1.15, 0.05) == pytest.approx(1.15 * h, rel=1e-12)
    with pytest.raises(ValueError):
        ec_leakage(0.5, 0.1)


@given(st.floats(1, 3), st.floats(1, 3), st.floats(0, 0.5), st.floats(0, 0.5))
def test_ec_leakage_monotone(f1, f2, p1, p2):
    fl, fh = sorted((f1, f2))
    pl, ph = sorted((p1, p2))
    assert ec_leakage(fl, pl) <= ec_leakage(fh, pl) + 1e-15
    assert ec_leakage(fl, pl) <= ec_leakage(fl, ph) + 1e-15


# ---------------------------------------------------------------- toeplitz
def test_identity_seed():
    m = 40
    seed = ToeplitzSeed(np.r_[1, np.zeros(2 * m - 2)], m, m)
    key = BitKey.random(m, np.random.default_rng(0))
    assert privacy_amplify(key, m, seed) == key


def test_zero_key_maps_to_zero():
    seed = ToeplitzSeed.random(16, 64, np.random.default_rng(1))
    assert not privacy_amplify(BitKey(np.zeros(64)), 16, seed).bits.any()


def test_64_to_16_matches_dense_oracle():
    rng = np.random.default_rng(2)
    seed = ToeplitzSeed.random(16, 64, rng)
    x = rng.integers(0, 2, 64)
    expected = oracles.gf2_matvec(oracles.gf2_toeplitz(seed.bits, 16, 64), x)
    assert np.array_equal(privacy_amplify(BitKey(x), 16, seed).bits, expected)


def test_seed_matrix_matches_oracle_convention():
    seed = ToeplitzSeed.random(5, 9, np.random.default_rng(3))
    assert np.array_equal(seed.matrix(), oracles.gf2_toeplitz(seed.bits, 5, 9))


@given(st.integers(1, 128), st.data())
def test_privacy_amplification_is_linear(m, data):
    n = data.draw(st.integers(1, m))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    seed = ToeplitzSeed.random(n, m, rng)
    a, b = BitKey.random(m, rng), BitKey.random(m, rng)
    assert privacy_amplify(a ^ b, n, seed) == privacy_amplify(a, n, seed) ^ privacy_amplify(b, n, seed)


def test_permuting_input_changes_output():
    rng = np.random.default_rng(4)
    changed = 0
    for _ in range(50):
        seed = ToeplitzSeed.random(32, 256, rng)
        key = BitKey.random(256, rng)
        perm = BitKey(key.bits[rng.permutation(256)])
        changed += privacy_amplify(key, 32, seed) != privacy_amplify(perm, 32, seed)
    assert changed == 50


def test_seed_and_length_validation():
    rng = np.random.default_rng(5)
    with pytest.raises(ValueError):
        ToeplitzSeed(np.zeros(10), 4, 8)
    with pytest.raises(ValueError):
        ToeplitzSeed(np.zeros(12), 8, 5)
    seed = ToeplitzSeed.random(8, 32, rng)
    with pytest.raises(ValueError):
        privacy_amplify(BitKey.random(32, rng), 4, seed)
    with pytest.raises(ValueError):
        privacy_amplify(BitKey.random(16, rng), 32, ToeplitzSeed.random(16, 16, rng))
    with pytest.raises(ValueError):
        toeplitz_hash(np.zeros(31, dtype=np.uint8), seed)


def test_collision_probe_examples():
    rng = np.random.default_rng(6)
    assert collision_probe(1, 10**5, rng) == pytest.approx(0.5, abs=0.01)
    p = 2.0**-8
    assert abs(collision_probe(8, 10**6, rng) - p) <= 4 * math.sqrt(p / 10**6)
    assert collision_probe(4, 100, rng, identical=True) == 1.0
    with pytest.raises(ValueError):
        collision_probe(21, 10, rng)


# ---------------------------------------------------------------- reconciliation
@pytest.fixture(scope="module")
def code():
    return LdpcCode.regular(2000, 0.2, seed=11)


def test_code_structure(code):
    assert code.n_checks == 1600
    assert code.rate == pytest.approx(0.2)
    assert set(code.column_weights.tolist()) == {3}
    assert code.row_weights.max() - code.row_weights.min() <= 1
    h = code.parity_matrix()
    assert np.array_equal(h.sum(axis=0), code.column_weights)
    assert h.max() == 1


def test_code_is_deterministic(code):
    again = LdpcCode.regular(2000, 0.2, seed=11)
    assert np.array_equal(again.parity_matrix(), code.parity_matrix())
    other = LdpcCode.regular(2000, 0.2, seed=12)
    assert not np.array_equal(other.parity_matrix(), code.parity_matrix())


def test_syndrome_matches_dense_product(code):
    x = np.random.default_rng(7).integers(0, 2, code.length)
    assert np.array_equal(code.syndrome(x), code.parity_matrix().astype(np.int64) @ x % 2)


def test_correctable_threshold(code):
    from lossqkd.secrecy import binary_entropy

    assert binary_entropy(code.correctable_threshold) == pytest.approx(0.8, abs=1e-9)


@pytest.mark.parametrize("kw", [dict(rate=0.0), dict(rate=1.0), dict(length=3)])
def test_bad_code_parameters(kw):
    args = dict(length=100, rate=0.2)
    args.update(kw)
    with pytest.raises(ValueError):
        LdpcCode.regular(**args)


def test_zero_errors(code):
    alice = BitKey.random(code.length, np.random.default_rng(8))
    res = reconcile(alice, alice, code, 0.05, rng=1)
    assert res.success and res.corrected == alice
    assert res.disclosed_bits == code.n_checks + 64


def test_single_flip_in_1000_bit_block():
    code = LdpcCode.regular(1000, 0.2, seed=3)
    rng = np.random.default_rng(9)
    alice = BitKey.random(1000, rng)
    bits = alice.bits.copy()
    bits[417] ^= 1
    res = reconcile(alice, BitKey(bits), code, 0.01, rng=rng)
    assert res.success and res.corrected == alice
    assert res.iterations <= 50


def test_rate_insufficient(code):
    alice = BitKey.random(code.length, np.random.default_rng(10))
    with pytest.raises(RateInsufficient):
        reconcile(alice, alice, code, 0.3)
    with pytest.raises(RateInsufficient):
        reconcile(alice, alice, code, 0.5)


def test_length_checks(code):
    a = BitKey.random(code.length, np.random.default_rng(11))
    with pytest.raises(ValueError):
        reconcile(a, a[:-1], code, 0.05)
    with pytest.raises(ValueError):
        reconcile(a[:-1], a[:-1], code, 0.05)


def test_failed_decode_is_flagged_not_kept(code):
    rng = np.random.default_rng(12)
    alice = BitKey.random(code.length, rng)
    bob = BitKey(alice.bits ^ (rng.random(code.length) < 0.2))
    res = reconcile(alice, bob, code, 0.05, rng=rng)
    assert not res.success
    assert res.corrected != alice


@given(st.integers(0, 2**32 - 1))
def test_success_implies_equality(seed):
    code = LdpcCode.regular(400, 0.2, seed=5)
    rng = np.random.default_rng(seed)
    alice = BitKey.random(code.length, rng)
    bob = BitKey(alice.bits ^ (rng.random(code.length) < rng.uniform(0, 0.2)))
    res = reconcile(alice, bob, code, 0.05, rng=rng)
    if res.success:
        assert res.corrected == alice


def test_split_blocks():
    blocks = split_blocks(np.arange(25), 10)
    assert [b.tolist() for b in blocks] == [list(range(10)), list(range(10, 20))]
