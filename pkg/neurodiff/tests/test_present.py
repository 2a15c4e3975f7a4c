import numpy as np
import pytest

from neurodiff.ciphers.present import (
    MASK80,
    PBOX,
    SBOX,
    add_round_key,
    key_schedule_80,
    p_layer,
    p_layer_batch,
    p_layer_inv,
    present_decrypt,
    present_encrypt,
    present_encrypt_batch,
    round_keys_batch,
    sbox_layer,
    sbox_layer_batch,
    sbox_layer_inv,
    sbox_nibble
)
from neurodiff.error_handler import RoundRangeError
from neurodiff.utils.bits import MASK64
from neurodiff.utils.seeding import philox

ONES_80 = (1 << 80) - 1
ONES_64 = (1 << 64) - 1


@pytest.mark.parametrize('x, expected', [(0x0, 0xC), (0x5, 0x0), (0xF, 0x2), (0xA, 0xF)])
def test_sbox_nibble(x, expected):
    assert sbox_nibble(x) == expected


def test_sbox_is_bijection():
    assert sorted(sbox_nibble(x) for x in range(16)) == list(range(16))


@pytest.mark.parametrize('state, expected', [
    (0x0000000000000000, 0xCCCCCCCCCCCCCCCC),
    (0xFFFFFFFFFFFFFFFF, 0x2222222222222222),
])
def test_sbox_layer_constant_states(state, expected):
    assert sbox_layer(state) == expected


def test_sbox_layer_is_nibblewise():
    state = 0x0123456789ABCDEF
    out = sbox_layer(state)
    for j in range(16):
        assert (out >> (4 * j)) & 0xF == SBOX[(state >> (4 * j)) & 0xF]
    assert sbox_layer_inv(out) == state


@pytest.mark.parametrize('bit, target', [(0, 0), (1, 16), (7, 49), (62, 47), (63, 63)])
def test_p_layer_single_bits(bit, target):
    assert p_layer(1 << bit) == 1 << target
    assert PBOX[bit] == target


def test_p_layer_zero_and_inverse():
    assert p_layer(0) == 0
    state = 0xDEADBEEF01234567
    assert p_layer_inv(p_layer(state)) == state


def test_p_layer_cycles_divide_63():
    for bit in range(63):
        state = 1 << bit
        for _ in range(63):
            state = p_layer(state)
        assert state == 1 << bit


def test_add_round_key():
    x = 0x0123456789ABCDEF
    assert add_round_key(x, 0) == x
    assert add_round_key(x, x) == 0
    assert add_round_key(0xF0F0F0F0F0F0F0F0, 0x0F0F0F0F0F0F0F0F) == MASK64


def test_key_schedule_first_key_is_top_64_bits():
    key = 0x0123456789ABCDEF1357
    keys = key_schedule_80(key, 5).keys
    assert len(keys) == 6
    assert keys[0] == key >> 16


@pytest.mark.parametrize('key, register', [
    # k18 lands on k79, top nibble 0x8 goes through the S-box
    (1 << 18, (SBOX[0x8] << 76) | (1 << 15)),
    # k40 lands on k21, top nibble 0x0 goes through the S-box
    (1 << 40, (SBOX[0x0] << 76) | (1 << 21) | (1 << 15)),
    (0, (SBOX[0x0] << 76) | (1 << 15)),
])
def test_key_schedule_single_update(key, register):
    assert key_schedule_80(key, 1).keys[1] == register >> 16


def test_key_schedule_length_for_full_cipher():
    assert key_schedule_80(0, 31).rounds == 31
    assert len(key_schedule_80(0, 31).keys) == 32


@pytest.mark.parametrize('plaintext, key, ciphertext', [
    (0, 0, 0x5579C1387B228445),
    (0, ONES_80, 0xE72C46C0F5945049),
    (ONES_64, 0, 0xA112FFC72F68417B),
    (ONES_64, ONES_80, 0x3333DCD3213210D2),
])
def test_full_round_known_answers(plaintext, key, ciphertext):
    assert present_encrypt(plaintext, key, 31) == ciphertext
    assert present_decrypt(ciphertext, key, 31) == plaintext


def test_roundtrip_random():
    rng = philox(7)
    for _ in range(1000):
        pt = int.from_bytes(rng.bytes(8), 'big')
        key = int.from_bytes(rng.bytes(10), 'big')
        rounds = int(rng.integers(1, 32))
        ct = present_encrypt(pt, key, rounds)
        assert present_encrypt(pt, key, rounds) == ct
        assert present_decrypt(ct, key, rounds) == pt


@pytest.mark.parametrize('rounds', [0, 32, -1])
def test_round_range_rejected(rounds):
    with pytest.raises(RoundRangeError):
        present_encrypt(0, 0, rounds)


def test_key_wider_than_80_bits_rejected():
    with pytest.raises(ValueError):
        key_schedule_80(MASK80 + 1, 3)


def test_batch_matches_scalar():
    rng = philox(11)
    n = 64
    pts = rng.integers(0, np.iinfo(np.uint64).max, size=n, dtype=np.uint64, endpoint=True)
    hi = rng.integers(0, 1 << 16, size=n, dtype=np.uint64)
    lo = rng.integers(0, np.iinfo(np.uint64).max, size=n, dtype=np.uint64, endpoint=True)
    for rounds in (1, 3, 31):
        keys = round_keys_batch(hi, lo, rounds)
        assert keys.shape == (n, rounds + 1)
        out = present_encrypt_batch(pts, keys, rounds)
        for j in range(n):
            key = (int(hi[j]) << 64) | int(lo[j])
            assert list(keys[j]) == list(key_schedule_80(key, rounds).keys)
            assert int(out[j]) == present_encrypt(int(pts[j]), key, rounds)


def test_batch_layers_match_scalar():
    states = np.array([0, MASK64, 0x0123456789ABCDEF, 1 << 63], dtype=np.uint64)
    assert [int(v) for v in sbox_layer_batch(states)] == [sbox_layer(int(s)) for s in states]
    assert [int(v) for v in p_layer_batch(states)] == [p_layer(int(s)) for s in states]


def test_batch_zero_rounds_is_identity():
    pts = np.array([1, 2, 3], dtype=np.uint64)
    keys = round_keys_batch(np.zeros(3, dtype=np.uint64), np.zeros(3, dtype=np.uint64), 0)
    assert np.array_equal(present_encrypt_batch(pts, keys, 0), pts)


def test_encryption_is_injective_on_sample():
    rng = philox(3)
    pts = np.unique(rng.integers(0, np.iinfo(np.uint64).max, size=20000, dtype=np.uint64, endpoint=True))
    hi = np.full(pts.shape, 0x1234, dtype=np.uint64)
    lo = np.full(pts.shape, 0x0FEDCBA987654321, dtype=np.uint64)
    out = present_encrypt_batch(pts, round_keys_batch(hi, lo, 4), 4)
    assert np.unique(out).shape == pts.shape
