"""Round-reduced Simeck64/128 (word size 32, four key words).

A block is left||right with left the most significant word. The master key
is loaded most-significant word first: words (w3, w2, w1, w0) fill the key
register as t2 = w3, t1 = w2, t0 = w1, k0 = w0.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..config import CIPHERS
from ..error_handler import ErrorCode, RoundRangeError
from ..utils.bits import MASK32, MASK64, rotl32, rotl32_array

logger = logging.getLogger(__name__)

MIN_ROUNDS = CIPHERS['simeck']['min_rounds']
MAX_ROUNDS = CIPHERS['simeck']['max_rounds']

# C = 2^32 - 4
ROUND_CONSTANT = (1 << 32) - 4
# First 44 outputs of the z-sequence, bit i = z_i
Z_PREFIX = 0x938BCA3083F
LFSR_PERIOD = 63


@dataclass(frozen=True)
class SimeckState:
    left: int
    right: int

    @classmethod
    def from_block(cls, block: int) -> 'SimeckState':
        return cls((block >> 32) & MASK32, block & MASK32)

    def to_block(self) -> int:
        return ((self.left & MASK32) << 32) | (self.right & MASK32)


@dataclass(frozen=True)
class SimeckKey128:
    # most significant first
    words: Tuple[int, int, int, int]

    @classmethod
    def from_int(cls, key: int) -> 'SimeckKey128':
        if not 0 <= key < (1 << 128):
            raise RoundRangeError("Simeck key must fit in 128 bits", ErrorCode.INVALID_KEY)
        return cls(tuple((key >> (32 * i)) & MASK32 for i in (3, 2, 1, 0)))

    def to_int(self) -> int:
        value = 0
        for word in self.words:
            value = (value << 32) | (word & MASK32)
        return value


@dataclass(frozen=True)
class SimeckRoundKeys:
    keys: Tuple[int, ...]

    @property
    def rounds(self) -> int:
        return len(self.keys)


def check_rounds(rounds: int, allow_zero: bool = False) -> None:
    low = 0 if allow_zero else MIN_ROUNDS
    if not low <= rounds <= MAX_ROUNDS:
        raise RoundRangeError(
            f"Simeck64/128 supports {low}..{MAX_ROUNDS} rounds, got {rounds}",
            ErrorCode.INVALID_ROUNDS
        )


def lfsr_sequence(length: int) -> List[int]:
    """z-sequence from x^6 + x + 1, all-ones initial state"""
    bits = [1] * 6
    while len(bits) < length:
        i = len(bits) - 6
        bits.append(bits[i + 1] ^ bits[i])
    return bits[:length]


Z_SEQUENCE = tuple(lfsr_sequence(MAX_ROUNDS))


def f32(z: int) -> int:
    return (z & rotl32(z, 5)) ^ rotl32(z, 1)


def simeck_round(state: SimeckState, subkey: int) -> SimeckState:
    return SimeckState((state.right ^ f32(state.left) ^ subkey) & MASK32, state.left)


def simeck_round_inv(state: SimeckState, subkey: int) -> SimeckState:
    return SimeckState(state.right, (state.left ^ f32(state.right) ^ subkey) & MASK32)


def _as_key(key) -> SimeckKey128:
    return key if isinstance(key, SimeckKey128) else SimeckKey128.from_int(key)


def key_schedule_64_128(key, rounds: int, z: Sequence[int] = Z_SEQUENCE) -> SimeckRoundKeys:
    check_rounds(rounds)
    t2, t1, t0, k = _as_key(key).words
    t = [t0, t1, t2]
    keys = [k]
    for i in range(rounds - 1):
        # the round function with C ^ z_i in place of a subkey
        new_t, k = (k ^ f32(t[0]) ^ ROUND_CONSTANT ^ z[i]) & MASK32, t[0]
        t = [t[1], t[2], new_t]
        keys.append(k)
    return SimeckRoundKeys(tuple(keys))


def simeck_encrypt(plaintext: int, key, rounds: int, z: Sequence[int] = Z_SEQUENCE) -> int:
    state = SimeckState.from_block(plaintext & MASK64)
    for subkey in key_schedule_64_128(key, rounds, z).keys:
        state = simeck_round(state, subkey)
    return state.to_block()


def simeck_decrypt(ciphertext: int, key, rounds: int) -> int:
    state = SimeckState.from_block(ciphertext & MASK64)
    for subkey in reversed(key_schedule_64_128(key, rounds).keys):
        state = simeck_round_inv(state, subkey)
    return state.to_block()


# Vectorised path

def _f32_array(z: np.ndarray) -> np.ndarray:
    return (z & rotl32_array(z, 5)) ^ rotl32_array(z, 1)


def round_keys_batch(key_hi: np.ndarray, key_lo: np.ndarray, rounds: int) -> np.ndarray:
    """Subkey matrix of shape (N, rounds) from 128-bit keys split into two uint64 halves"""
    check_rounds(rounds, allow_zero=True)
    key_hi = np.asarray(key_hi, dtype=np.uint64)
    key_lo = np.asarray(key_lo, dtype=np.uint64)
    mask = np.uint64(MASK32)
    t2 = (key_hi >> np.uint64(32)).astype(np.uint32)
    t1 = (key_hi & mask).astype(np.uint32)
    t0 = (key_lo >> np.uint64(32)).astype(np.uint32)
    k = (key_lo & mask).astype(np.uint32)

    out = np.empty((key_hi.shape[0], rounds), dtype=np.uint32)
    t = [t0, t1, t2]
    for i in range(rounds):
        out[:, i] = k
        if i == rounds - 1:
            break
        constant = np.uint32(ROUND_CONSTANT ^ Z_SEQUENCE[i])
        new_t, k = k ^ _f32_array(t[0]) ^ constant, t[0]
        t = [t[1], t[2], new_t]
    return out


def simeck_encrypt_batch(plaintexts: np.ndarray, round_keys: np.ndarray, rounds: int) -> np.ndarray:
    """Encrypt each row under its own subkeys; rounds = 0 is the identity"""
    check_rounds(rounds, allow_zero=True)
    blocks = np.asarray(plaintexts, dtype=np.uint64)
    if rounds == 0:
        return blocks.copy()
    left = (blocks >> np.uint64(32)).astype(np.uint32)
    right = (blocks & np.uint64(MASK32)).astype(np.uint32)
    for i in range(rounds):
        left, right = right ^ _f32_array(left) ^ round_keys[:, i], left
    return (left.astype(np.uint64) << np.uint64(32)) | right.astype(np.uint64)
