"""Round-reduced PRESENT with the 80-bit key schedule.

Bit 63 of a block is the most significant bit and is state bit 63 of the
permutation layer. The key register is k79..k0 with k79 most significant;
subkey K_i is its leftmost 64 bits. An r-round encryption uses r+1 subkeys,
the last one as post-whitening.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..config import CIPHERS
from ..error_handler import ErrorCode, RoundRangeError
from ..utils.bits import MASK64

logger = logging.getLogger(__name__)

SBOX = (0xC, 0x5, 0x6, 0xB, 0x9, 0x0, 0xA, 0xD, 0x3, 0xE, 0xF, 0x8, 0x4, 0x7, 0x1, 0x2)
SBOX_INV = tuple(SBOX.index(x) for x in range(16))

# P(i) = 16*i mod 63, P(63) = 63
PBOX = tuple(63 if i == 63 else (16 * i) % 63 for i in range(64))
PBOX_INV = tuple(PBOX.index(i) for i in range(64))

MASK80 = (1 << 80) - 1
MIN_ROUNDS = CIPHERS['present']['min_rounds']
MAX_ROUNDS = CIPHERS['present']['max_rounds']

PresentKey80 = int
Block64 = int


@dataclass(frozen=True)
class PresentRoundKeys:
    keys: Tuple[int, ...]

    @property
    def rounds(self) -> int:
        return len(self.keys) - 1


def check_rounds(rounds: int, allow_zero: bool = False) -> None:
    low = 0 if allow_zero else MIN_ROUNDS
    if not low <= rounds <= MAX_ROUNDS:
        raise RoundRangeError(
            f"PRESENT supports {low}..{MAX_ROUNDS} rounds, got {rounds}",
            ErrorCode.INVALID_ROUNDS
        )


def _check_key(key: int) -> None:
    if not 0 <= key <= MASK80:
        raise RoundRangeError("PRESENT key must fit in 80 bits", ErrorCode.INVALID_KEY)


def sbox_nibble(x: int, sbox: Sequence[int] = SBOX) -> int:
    return sbox[x & 0xF]


def sbox_layer(state: int, sbox: Sequence[int] = SBOX) -> int:
    out = 0
    for j in range(16):
        out |= sbox[(state >> (4 * j)) & 0xF] << (4 * j)
    return out


def sbox_layer_inv(state: int) -> int:
    return sbox_layer(state, SBOX_INV)


def p_layer(state: int) -> int:
    out = 0
    for i in range(64):
        out |= ((state >> i) & 1) << PBOX[i]
    return out


def p_layer_inv(state: int) -> int:
    out = 0
    for i in range(64):
        out |= ((state >> i) & 1) << PBOX_INV[i]
    return out


def add_round_key(state: int, subkey: int) -> int:
    return (state ^ subkey) & MASK64


def present_round(state: int, subkey: int, sbox: Sequence[int] = SBOX) -> int:
    """One round: key addition, substitution, permutation"""
    return p_layer(sbox_layer(add_round_key(state, subkey), sbox))


def key_schedule_80(key: PresentKey80, rounds: int, sbox: Sequence[int] = SBOX) -> PresentRoundKeys:
    check_rounds(rounds)
    _check_key(key)

    register = key
    keys = [register >> 16]
    for i in range(1, rounds + 1):
        register = ((register << 61) | (register >> 19)) & MASK80
        register = (sbox[register >> 76] << 76) | (register & ((1 << 76) - 1))
        register ^= i << 15
        keys.append(register >> 16)
    return PresentRoundKeys(tuple(keys))


def present_encrypt(plaintext: Block64, key: PresentKey80, rounds: int, sbox: Sequence[int] = SBOX) -> Block64:
    round_keys = key_schedule_80(key, rounds, sbox).keys
    state = plaintext & MASK64
    for i in range(rounds):
        state = present_round(state, round_keys[i], sbox)
    return add_round_key(state, round_keys[rounds])


def present_decrypt(ciphertext: Block64, key: PresentKey80, rounds: int) -> Block64:
    round_keys = key_schedule_80(key, rounds).keys
    state = add_round_key(ciphertext & MASK64, round_keys[rounds])
    for i in reversed(range(rounds)):
        state = sbox_layer_inv(p_layer_inv(state))
        state = add_round_key(state, round_keys[i])
    return state


# Vectorised path: uint64 arrays, one row per (plaintext, key) pair

def round_keys_batch(key_hi: np.ndarray, key_lo: np.ndarray, rounds: int) -> np.ndarray:
    """Subkey matrix of shape (N, rounds + 1).

    The 80-bit register is carried as (hi, lo): hi holds k79..k64 in its low
    16 bits, lo holds k63..k0.
    """
    check_rounds(rounds, allow_zero=True)
    hi = np.asarray(key_hi, dtype=np.uint64) & np.uint64(0xFFFF)
    lo = np.asarray(key_lo, dtype=np.uint64).copy()
    table = np.asarray(SBOX, dtype=np.uint64)

    out = np.empty((hi.shape[0], rounds + 1), dtype=np.uint64)
    out[:, 0] = (hi << np.uint64(48)) | (lo >> np.uint64(16))
    for i in range(1, rounds + 1):
        # rotate the 80-bit register left by 61
        new_lo = (lo >> np.uint64(19)) | (hi << np.uint64(45)) | ((lo & np.uint64(7)) << np.uint64(61))
        new_hi = (lo >> np.uint64(3)) & np.uint64(0xFFFF)
        top = table[(new_hi >> np.uint64(12)).astype(np.intp)]
        hi = (top << np.uint64(12)) | (new_hi & np.uint64(0x0FFF))
        lo = new_lo ^ np.uint64(i << 15)
        out[:, i] = (hi << np.uint64(48)) | (lo >> np.uint64(16))
    return out


def sbox_layer_batch(states: np.ndarray, sbox: Sequence[int] = SBOX) -> np.ndarray:
    table = np.asarray(sbox, dtype=np.uint64)
    out = np.zeros_like(states)
    for j in range(16):
        shift = np.uint64(4 * j)
        out |= table[((states >> shift) & np.uint64(0xF)).astype(np.intp)] << shift
    return out


def p_layer_batch(states: np.ndarray) -> np.ndarray:
    out = np.zeros_like(states)
    one = np.uint64(1)
    for i in range(64):
        out |= ((states >> np.uint64(i)) & one) << np.uint64(PBOX[i])
    return out


def present_encrypt_batch(plaintexts: np.ndarray, round_keys: np.ndarray, rounds: int) -> np.ndarray:
    """Encrypt each row under its own subkeys; rounds = 0 is the identity"""
    check_rounds(rounds, allow_zero=True)
    state = np.asarray(plaintexts, dtype=np.uint64).copy()
    if rounds == 0:
        return state
    for i in range(rounds):
        state = p_layer_batch(sbox_layer_batch(state ^ round_keys[:, i]))
    return state ^ round_keys[:, rounds]
