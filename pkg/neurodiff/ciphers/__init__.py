"""Cipher registry used by dataset generation, oracles and the baseline"""

from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from ..config import CIPHERS
from ..error_handler import CipherError, ErrorCode
from . import present, simeck


@dataclass(frozen=True)
class BlockCipher:
    name: str
    key_bits: int
    full_rounds: int
    check_rounds: Callable[..., None]
    expand_keys: Callable[[np.ndarray, np.ndarray, int], np.ndarray]
    encrypt_batch: Callable[[np.ndarray, np.ndarray, int], np.ndarray]

    def random_keys(self, rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray]:
        """Keys as (hi, lo) uint64 halves; hi carries key_bits - 64 bits"""
        words = rng.integers(0, np.iinfo(np.uint64).max, size=(size, 2), dtype=np.uint64, endpoint=True)
        hi = words[:, 0]
        if self.key_bits < 128:
            hi = hi & np.uint64((1 << (self.key_bits - 64)) - 1)
        return hi, words[:, 1]

    def encrypt(self, plaintexts: np.ndarray, key_hi: np.ndarray, key_lo: np.ndarray, rounds: int) -> np.ndarray:
        return self.encrypt_batch(plaintexts, self.expand_keys(key_hi, key_lo, rounds), rounds)


CIPHER_REGISTRY: Dict[str, BlockCipher] = {
    'present': BlockCipher(
        name='present',
        key_bits=CIPHERS['present']['key_bits'],
        full_rounds=CIPHERS['present']['full_rounds'],
        check_rounds=present.check_rounds,
        expand_keys=present.round_keys_batch,
        encrypt_batch=present.present_encrypt_batch
    ),
    'simeck': BlockCipher(
        name='simeck',
        key_bits=CIPHERS['simeck']['key_bits'],
        full_rounds=CIPHERS['simeck']['full_rounds'],
        check_rounds=simeck.check_rounds,
        expand_keys=simeck.round_keys_batch,
        encrypt_batch=simeck.simeck_encrypt_batch
    )
}


def get_cipher(name: str) -> BlockCipher:
    try:
        return CIPHER_REGISTRY[name.lower()]
    except KeyError:
        raise CipherError(
            f"Unknown cipher '{name}', expected one of {sorted(CIPHER_REGISTRY)}",
            ErrorCode.UNKNOWN_CIPHER
        ) from None
