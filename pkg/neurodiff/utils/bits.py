"""Bit-level helpers shared by the cipher, dataset and baseline modules"""

import numpy as np

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF


def rotl32(x: int, r: int) -> int:
    return ((x << r) | (x >> (32 - r))) & MASK32


def rotl32_array(x: np.ndarray, r: int) -> np.ndarray:
    x = x.astype(np.uint32, copy=False)
    return (x << np.uint32(r)) | (x >> np.uint32(32 - r))


def to_hex64(value: int) -> str:
    """16 lowercase hex digits"""
    return f"{int(value) & MASK64:016x}"


def parse_hex(text: str) -> int:
    text = text.strip().lower()
    if text.startswith('0x'):
        text = text[2:]
    return int(text, 16)


def bits_of(values: np.ndarray, width: int = 64) -> np.ndarray:
    """Matrix of shape (N, width); column j is bit j of each value"""
    values = np.asarray(values, dtype=np.uint64)
    shifts = np.arange(width, dtype=np.uint64)
    return ((values[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
