"""Input-differential selection and labeled dataset generation.

A dataset replays the offline procedure: for each fresh random (P, K), encrypt
P and every P ^ delta_i under K and record (C ^ C_i, i). Records are stored
pair-major, so record 4*j + i belongs to pair j and class i when t = 4.

Randomness comes from Philox streams addressed by (seed, block); pairs are
generated in fixed-size blocks, which makes the output independent of how many
workers produced it.
"""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .ciphers import get_cipher
from .config import DATASET, SELECTED_DIFFERENTIALS, WORKERS
from .error_handler import DatasetError, DifferentialError, ErrorCode
from .utils.bits import MASK64, bits_of, parse_hex, to_hex64
from .utils.seeding import block_ranges, philox, random_uint64

logger = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
CSV_HEADER = ['out_diff_hex', 'label']


@dataclass(frozen=True)
class Differential:
    delta: int
    class_index: int

    def __post_init__(self):
        if not 0 < self.delta <= MASK64:
            raise DifferentialError(
                f"Differential must be a nonzero 64-bit value, got {self.delta:#x}",
                ErrorCode.ZERO_DIFFERENTIAL
            )


@dataclass(frozen=True)
class DiffClassSet:
    diffs: Tuple[Differential, ...]

    def __post_init__(self):
        if len(self.diffs) < 2:
            raise DifferentialError("A class set needs at least two differentials", ErrorCode.TOO_FEW_CLASSES)
        if [d.class_index for d in self.diffs] != list(range(len(self.diffs))):
            raise DifferentialError("Class indices must be 0..t-1 in order", ErrorCode.TOO_FEW_CLASSES)
        if len({d.delta for d in self.diffs}) != len(self.diffs):
            raise DifferentialError("Differentials must be pairwise distinct", ErrorCode.DUPLICATE_DIFFERENTIAL)

    @classmethod
    def from_deltas(cls, deltas: Sequence[int]) -> 'DiffClassSet':
        return cls(tuple(Differential(int(delta), i) for i, delta in enumerate(deltas)))

    @property
    def t(self) -> int:
        return len(self.diffs)

    @property
    def deltas(self) -> List[int]:
        return [d.delta for d in self.diffs]

    def to_hex(self) -> List[str]:
        return [to_hex64(d) for d in self.deltas]


@dataclass(frozen=True)
class DiffSample:
    out_diff: int
    label: int


@dataclass
class DiffDataset:
    out_diffs: np.ndarray
    labels: np.ndarray
    cipher_id: str
    rounds: int
    class_set: DiffClassSet
    generator_seed: int
    pair_count: int

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def t(self) -> int:
        return self.class_set.t

    @property
    def samples(self) -> List[DiffSample]:
        return [DiffSample(int(d), int(l)) for d, l in zip(self.out_diffs, self.labels)]

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.t)

    def subset(self, indices: np.ndarray) -> 'DiffDataset':
        return DiffDataset(
            out_diffs=self.out_diffs[indices],
            labels=self.labels[indices],
            cipher_id=self.cipher_id,
            rounds=self.rounds,
            class_set=self.class_set,
            generator_seed=self.generator_seed,
            pair_count=self.pair_count
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'out_diff_hex': [to_hex64(d) for d in self.out_diffs],
            'label': self.labels.astype(np.int64)
        })


def _shift(value: int, nibbles: int) -> int:
    if nibbles >= 0:
        return (value << (4 * nibbles)) & MASK64
    return value >> (4 * -nibbles)


def shift_family(base: int, nibble_shifts: Sequence[int]) -> DiffClassSet:
    """Base differential and its non-circular nibble shifts.

    The base is placed first unless a 0 shift fixes its position explicitly.
    """
    if base == 0:
        raise DifferentialError("Shift family base must be nonzero", ErrorCode.ZERO_DIFFERENTIAL)
    shifts = list(nibble_shifts)
    if 0 not in shifts:
        shifts.insert(0, 0)

    deltas = []
    for s in shifts:
        value = _shift(base, int(s))
        if value == 0:
            raise DifferentialError(
                f"Shifting {base:#018x} by {s} nibbles leaves no active bits",
                ErrorCode.INVALID_SHIFT
            )
        if value in deltas:
            raise DifferentialError(
                f"Shift {s} duplicates differential {value:#018x}",
                ErrorCode.DUPLICATE_DIFFERENTIAL
            )
        deltas.append(value)
    return DiffClassSet.from_deltas(deltas)


def random_class_set(t: int, seed: int) -> DiffClassSet:
    if t < 2:
        raise DifferentialError("A class set needs at least two differentials", ErrorCode.TOO_FEW_CLASSES)
    rng = philox(seed)
    deltas: List[int] = []
    while len(deltas) < t:
        value = int(random_uint64(rng, 1)[0])
        if value != 0 and value not in deltas:
            deltas.append(value)
    return DiffClassSet.from_deltas(deltas)


def selected_class_set() -> DiffClassSet:
    return DiffClassSet.from_deltas(SELECTED_DIFFERENTIALS)


def load_class_file(path: str) -> DiffClassSet:
    deltas = []
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.split('#', 1)[0].strip()
            if line:
                deltas.append(parse_hex(line))
    return DiffClassSet.from_deltas(deltas)


def parse_diff_mode(mode: str, t: int = 4, seed: int = 0) -> DiffClassSet:
    """selected | random | family:<hexbase>:<shifts> | file:<path>"""
    if mode == 'selected':
        return selected_class_set()
    if mode == 'random':
        return random_class_set(t, seed)
    if mode.startswith('family:'):
        try:
            _, base, shifts = mode.split(':', 2)
            return shift_family(parse_hex(base), [int(s) for s in shifts.split(',') if s.strip()])
        except ValueError as e:
            if isinstance(e, DifferentialError):
                raise
            raise DifferentialError(f"Malformed family mode '{mode}': {e}", ErrorCode.INVALID_SHIFT) from e
    if mode.startswith('file:'):
        return load_class_file(mode[len('file:'):])
    raise DifferentialError(f"Unknown differential mode '{mode}'", ErrorCode.INVALID_SHIFT)


def _generate_block(cipher_name: str, rounds: int, deltas: Sequence[int], seed: int,
                    block_index: int, size: int) -> np.ndarray:
    cipher = get_cipher(cipher_name)
    rng = philox(seed, block_index)
    plaintexts = random_uint64(rng, size)
    key_hi, key_lo = cipher.random_keys(rng, size)
    round_keys = cipher.expand_keys(key_hi, key_lo, rounds)

    ciphertexts = cipher.encrypt_batch(plaintexts, round_keys, rounds)
    out = np.empty((size, len(deltas)), dtype=np.uint64)
    for i, delta in enumerate(deltas):
        out[:, i] = ciphertexts ^ cipher.encrypt_batch(plaintexts ^ np.uint64(delta), round_keys, rounds)
    return out


def output_differences(cipher: str, rounds: int, deltas: Sequence[int], pair_count: int,
                       seed: int, workers: Optional[int] = None) -> np.ndarray:
    """Matrix of shape (pair_count, len(deltas)); entry [j, i] is C_j ^ E(P_j ^ delta_i, K_j)"""
    block_cipher = get_cipher(cipher)
    block_cipher.check_rounds(rounds, allow_zero=True)
    if pair_count < 1:
        raise DatasetError("pair_count must be at least 1", ErrorCode.MALFORMED_DATASET)

    workers = workers or WORKERS
    blocks = block_ranges(pair_count, DATASET['block_size'])
    args = [(block_cipher.name, rounds, list(deltas), seed, b, len(r)) for b, r in enumerate(blocks)]

    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_generate_block, *zip(*args)))
    else:
        parts = [_generate_block(*a) for a in args]
    return np.concatenate(parts, axis=0)


def generate_dataset(
    cipher: str,
    rounds: int,
    class_set: DiffClassSet,
    pair_count: int,
    seed: int,
    workers: Optional[int] = None
) -> DiffDataset:
    """Offline dataset: pair_count fresh (P, K) pairs, t records each.

    rounds = 0 replaces the cipher by the identity (debug mode).
    """
    block_cipher = get_cipher(cipher)
    diffs = output_differences(block_cipher.name, rounds, class_set.deltas, pair_count, seed, workers)
    dataset = DiffDataset(
        out_diffs=diffs.reshape(-1),
        labels=np.tile(np.arange(class_set.t, dtype=np.int64), pair_count),
        cipher_id=block_cipher.name,
        rounds=rounds,
        class_set=class_set,
        generator_seed=seed,
        pair_count=pair_count
    )
    logger.info(f"Generated {len(dataset)} records for {block_cipher.name} r={rounds} (t={class_set.t}, seed={seed})")
    return dataset


def generate_random_dataset(pair_count: int, class_set: DiffClassSet, seed: int) -> DiffDataset:
    """Control dataset: uniform out_diffs with the same label layout"""
    rng = philox(seed)
    return DiffDataset(
        out_diffs=random_uint64(rng, pair_count * class_set.t),
        labels=np.tile(np.arange(class_set.t, dtype=np.int64), pair_count),
        cipher_id='random',
        rounds=0,
        class_set=class_set,
        generator_seed=seed,
        pair_count=pair_count
    )


def encode_features(sample: DiffSample, t: int, dtype=np.float32) -> Tuple[np.ndarray, np.ndarray]:
    """64 bit-features (feature j = bit j of out_diff) and the one-hot label"""
    features = bits_of(np.array([sample.out_diff], dtype=np.uint64))[0].astype(dtype)
    target = np.zeros(t, dtype=dtype)
    target[sample.label] = 1.0
    return features, target


def encode_dataset(dataset: DiffDataset, dtype=np.float32) -> Tuple[np.ndarray, np.ndarray]:
    features = bits_of(dataset.out_diffs).astype(dtype)
    targets = np.zeros((len(dataset), dataset.t), dtype=dtype)
    targets[np.arange(len(dataset)), dataset.labels] = 1.0
    return features, targets


def split_train_val(dataset: DiffDataset, val_fraction: float, seed: int) -> Tuple[DiffDataset, DiffDataset]:
    """Stratified split; both parts keep the original record order"""
    if not 0.0 < val_fraction < 1.0:
        raise DatasetError(f"val_fraction must lie in (0, 1), got {val_fraction}", ErrorCode.INVALID_SPLIT)

    rng = philox(seed)
    val_parts = []
    for label in range(dataset.t):
        idx = np.flatnonzero(dataset.labels == label)
        idx = idx[rng.permutation(idx.shape[0])]
        val_parts.append(idx[:int(round(idx.shape[0] * val_fraction))])

    val_mask = np.zeros(len(dataset), dtype=bool)
    val_mask[np.concatenate(val_parts)] = True
    return dataset.subset(np.flatnonzero(~val_mask)), dataset.subset(np.flatnonzero(val_mask))


def _meta_path(path: str) -> str:
    return f"{path}.meta.json"


def save_dataset(dataset: DiffDataset, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    dataset.to_frame().to_csv(path, index=False, lineterminator='\n')
    meta = {
        'format_version': DATASET_FORMAT_VERSION,
        'cipher': dataset.cipher_id,
        'rounds': dataset.rounds,
        'deltas': dataset.class_set.to_hex(),
        'seed': dataset.generator_seed,
        'pair_count': dataset.pair_count,
        'records': len(dataset)
    }
    with open(_meta_path(path), 'w', encoding='utf-8') as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write('\n')


def load_dataset(path: str) -> DiffDataset:
    try:
        with open(_meta_path(path), 'r', encoding='utf-8') as f:
            meta = json.load(f)
        df = pd.read_csv(path, dtype={'out_diff_hex': str, 'label': np.int64})
    except (ValueError, KeyError) as e:
        raise DatasetError(f"Cannot read dataset {path}: {e}", ErrorCode.MALFORMED_DATASET) from e

    if list(df.columns) != CSV_HEADER:
        raise DatasetError(f"{path}: expected header {','.join(CSV_HEADER)}", ErrorCode.MALFORMED_DATASET)
    if meta.get('format_version') != DATASET_FORMAT_VERSION:
        raise DatasetError(f"{path}: unsupported dataset format {meta.get('format_version')}",
                           ErrorCode.MALFORMED_DATASET)

    class_set = DiffClassSet.from_deltas([parse_hex(d) for d in meta['deltas']])
    labels = df['label'].to_numpy(dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= class_set.t):
        raise DatasetError(f"{path}: label outside 0..{class_set.t - 1}", ErrorCode.MALFORMED_DATASET)

    dataset = DiffDataset(
        out_diffs=np.array([int(h, 16) for h in df['out_diff_hex']], dtype=np.uint64),
        labels=labels,
        cipher_id=meta['cipher'],
        rounds=int(meta['rounds']),
        class_set=class_set,
        generator_seed=int(meta['seed']),
        pair_count=int(meta['pair_count'])
    )
    counts = dataset.label_counts()
    if counts.min() != counts.max():
        raise DatasetError(f"{path}: unbalanced labels {counts.tolist()}", ErrorCode.UNBALANCED_LABELS)
    return dataset
