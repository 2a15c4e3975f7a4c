"""Classical difference-distribution baselines.

Full 64-bit output-difference histograms are out of reach, so empirical
distributions are bucketed through a named projection:

    active_nibbles   number of nonzero nibbles (17 buckets, 0..16)
    low_bits:k       the k least significant bits (2^k buckets, 1 <= k <= 16)
    nibble:j         value of nibble j, j = 0 for the least significant (16 buckets)

The projection name travels with every histogram and report.
"""

import io
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from .ciphers.present import SBOX, p_layer
from .config import BASELINE
from .diff_gen import output_differences
from .error_handler import ConfigError, DatasetError, DifferentialError, ErrorCode
from .utils.seeding import philox, random_uint64

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DdtTable:
    counts: np.ndarray

    def __getitem__(self, index):
        return self.counts[index]


@dataclass(frozen=True)
class DiffHistogram:
    counts: np.ndarray
    projection: str
    cipher: str
    rounds: int
    delta: int
    samples: int
    seed: int

    @property
    def buckets(self) -> int:
        return int(self.counts.shape[0])


@dataclass(frozen=True)
class ChiSquareReport:
    statistic: float
    dof: int
    samples: int
    buckets: int
    projection: str
    alpha: float
    p_value: float
    reject: bool

    def to_dict(self) -> Dict:
        return {
            'statistic': self.statistic,
            'dof': self.dof,
            'samples': self.samples,
            'buckets': self.buckets,
            'projection': self.projection,
            'alpha': self.alpha,
            'p_value': self.p_value,
            'reject': self.reject
        }


def sbox_ddt(sbox: Sequence[int] = SBOX) -> DdtTable:
    if sorted(sbox) != list(range(16)):
        raise ConfigError("S-box must be a bijection on 4-bit values", ErrorCode.INVALID_CONFIG)
    counts = np.zeros((16, 16), dtype=np.int64)
    for x in range(16):
        for din in range(16):
            counts[din, sbox[x] ^ sbox[x ^ din]] += 1
    return DdtTable(counts)


def differential_uniformity(ddt: DdtTable) -> int:
    return int(ddt.counts[1:].max())


def ddt_to_text(ddt: DdtTable) -> str:
    width = max(3, len(str(int(ddt.counts.max()))) + 1)
    lines = [' ' * 4 + ''.join(f"{j:>{width}x}" for j in range(16))]
    for i in range(16):
        lines.append(f"{i:>3x} " + ''.join(f"{int(v):>{width}d}" for v in ddt.counts[i]))
    return '\n'.join(lines) + '\n'


def ddt_to_csv(ddt: DdtTable) -> str:
    frame = pd.DataFrame(ddt.counts, index=[f"{i:x}" for i in range(16)], columns=[f"{j:x}" for j in range(16)])
    frame.index.name = 'din'
    buffer = io.StringIO()
    frame.to_csv(buffer, lineterminator='\n')
    return buffer.getvalue()


def projection(name: str) -> Tuple[Callable[[np.ndarray], np.ndarray], int]:
    """Bucket function and bucket count for a projection name"""
    if name == 'active_nibbles':
        def active(values: np.ndarray) -> np.ndarray:
            nibbles = (values[:, None] >> (np.arange(16, dtype=np.uint64) * np.uint64(4))) & np.uint64(0xF)
            return np.count_nonzero(nibbles, axis=1)
        return active, 17

    kind, _, arg = name.partition(':')
    try:
        k = int(arg)
    except ValueError:
        raise ConfigError(f"Unknown projection '{name}'", ErrorCode.INVALID_CONFIG) from None

    if kind == 'low_bits' and 1 <= k <= 16:
        mask = np.uint64((1 << k) - 1)
        return (lambda values: (values & mask).astype(np.int64)), 1 << k
    if kind == 'nibble' and 0 <= k <= 15:
        shift = np.uint64(4 * k)
        return (lambda values: ((values >> shift) & np.uint64(0xF)).astype(np.int64)), 16
    raise ConfigError(f"Unknown projection '{name}'", ErrorCode.INVALID_CONFIG)


def empirical_diff_distribution(
    cipher: str,
    rounds: int,
    delta: int,
    samples: int,
    buckets: str = BASELINE['projection'],
    seed: int = 0
) -> DiffHistogram:
    """Histogram of a projection of C ^ C' over random (P, K).

    cipher = "random" draws the differences uniformly instead.
    """
    if samples < 1:
        raise DatasetError("samples must be at least 1", ErrorCode.INSUFFICIENT_SAMPLES)
    if delta == 0:
        raise DifferentialError("delta must be nonzero", ErrorCode.ZERO_DIFFERENTIAL)

    bucket_of, size = projection(buckets)
    if cipher == 'random':
        values = random_uint64(philox(seed), samples)
    else:
        values = output_differences(cipher, rounds, [delta], samples, seed)[:, 0]
    counts = np.bincount(bucket_of(values), minlength=size)
    return DiffHistogram(counts, buckets, cipher, rounds, delta, samples, seed)


def _pearson(counts: np.ndarray, expected: np.ndarray, projection_name: str, alpha: float) -> ChiSquareReport:
    mask = expected > 0
    if np.any(counts[~mask] > 0):
        statistic = float('inf')
    else:
        statistic = float(np.sum((counts[mask] - expected[mask]) ** 2 / expected[mask]))
    dof = int(counts.shape[0]) - 1
    p_value = float(stats.chi2.sf(statistic, dof))
    return ChiSquareReport(
        statistic=statistic,
        dof=dof,
        samples=int(counts.sum()),
        buckets=int(counts.shape[0]),
        projection=projection_name,
        alpha=alpha,
        p_value=p_value,
        reject=p_value < alpha
    )


def chi_square_uniform(histogram: Union[DiffHistogram, np.ndarray],
                       alpha: float = BASELINE['alpha']) -> ChiSquareReport:
    if isinstance(histogram, DiffHistogram):
        counts, name = histogram.counts, histogram.projection
    else:
        counts, name = np.asarray(histogram), 'raw'
    counts = counts.astype(np.float64)
    total = counts.sum()
    if total < 5 * counts.shape[0]:
        raise DatasetError(
            f"{int(total)} samples is too few for {counts.shape[0]} buckets (need >= 5 per bucket)",
            ErrorCode.INSUFFICIENT_SAMPLES
        )
    expected = np.full_like(counts, total / counts.shape[0])
    return _pearson(counts, expected, name, alpha)


def chi_square_expected(counts: np.ndarray, probabilities: np.ndarray,
                        alpha: float = BASELINE['alpha'], projection_name: str = 'raw') -> ChiSquareReport:
    """Goodness of fit of observed counts against predicted probabilities.

    Buckets with expected count below 5 are pooled into one remainder bucket.
    """
    counts = np.asarray(counts, dtype=np.float64)
    expected = np.asarray(probabilities, dtype=np.float64) * counts.sum()
    small = expected < 5
    if small.any():
        counts = np.append(counts[~small], counts[small].sum())
        expected = np.append(expected[~small], expected[small].sum())
        if expected[-1] == 0:
            counts, expected = counts[:-1], expected[:-1]
    return _pearson(counts, expected, projection_name, alpha)


def single_round_prediction(delta: int, sbox: Sequence[int] = SBOX) -> Dict[int, float]:
    """Exact one-round PRESENT output-difference distribution for a delta with one active nibble"""
    active = [j for j in range(16) if (delta >> (4 * j)) & 0xF]
    if len(active) != 1:
        raise DifferentialError("single_round_prediction needs exactly one active nibble",
                                ErrorCode.INVALID_SHIFT)
    j = active[0]
    din = (delta >> (4 * j)) & 0xF
    row = sbox_ddt(sbox).counts[din]
    return {p_layer(dout << (4 * j)): int(row[dout]) / 16.0 for dout in range(16) if row[dout]}


def summarize_histogram(histogram: DiffHistogram, alpha: Optional[float] = None) -> Dict:
    report = chi_square_uniform(histogram, alpha if alpha is not None else BASELINE['alpha'])
    nonzero = histogram.counts[histogram.counts > 0]
    return {
        'cipher': histogram.cipher,
        'rounds': histogram.rounds,
        'delta': f"{histogram.delta:016x}",
        'projection': histogram.projection,
        'samples': histogram.samples,
        'max_min_ratio': float(histogram.counts.max() / histogram.counts.min()) if histogram.counts.min() else float('inf'),
        'occupied_buckets': int(nonzero.shape[0]),
        **report.to_dict()
    }
