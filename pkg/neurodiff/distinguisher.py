"""Offline/online differential distinguisher.

Offline: train a classifier on output differences of the known cipher and
keep it when validation accuracy beats chance (1/t), retrying with fresh data
up to MAX_RETRIES times.

Online: replay the same chosen-plaintext procedure against an unknown oracle,
evaluate the frozen model on the resulting records and call the oracle the
cipher when accuracy exceeds 1/t by more than z standard deviations of the
chance-level binomial:

    sigma = sqrt((1/t) * (1 - 1/t) / N),  N = t * query_pairs records
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .ciphers import get_cipher
from .config import DATASET, DISTINGUISHER, MAX_RETRIES
from .diff_gen import DiffClassSet, DiffDataset, encode_dataset, generate_dataset, split_train_val
from .error_handler import (
    ErrorCode,
    OracleError,
    ShapeError,
    TrainingDivergedError,
    error_handler,
    retry_on_error
)
from .neural import MlpArch, MlpModel, TrainConfig, TrainReport, evaluate_accuracy, init_model, train
from .utils.bits import bits_of
from .utils.seeding import derive_seed, philox, random_uint64

logger = logging.getLogger(__name__)


class OracleKind(str, Enum):
    CIPHER = 'CIPHER'
    RANDOM = 'RANDOM'


class Oracle(ABC):
    """Black box mapping 64-bit blocks to 64-bit blocks"""

    kind: OracleKind

    def __init__(self):
        self.queries = 0

    @abstractmethod
    def _respond(self, blocks: np.ndarray) -> np.ndarray:
        ...

    def query(self, blocks: np.ndarray) -> np.ndarray:
        blocks = np.asarray(blocks, dtype=np.uint64)
        if blocks.size == 0:
            raise OracleError("Empty oracle query", ErrorCode.EMPTY_QUERY)
        self.queries += int(blocks.size)
        return self._respond(blocks)


class CipherOracle(Oracle):
    """Round-reduced cipher under a hidden key drawn from `seed`"""

    kind = OracleKind.CIPHER

    def __init__(self, cipher: str, rounds: int, seed: int):
        super().__init__()
        self.cipher = get_cipher(cipher)
        self.cipher.check_rounds(rounds)
        self.rounds = rounds
        key_hi, key_lo = self.cipher.random_keys(philox(seed), 1)
        self._round_keys = self.cipher.expand_keys(key_hi, key_lo, rounds)

    def _respond(self, blocks: np.ndarray) -> np.ndarray:
        return self.cipher.encrypt_batch(blocks, self._round_keys, self.rounds)


class RandomOracle(Oracle):
    """Fresh uniform block per distinct query, repeated queries answered consistently"""

    kind = OracleKind.RANDOM

    def __init__(self, seed: int):
        super().__init__()
        self._rng = philox(seed)
        self._answers: Dict[int, int] = {}

    def _respond(self, blocks: np.ndarray) -> np.ndarray:
        fresh = random_uint64(self._rng, blocks.size)
        out = np.empty_like(blocks)
        for j, block in enumerate(blocks.tolist()):
            out[j] = self._answers.setdefault(block, int(fresh[j]))
        return out


@dataclass(frozen=True)
class DecisionPolicy:
    z: float = DISTINGUISHER['z_score']
    margin: float = DISTINGUISHER['margin']

    def threshold(self, t: int, n: int) -> float:
        p = 1.0 / t
        return p + self.margin + self.z * math.sqrt(p * (1.0 - p) / n)


@dataclass(frozen=True)
class OnlineReport:
    accuracy: float
    query_pairs: int
    records: int
    decision: OracleKind
    threshold: float
    margin: float
    z: float
    queries: int

    def to_dict(self) -> Dict:
        return {
            'accuracy': self.accuracy,
            'query_pairs': self.query_pairs,
            'records': self.records,
            'decision': self.decision.value,
            'threshold': self.threshold,
            'margin': self.margin,
            'z': self.z,
            'queries': self.queries
        }


@dataclass
class OfflineResult:
    model: Optional[MlpModel]
    alpha: float
    attempts: int
    distinguisher_found: bool
    reports: List[TrainReport] = field(default_factory=list)


@dataclass(frozen=True)
class TrialSummary:
    decisions: List[OracleKind]
    accuracies: List[float]

    @property
    def cipher_rate(self) -> float:
        return sum(d is OracleKind.CIPHER for d in self.decisions) / len(self.decisions)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))


def decide(accuracy: float, t: int, n: int, policy: DecisionPolicy = DecisionPolicy()) -> OracleKind:
    """CIPHER iff accuracy is above the one-sided chance threshold for n records"""
    if n < 1:
        raise OracleError("Decision needs at least one record", ErrorCode.EMPTY_QUERY)
    return OracleKind.CIPHER if accuracy > policy.threshold(t, n) else OracleKind.RANDOM


def fit_distinguisher(dataset: DiffDataset, arch: MlpArch, config: TrainConfig,
                      init_seed: int, split_seed: int) -> Tuple[MlpModel, TrainReport]:
    """Split, encode and train; returns the trained model and its report"""
    train_set, val_set = split_train_val(dataset, config.val_fraction, split_seed)
    dtype = np.dtype(config.dtype)
    model = init_model(arch, init_seed, dtype=dtype, loss=config.loss)
    return train(model, encode_dataset(train_set, dtype), encode_dataset(val_set, dtype), config)


def offline_phase(
    cipher: str,
    rounds: int,
    class_set: DiffClassSet,
    config: TrainConfig,
    arch: Optional[MlpArch] = None,
    pair_count: int = DATASET['pair_count'],
    seed: int = 0,
    max_retries: int = MAX_RETRIES,
    margin: float = DISTINGUISHER['margin']
) -> OfflineResult:
    """Train until validation accuracy beats 1/t + margin or the retry budget runs out"""
    arch = arch or MlpArch.preset('proposed', class_set.t)
    chance = 1.0 / class_set.t
    result = OfflineResult(model=None, alpha=0.0, attempts=0, distinguisher_found=False)

    for attempt in range(max_retries):
        result.attempts = attempt + 1
        dataset = generate_dataset(cipher, rounds, class_set, pair_count, derive_seed(seed, attempt, 0))
        attempt_config = config.model_copy(update={'seed': derive_seed(seed, attempt, 2)})
        try:
            model, report = fit_distinguisher(dataset, arch, attempt_config,
                                              init_seed=derive_seed(seed, attempt, 1),
                                              split_seed=derive_seed(seed, attempt, 3))
        except TrainingDivergedError as e:
            failure = error_handler.log_error(e, {'cipher': cipher, 'rounds': rounds, 'attempt': attempt + 1})
            result.reports.append(TrainReport(failed=True, failure=failure))
            continue

        result.reports.append(report)
        if report.final_accuracy > result.alpha or result.model is None:
            result.model, result.alpha = model, report.final_accuracy
        if report.final_accuracy > chance + margin:
            result.model, result.alpha = model, report.final_accuracy
            result.distinguisher_found = True
            logger.info(f"Offline {cipher} r={rounds}: alpha={report.final_accuracy:.4f} "
                        f"after {attempt + 1} attempt(s)")
            return result
        logger.warning(f"Offline {cipher} r={rounds}: alpha={report.final_accuracy:.4f} <= "
                       f"{chance + margin:.4f}, attempt {attempt + 1}/{max_retries}")

    logger.warning(f"No distinguisher for {cipher} r={rounds} after {max_retries} attempts")
    return result


@retry_on_error()
def _query(oracle: Oracle, blocks: np.ndarray) -> np.ndarray:
    return oracle.query(blocks)


def online_phase(
    model: MlpModel,
    oracle: Oracle,
    class_set: DiffClassSet,
    query_pairs: int,
    seed: int,
    policy: DecisionPolicy = DecisionPolicy()
) -> OnlineReport:
    if query_pairs < 1:
        raise OracleError("query_pairs must be at least 1", ErrorCode.EMPTY_QUERY)
    if class_set.t != model.arch.output_dim:
        raise ShapeError(f"Model scores {model.arch.output_dim} classes but the class set has {class_set.t}",
                         ErrorCode.SHAPE_MISMATCH)

    plaintexts = random_uint64(philox(seed), query_pairs)
    base = _query(oracle, plaintexts)
    diffs = np.empty((query_pairs, class_set.t), dtype=np.uint64)
    for i, delta in enumerate(class_set.deltas):
        diffs[:, i] = base ^ _query(oracle, plaintexts ^ np.uint64(delta))

    features = bits_of(diffs.reshape(-1)).astype(model.dtype)
    labels = np.tile(np.arange(class_set.t), query_pairs)
    accuracy = evaluate_accuracy(model, features, labels)
    records = int(labels.shape[0])

    report = OnlineReport(
        accuracy=accuracy,
        query_pairs=query_pairs,
        records=records,
        decision=decide(accuracy, class_set.t, records, policy),
        threshold=policy.threshold(class_set.t, records),
        margin=policy.margin,
        z=policy.z,
        queries=oracle.queries
    )
    logger.debug(f"Online {oracle.kind.value} oracle: accuracy={accuracy:.4f} -> {report.decision.value}")
    return report


def run_trials(
    model: MlpModel,
    oracle_factory: Callable[[int], Oracle],
    class_set: DiffClassSet,
    query_pairs: int,
    trials: int,
    seed: int,
    policy: DecisionPolicy = DecisionPolicy()
) -> TrialSummary:
    """Independent online trials, each with its own oracle instance and seed"""
    decisions, accuracies = [], []
    for trial in range(trials):
        oracle = oracle_factory(derive_seed(seed, trial, 0))
        report = online_phase(model, oracle, class_set, query_pairs, derive_seed(seed, trial, 1), policy)
        decisions.append(report.decision)
        accuracies.append(report.accuracy)
    summary = TrialSummary(decisions, accuracies)
    logger.info(f"{trials} online trials: CIPHER verdict rate {summary.cipher_rate:.3f}, "
                f"mean accuracy {summary.mean_accuracy:.4f}")
    return summary
