import logging
import os
import sys
import time
from dataclasses import asdict, dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import pandas as pd
from dotenv import dotenv_values
from pydantic import BaseModel, Field, field_validator, model_validator
from tqdm import tqdm

from .ciphers import CIPHER_REGISTRY, get_cipher
from .config import (
    DATASET,
    GRID_DEFAULTS,
    MODEL_PRESETS,
    MODEL_TAGS,
    OUTPUT_DIR,
    SELECTED_DIFFERENTIALS,
    TRAINING_DEFAULTS,
    WORKERS
)
from .diff_gen import DiffClassSet, DiffDataset, generate_dataset, parse_diff_mode
from .distinguisher import fit_distinguisher
from .error_handler import ConfigError, ErrorCode, NeurodiffError, error_handler
from .neural import MlpArch, MlpModel, TrainConfig, TrainReport
from .utils.seeding import derive_seed

logger = logging.getLogger(__name__)

CSV_COLUMNS = ['cipher', 'rounds', 'model', 'trial', 'seed',
               'val_acc_min', 'val_acc_max', 'val_acc_final', 'wall_ms']
DEFAULT_CLASSES = len(SELECTED_DIFFERENTIALS)


def parse_round_range(value) -> Tuple[int, int]:
    """'R' or 'A..B' to an inclusive (first, last) pair"""
    if isinstance(value, int):
        return value, value
    if isinstance(value, (tuple, list)) and len(value) == 2:
        return int(value[0]), int(value[1])
    text = str(value).strip()
    try:
        if '..' in text:
            first, last = text.split('..', 1)
            return int(first), int(last)
        return int(text), int(text)
    except ValueError:
        raise ConfigError(f"Invalid round range '{value}', expected R or A..B", ErrorCode.INVALID_CONFIG) from None


class ExperimentConfig(BaseModel):
    cipher: str = 'present'
    rounds: Tuple[int, int] = (3, 6)
    model: Literal['proposed', 'baksi'] = 'proposed'
    models: Optional[List[str]] = None
    diffs: str = 'selected'
    pairs: int = Field(DATASET['pair_count'], ge=1)
    trials: int = Field(GRID_DEFAULTS['trials'], ge=1)
    seed: int = Field(GRID_DEFAULTS['master_seed'], ge=0)
    out: str = OUTPUT_DIR
    epochs: int = Field(TRAINING_DEFAULTS['epochs'], ge=1)
    batch_size: int = Field(TRAINING_DEFAULTS['batch_size'], ge=1)
    learning_rate: float = Field(TRAINING_DEFAULTS['learning_rate'], gt=0)
    val_fraction: float = Field(TRAINING_DEFAULTS['val_fraction'], gt=0, lt=1)
    loss: Literal['bce', 'softmax'] = TRAINING_DEFAULTS['loss']
    record_wall_time: bool = False
    workers: int = Field(WORKERS, ge=1)

    @field_validator('rounds', mode='before')
    @classmethod
    def _parse_rounds(cls, value):
        return parse_round_range(value)

    @field_validator('models', mode='before')
    @classmethod
    def _parse_models(cls, value):
        if value is None or value == '':
            return None
        tags = [v.strip().upper() for v in value.split(',')] if isinstance(value, str) else list(value)
        unknown = [tag for tag in tags if tag not in MODEL_TAGS]
        if unknown:
            raise ValueError(f"Unknown model tags {unknown}, expected {sorted(MODEL_TAGS)}")
        return tags

    @field_validator('cipher')
    @classmethod
    def _check_cipher(cls, value: str) -> str:
        return get_cipher(value).name

    @model_validator(mode='after')
    def _check_ranges(self) -> 'ExperimentConfig':
        first, last = self.rounds
        if first > last:
            raise ValueError(f"Round range {first}..{last} is empty")
        cipher = get_cipher(self.cipher)
        cipher.check_rounds(first)
        cipher.check_rounds(last)
        return self

    @classmethod
    def from_config_file(cls, path: str, **overrides) -> 'ExperimentConfig':
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}", ErrorCode.INVALID_CONFIG)
        values = {k.lower(): v for k, v in dotenv_values(path).items() if v not in (None, '')}
        values.update({k: v for k, v in overrides.items() if v is not None})
        logger.info(f"Loaded experiment config from {path}")
        return cls(**values)

    def to_config_text(self) -> str:
        lines = []
        for key, value in self.model_dump().items():
            if value is None:
                continue
            if key == 'rounds':
                value = f"{value[0]}..{value[1]}"
            elif key == 'models':
                value = ','.join(value)
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key}={value}")
        return '\n'.join(lines) + '\n'

    def round_values(self) -> List[int]:
        return list(range(self.rounds[0], self.rounds[1] + 1))

    def cells(self) -> List[Tuple[str, str, str]]:
        """(tag, preset, diff mode) per model column of the grid"""
        if self.models:
            return [(tag, MODEL_TAGS[tag]['preset'], MODEL_TAGS[tag]['diffs']) for tag in self.models]
        for tag, entry in MODEL_TAGS.items():
            if entry['preset'] == self.model and entry['diffs'] == self.diffs:
                return [(tag, self.model, self.diffs)]
        return [(self.model, self.model, self.diffs)]

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            val_fraction=self.val_fraction,
            seed=seed,
            loss=self.loss
        )


@dataclass
class ResultRow:
    cipher: str
    rounds: int
    model: str
    trial: int
    seed: int
    val_acc_min: Optional[float]
    val_acc_max: Optional[float]
    val_acc_final: Optional[float]
    wall_ms: int = 0
    failed: bool = False
    failure: Optional[Dict] = None

    def to_dict(self) -> Dict:
        return asdict(self)


def train_seeded(config: ExperimentConfig, rounds: int, preset: str, diffs: str, seed: int,
                 dataset: Optional[DiffDataset] = None) -> Tuple[MlpModel, TrainReport, DiffClassSet]:
    """Class set, data, initialisation, shuffling and split all derived from one seed"""
    if dataset is None:
        class_set = parse_diff_mode(diffs, t=DEFAULT_CLASSES, seed=derive_seed(seed, 0))
        dataset = generate_dataset(config.cipher, rounds, class_set, config.pairs,
                                   derive_seed(seed, 1), workers=config.workers)
    arch = MlpArch.preset(preset, dataset.t)
    model, report = fit_distinguisher(dataset, arch, config.train_config(derive_seed(seed, 3)),
                                      init_seed=derive_seed(seed, 2), split_seed=derive_seed(seed, 4))
    return model, report, dataset.class_set


class GridRunner:
    """Runs every (cipher, round, model, trial) cell of an experiment grid"""

    def model_index(self, tag: str, preset: str) -> int:
        """Position of a model column that does not depend on the --models order"""
        if tag in MODEL_TAGS:
            return list(MODEL_TAGS).index(tag)
        return len(MODEL_TAGS) + list(MODEL_PRESETS).index(preset)

    def cell_seed(self, config: ExperimentConfig, rounds: int, tag: str, preset: str, trial: int) -> int:
        cipher_index = list(CIPHER_REGISTRY).index(config.cipher)
        return derive_seed(config.seed, cipher_index, rounds, self.model_index(tag, preset), trial)

    def run_cell(self, config: ExperimentConfig, rounds: int, tag: str, preset: str,
                 diffs: str, trial: int, seed: int) -> ResultRow:
        started = time.perf_counter()
        try:
            _, report, _ = train_seeded(config, rounds, preset, diffs, seed)
        except NeurodiffError as e:
            failure = error_handler.log_error(e, {
                'cipher': config.cipher, 'rounds': rounds, 'model': tag, 'trial': trial
            })
            logger.warning(f"Cell {config.cipher} r={rounds} {tag} trial {trial} flagged as failed")
            return ResultRow(config.cipher, rounds, tag, trial, seed, None, None, None,
                             failed=True, failure=failure)

        elapsed_ms = int(round((time.perf_counter() - started) * 1000))
        logger.info(f"{config.cipher} r={rounds} {tag} trial {trial}: final={report.final_accuracy:.4f} "
                    f"min={report.min_val_accuracy:.4f} max={report.max_val_accuracy:.4f} ({elapsed_ms} ms)")
        return ResultRow(
            cipher=config.cipher,
            rounds=rounds,
            model=tag,
            trial=trial,
            seed=seed,
            val_acc_min=report.min_val_accuracy,
            val_acc_max=report.max_val_accuracy,
            val_acc_final=report.final_accuracy,
            wall_ms=elapsed_ms if config.record_wall_time else 0
        )

    def run_grid(self, config: ExperimentConfig) -> List[ResultRow]:
        cells = [(rounds, cell, trial)
                 for rounds in config.round_values()
                 for cell in config.cells()
                 for trial in range(config.trials)]
        logger.info(f"Running grid: {config.cipher} rounds {config.rounds[0]}..{config.rounds[1]}, "
                    f"models {[c[0] for c in config.cells()]}, {config.trials} trial(s) -> {len(cells)} cells")

        rows = []
        for rounds, (tag, preset, diffs), trial in tqdm(
                cells, desc='grid', disable=not sys.stderr.isatty()):
            seed = self.cell_seed(config, rounds, tag, preset, trial)
            rows.append(self.run_cell(config, rounds, tag, preset, diffs, trial, seed))

        failed = sum(row.failed for row in rows)
        if failed:
            logger.warning(f"{failed} of {len(rows)} grid cells failed")
        return rows


def rows_to_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
    return pd.DataFrame([row.to_dict() for row in rows])


def emit_csv(rows: Sequence[ResultRow], path: str) -> None:
    """Results CSV; failed cells keep their row with empty accuracy fields"""
    if not rows:
        raise ConfigError("No result rows to write", ErrorCode.INVALID_CONFIG)
    frame = rows_to_frame(rows)[CSV_COLUMNS]
    frame['seed'] = frame['seed'].map(str)
    frame['wall_ms'] = frame['wall_ms'].astype('int64')
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        frame.to_csv(path, index=False, float_format='%.4f', na_rep='', lineterminator='\n')
    except OSError as e:
        logger.error(f"Error writing results to {path}: {str(e)}")
        raise OSError(f"Cannot write results CSV {path}: {e}") from e
    logger.info(f"Wrote {len(frame)} result rows to {path}")


def load_results(path: str) -> List[ResultRow]:
    frame = pd.read_csv(path, dtype={'seed': str, 'model': str, 'cipher': str})
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigError(f"{path}: missing result columns {missing}", ErrorCode.INVALID_CONFIG)

    rows = []
    for record in frame.to_dict('records'):
        accuracies = [None if pd.isna(record[c]) else float(record[c])
                      for c in ('val_acc_min', 'val_acc_max', 'val_acc_final')]
        rows.append(ResultRow(
            cipher=record['cipher'],
            rounds=int(record['rounds']),
            model=record['model'],
            trial=int(record['trial']),
            seed=int(record['seed']),
            val_acc_min=accuracies[0],
            val_acc_max=accuracies[1],
            val_acc_final=accuracies[2],
            wall_ms=int(record['wall_ms']),
            failed=accuracies[2] is None
        ))
    return rows


class ResultAnalytics:
    def summarize(self, rows: Sequence[ResultRow]) -> pd.DataFrame:
        """Trial statistics of the final accuracy per (cipher, model, rounds)"""
        frame = rows_to_frame(rows)
        ok = frame[~frame['failed']]
        summary = ok.groupby(['cipher', 'model', 'rounds'])['val_acc_final'].agg(
            mean='mean', min='min', max='max', trials='count')
        summary['failed'] = frame.groupby(['cipher', 'model', 'rounds'])['failed'].sum()
        summary['failed'] = summary['failed'].fillna(0).astype(int)
        return summary.reset_index()

    def check_monotone(self, summary: pd.DataFrame, tolerance: float = 0.03) -> Dict[str, bool]:
        """Per (cipher, model): mean accuracy non-increasing in rounds, one small inversion allowed"""
        verdicts = {}
        for (cipher, model), group in summary.groupby(['cipher', 'model']):
            rises = group.sort_values('rounds')['mean'].diff().dropna()
            rises = rises[rises > 0]
            verdicts[f"{cipher}/{model}"] = bool(
                len(rises) == 0 or (len(rises) == 1 and rises.iloc[0] <= tolerance)
            )
        return verdicts


# Global instances
grid_runner = GridRunner()
result_analytics = ResultAnalytics()
