import logging
import os
from typing import Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from .config import SELECTED_DIFFERENTIALS  # noqa: E402
from .error_handler import ConfigError, ErrorCode  # noqa: E402
from .experiment import ResultRow, rows_to_frame  # noqa: E402
from .neural import TrainReport  # noqa: E402

logger = logging.getLogger(__name__)


def _save(fig, path: str) -> None:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        fig.savefig(path, format='svg', metadata={'Date': None})
    except OSError as e:
        logger.error(f"Error writing plot {path}: {str(e)}")
        raise OSError(f"Cannot write plot {path}: {e}") from e
    finally:
        plt.close(fig)
    logger.info(f"Wrote plot {path}")


def emit_round_plot(rows: Sequence[ResultRow], path: str, t: int = len(SELECTED_DIFFERENTIALS)) -> None:
    """Trial-mean final validation accuracy against rounds, one curve per model"""
    frame = rows_to_frame(rows) if rows else None
    if frame is not None:
        frame = frame[~frame['failed']]
    if frame is None or frame['rounds'].nunique() < 2:
        raise ConfigError("A round plot needs results for at least two rounds", ErrorCode.INVALID_CONFIG)

    means = frame.groupby(['cipher', 'model', 'rounds'])['val_acc_final'].mean().reset_index()
    several_ciphers = means['cipher'].nunique() > 1

    fig, ax = plt.subplots(figsize=(6, 4))
    for (cipher, model), group in means.groupby(['cipher', 'model']):
        label = f"{cipher} {model}" if several_ciphers else model
        ax.plot(group['rounds'], group['val_acc_final'], marker='o', label=label)
    ax.axhline(1.0 / t, color='grey', linestyle='--', linewidth=1, label=f"1/t = {1.0 / t:.2f}")

    ax.set_xticks(sorted(means['rounds'].unique()))
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel('Rounds')
    ax.set_ylabel('Mean validation accuracy')
    title = 'Validation accuracy by rounds'
    if not several_ciphers:
        title += f" ({means['cipher'].iloc[0]})"
    ax.set_title(title)
    ax.legend(loc='upper right')
    fig.tight_layout()
    _save(fig, path)


def emit_training_plot(report: TrainReport, path: str) -> None:
    if not report.val_accuracy:
        raise ConfigError("Training report has no epochs to plot", ErrorCode.INVALID_CONFIG)
    epochs = range(1, len(report.val_accuracy) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, report.train_accuracy, 'b', label='Training accuracy')
    ax.plot(epochs, report.val_accuracy, 'g', label='Validation accuracy')
    ax.set_title('Training and validation accuracy')
    ax.set_xlabel('Epochs')
    ax.set_ylabel('Accuracy')
    ax.legend(loc='upper left')
    fig.tight_layout()
    _save(fig, path)
