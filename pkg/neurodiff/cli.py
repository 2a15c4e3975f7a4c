"""Command-line entry point: python -m neurodiff <subcommand>"""

import json
import logging
import os
import sys
from functools import wraps

import click
import numpy as np
from pydantic import ValidationError

from .baseline import (
    chi_square_uniform,
    ddt_to_csv,
    ddt_to_text,
    differential_uniformity,
    empirical_diff_distribution,
    sbox_ddt,
    summarize_histogram
)
from .config import BASELINE, DISTINGUISHER, LOG_FORMAT, LOG_LEVEL, SHIFT_FAMILY_BASE
from .diff_gen import (
    encode_dataset,
    generate_dataset,
    generate_random_dataset,
    load_dataset,
    parse_diff_mode,
    save_dataset
)
from .distinguisher import CipherOracle, DecisionPolicy, RandomOracle, offline_phase, run_trials
from .error_handler import (
    CipherError,
    ConfigError,
    DifferentialError,
    NeurodiffError,
    RoundRangeError,
    error_handler
)
from .experiment import (
    DEFAULT_CLASSES,
    ExperimentConfig,
    emit_csv,
    grid_runner,
    load_results,
    result_analytics,
    train_seeded
)
from .kat import kat_check
from .model_store import load_model, save_model
from .neural import MlpArch, evaluate_accuracy
from .plotting import emit_round_plot, emit_training_plot
from .utils.bits import parse_hex, to_hex64
from .utils.seeding import derive_seed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

USAGE_ERRORS = (ValidationError, ConfigError, RoundRangeError, CipherError, DifferentialError)


def handle_errors(func):
    """Map library errors to exit codes: 2 for bad input, 1 for failed work"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except USAGE_ERRORS as e:
            error_handler.log_error(e, {'command': func.__name__})
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        except (NeurodiffError, OSError) as e:
            error_handler.log_error(e, {'command': func.__name__})
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_FAILED)
    return wrapper


def experiment_options(func):
    """Flags shared by every command that trains or generates data"""
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                     help='Flat KEY=VALUE file; flags given on the command line win.'),
        click.option('--cipher', type=click.Choice(['present', 'simeck']), default=None),
        click.option('--rounds', default=None, help='R or A..B'),
        click.option('--model', type=click.Choice(['proposed', 'baksi']), default=None),
        click.option('--diffs', default=None, help='selected | random | family:<hexbase>:<shifts> | file:<path>'),
        click.option('--pairs', type=int, default=None),
        click.option('--trials', type=int, default=None),
        click.option('--seed', type=int, default=None),
        click.option('--out', default=None),
        click.option('--epochs', type=int, default=None),
        click.option('--loss', type=click.Choice(['bce', 'softmax']), default=None),
        click.option('--workers', type=int, default=None)
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_config(config_path=None, **flags) -> ExperimentConfig:
    overrides = {k: v for k, v in flags.items() if v is not None}
    if config_path:
        return ExperimentConfig.from_config_file(config_path, **overrides)
    return ExperimentConfig(**overrides)


def single_round(config: ExperimentConfig) -> int:
    first, last = config.rounds
    if first != last:
        raise ConfigError(f"This command takes a single round count, got {first}..{last}")
    return first


@click.group()
@click.option('--log-level', default=LOG_LEVEL, show_default=True)
def cli(log_level):
    """Neural differential distinguisher workbench for PRESENT and Simeck"""
    logging.basicConfig(level=log_level.upper(), format=LOG_FORMAT)


@cli.command()
@click.option('--roundtrips', type=int, default=1000, show_default=True)
@handle_errors
def kat(roundtrips):
    """Known-answer vectors and encrypt/decrypt round-trips"""
    report = kat_check(roundtrips=roundtrips)
    for line in report.lines():
        click.echo(line)
    report.raise_for_failures()


@cli.command()
@click.option('--csv', 'csv_path', type=click.Path(dir_okay=False), default=None)
@handle_errors
def ddt(csv_path):
    """PRESENT S-box difference distribution table"""
    table = sbox_ddt()
    click.echo(ddt_to_text(table), nl=False)
    click.echo(f"differential uniformity: {differential_uniformity(table)}")
    if csv_path:
        with open(csv_path, 'w', encoding='utf-8', newline='') as f:
            f.write(ddt_to_csv(table))
        logger.info(f"Wrote DDT to {csv_path}")


@cli.command('gen-data')
@experiment_options
@click.option('--random-control', is_flag=True, help='Uniform output differences instead of the cipher.')
@handle_errors
def gen_data(random_control, **flags):
    """Generate a labelled output-difference dataset"""
    config = build_config(**flags)
    rounds = single_round(config)
    class_set = parse_diff_mode(config.diffs, t=DEFAULT_CLASSES, seed=derive_seed(config.seed, 0))
    if random_control:
        dataset = generate_random_dataset(config.pairs, class_set, derive_seed(config.seed, 1))
    else:
        dataset = generate_dataset(config.cipher, rounds, class_set, config.pairs,
                                   derive_seed(config.seed, 1), workers=config.workers)
    path = config.out if config.out.endswith('.csv') else os.path.join(
        config.out, f"{config.cipher}_r{rounds}_seed{config.seed}.csv")
    save_dataset(dataset, path)
    click.echo(f"{len(dataset)} records -> {path}")


@cli.command()
@experiment_options
@click.option('--data', 'data_path', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Train on a saved dataset instead of generating one.')
@click.option('--plot', 'plot_path', type=click.Path(dir_okay=False), default=None)
@handle_errors
def train(data_path, plot_path, **flags):
    """Train one distinguisher and save the model"""
    config = build_config(**flags)
    dataset = load_dataset(data_path) if data_path else None
    rounds = dataset.rounds if dataset is not None else single_round(config)
    model, report, _ = train_seeded(config, rounds, config.model, config.diffs, config.seed, dataset)

    path = config.out if config.out.endswith('.ndm') else os.path.join(
        config.out, f"{config.cipher}_r{rounds}_{config.model}.ndm")
    save_model(model, path)
    if plot_path:
        emit_training_plot(report, plot_path)
    click.echo(f"final={report.final_accuracy:.4f} min={report.min_val_accuracy:.4f} "
               f"max={report.max_val_accuracy:.4f} -> {path}")


@cli.command()
@click.option('--model-file', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--data', 'data_path', type=click.Path(exists=True, dir_okay=False), required=True)
@handle_errors
def evaluate(model_file, data_path):
    """Accuracy of a saved model on a saved dataset"""
    model = load_model(model_file)
    dataset = load_dataset(data_path)
    features, targets = encode_dataset(dataset, model.dtype)
    accuracy = evaluate_accuracy(model, features, np.argmax(targets, axis=1))
    click.echo(f"accuracy={accuracy:.4f} records={len(dataset)} chance={1.0 / dataset.t:.4f}")


@cli.command()
@experiment_options
@click.option('--model-file', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Skip the offline phase and use a saved model.')
@click.option('--oracle', type=click.Choice(['cipher', 'random']), default='cipher', show_default=True)
@click.option('--query-pairs', type=int, default=DISTINGUISHER['query_pairs'], show_default=True)
@click.option('--z', 'z_score', type=float, default=DISTINGUISHER['z_score'], show_default=True)
@handle_errors
def distinguish(model_file, oracle, query_pairs, z_score, **flags):
    """Offline training, then online trials against a cipher or random oracle"""
    config = build_config(**flags)
    rounds = single_round(config)
    class_set = parse_diff_mode(config.diffs, t=DEFAULT_CLASSES, seed=derive_seed(config.seed, 0))

    if model_file:
        model = load_model(model_file)
    else:
        offline = offline_phase(config.cipher, rounds, class_set, config.train_config(config.seed),
                                arch=MlpArch.preset(config.model, class_set.t), pair_count=config.pairs,
                                seed=derive_seed(config.seed, 1))
        click.echo(f"offline alpha={offline.alpha:.4f} attempts={offline.attempts}")
        if not offline.distinguisher_found:
            click.echo(f"no distinguisher for {config.cipher} r={rounds}")
            sys.exit(EXIT_FAILED)
        model = offline.model

    if oracle == 'cipher':
        def factory(seed):
            return CipherOracle(config.cipher, rounds, seed)
    else:
        factory = RandomOracle

    summary = run_trials(model, factory, class_set, query_pairs, config.trials,
                         derive_seed(config.seed, 2), DecisionPolicy(z=z_score))
    click.echo(json.dumps({
        'oracle': oracle,
        'trials': config.trials,
        'query_pairs': query_pairs,
        'cipher_rate': summary.cipher_rate,
        'mean_accuracy': summary.mean_accuracy
    }))


@cli.command()
@experiment_options
@click.option('--models', default=None, help='Comma list of M1..M4; overrides --model/--diffs.')
@click.option('--record-wall-time', is_flag=True, default=None)
@click.option('--plot/--no-plot', default=True, show_default=True)
@click.option('--strict', is_flag=True, help='Exit 1 when any cell failed.')
@handle_errors
def grid(plot, strict, **flags):
    """Accuracy grid over rounds, models and trials"""
    config = build_config(**flags)
    rows = grid_runner.run_grid(config)
    results_path = os.path.join(config.out, 'results.csv')
    emit_csv(rows, results_path)

    summary = result_analytics.summarize(rows)
    click.echo(summary.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    if plot and len(config.round_values()) >= 2:
        emit_round_plot(rows, os.path.join(config.out, 'accuracy_by_rounds.svg'))
    with open(os.path.join(config.out, 'experiment.cfg'), 'w', encoding='utf-8') as f:
        f.write(config.to_config_text())

    failed = sum(row.failed for row in rows)
    click.echo(f"{len(rows)} rows ({failed} failed) -> {results_path}")
    if strict and failed:
        sys.exit(EXIT_FAILED)


@cli.command()
@click.option('--results', 'results_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True)
@handle_errors
def plot(results_path, out_path):
    """Round plot from a results CSV"""
    emit_round_plot(load_results(results_path), out_path)
    click.echo(f"plot -> {out_path}")


@cli.command()
@click.option('--cipher', type=click.Choice(['present', 'simeck', 'random']), default='present', show_default=True)
@click.option('--rounds', type=int, default=1, show_default=True)
@click.option('--delta', default=f"0x{to_hex64(SHIFT_FAMILY_BASE)}", show_default=True)
@click.option('--samples', type=int, default=BASELINE['samples'], show_default=True)
@click.option('--projection', 'projection_name', default=BASELINE['projection'], show_default=True)
@click.option('--seed', type=int, default=0)
@handle_errors
def baseline(cipher, rounds, delta, samples, projection_name, seed):
    """Chi-square test of a projected output-difference histogram"""
    histogram = empirical_diff_distribution(cipher, rounds, parse_hex(delta), samples, projection_name, seed)
    summary = summarize_histogram(histogram)
    click.echo(json.dumps(summary, default=str))
    if chi_square_uniform(histogram).reject:
        click.echo('non-uniform at the configured alpha')


def main():
    cli(prog_name='neurodiff')
