"""Configuration settings for the neurodiff workbench"""

import os
from dotenv import load_dotenv

load_dotenv()

# Cipher parameters
CIPHERS = {
    'present': {
        'block_bits': 64,
        'key_bits': 80,
        'full_rounds': 31,
        'min_rounds': 1,
        'max_rounds': 31
    },
    'simeck': {
        'block_bits': 64,
        'key_bits': 128,
        'word_bits': 32,
        'full_rounds': 44,
        'min_rounds': 1,
        'max_rounds': 44
    }
}

# Training hyper-parameters
TRAINING_DEFAULTS = {
    'learning_rate': 0.001,
    'epochs': 25,
    'batch_size': 100,
    'val_fraction': 0.3,
    'loss': 'bce',
    'dtype': 'float32'
}

ADAM_DEFAULTS = {
    'beta1': 0.9,
    'beta2': 0.999,
    'eps': 1e-8
}

# Hidden layer widths; input is the 64-bit output difference, output is t
MODEL_PRESETS = {
    'proposed': (128, 1024),
    'baksi': (128, 1024, 1024)
}

MODEL_TAGS = {
    'M1': {'preset': 'baksi', 'diffs': 'random'},
    'M2': {'preset': 'proposed', 'diffs': 'random'},
    'M3': {'preset': 'baksi', 'diffs': 'selected'},
    'M4': {'preset': 'proposed', 'diffs': 'selected'}
}

# Input differential classes 1..4
SELECTED_DIFFERENTIALS = [
    0x0700000000000700,
    0x7000000000007000,
    0x0070000000000070,
    0x0007000000000007
]
SHIFT_FAMILY_BASE = 0x0007000000000007

DISTINGUISHER = {
    'z_score': 3.0,
    'margin': 0.0,
    'query_pairs': 1000
}

BASELINE = {
    'alpha': 0.001,
    'projection': 'low_bits:4',
    'samples': 100000
}

DATASET = {
    'pair_count': 10000,
    'block_size': 1024
}

# Grid defaults
GRID_DEFAULTS = {
    'trials': 5,
    'master_seed': 2023
}

# Retry Configuration
MAX_RETRIES = 3
RETRY_DELAY = 0.5  # seconds

# Runtime
OUTPUT_DIR = os.getenv('NEURODIFF_OUTPUT_DIR', 'results')
LOG_LEVEL = os.getenv('NEURODIFF_LOG_LEVEL', 'INFO')
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
WORKERS = int(os.getenv('NEURODIFF_WORKERS', '1'))

FIXTURES_DIR = os.path.join(os.path.dirname(__file__), 'fixtures')
