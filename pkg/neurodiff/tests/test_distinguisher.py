import numpy as np
import pytest

from neurodiff.ciphers import get_cipher
from neurodiff.diff_gen import encode_dataset, generate_dataset, random_class_set, selected_class_set
from neurodiff.distinguisher import (
    CipherOracle,
    DecisionPolicy,
    OracleKind,
    RandomOracle,
    decide,
    fit_distinguisher,
    offline_phase,
    online_phase,
    run_trials
)
from neurodiff.error_handler import ErrorCode, OracleError, ShapeError
from neurodiff.neural import MlpArch, TrainConfig, evaluate_accuracy
from neurodiff.utils.seeding import philox

SMALL_ARCH = MlpArch(64, (32,), 4)
QUICK = TrainConfig(epochs=6, batch_size=50, learning_rate=0.005)


@pytest.fixture(scope='module')
def one_round_model():
    result = offline_phase('present', 1, selected_class_set(), QUICK, arch=SMALL_ARCH, pair_count=1000, seed=1)
    assert result.distinguisher_found
    return result


@pytest.mark.parametrize('accuracy, n, expected', [
    (0.25, 4000, OracleKind.RANDOM),
    (0.25, 10, OracleKind.RANDOM),
    (0.90, 4000, OracleKind.CIPHER),
    (0.26, 100, OracleKind.RANDOM),
])
def test_decide(accuracy, n, expected):
    assert decide(accuracy, 4, n) is expected


def test_decide_threshold():
    policy = DecisionPolicy()
    assert policy.threshold(4, 4000) == pytest.approx(0.25 + 3 * np.sqrt(0.1875 / 4000))
    assert decide(0.27, 4, 4000) is OracleKind.RANDOM
    assert decide(0.28, 4, 4000) is OracleKind.CIPHER
    assert decide(0.28, 4, 4000, DecisionPolicy(margin=0.1)) is OracleKind.RANDOM
    with pytest.raises(OracleError):
        decide(0.5, 4, 0)


def test_random_oracle_is_consistent():
    oracle = RandomOracle(seed=3)
    blocks = np.array([1, 2, 3, 1], dtype=np.uint64)
    first = oracle.query(blocks)
    assert first[0] == first[3]
    assert np.array_equal(oracle.query(blocks), first)
    assert oracle.queries == 8
    assert oracle.kind is OracleKind.RANDOM
    with pytest.raises(OracleError):
        oracle.query(np.array([], dtype=np.uint64))


def test_cipher_oracle_hides_a_fixed_key():
    blocks = np.arange(10, dtype=np.uint64)
    one, two = CipherOracle('simeck', 3, seed=4), CipherOracle('simeck', 3, seed=4)
    assert np.array_equal(one.query(blocks), two.query(blocks))
    assert not np.array_equal(one.query(blocks), CipherOracle('simeck', 3, seed=5).query(blocks))

    cipher = get_cipher('simeck')
    key_hi, key_lo = cipher.random_keys(philox(4), 1)
    expected = cipher.encrypt(blocks, np.repeat(key_hi, 10), np.repeat(key_lo, 10), 3)
    assert np.array_equal(one.query(blocks), expected)


def test_cipher_oracle_round_range():
    with pytest.raises(ValueError):
        CipherOracle('present', 32, seed=0)


def test_offline_phase_finds_one_round_distinguisher(one_round_model):
    assert one_round_model.alpha > 0.9
    assert one_round_model.attempts == 1
    assert len(one_round_model.reports) == 1


def test_offline_phase_gives_up_after_retries():
    result = offline_phase('present', 6, selected_class_set(), TrainConfig(epochs=1, batch_size=50),
                           arch=MlpArch(64, (8,), 4), pair_count=200, seed=2, margin=0.5)
    assert not result.distinguisher_found
    assert result.attempts == 3
    assert len(result.reports) == 3
    assert result.model is not None


def test_online_phase_against_both_oracles(one_round_model):
    class_set = selected_class_set()
    cipher_report = online_phase(one_round_model.model, CipherOracle('present', 1, seed=7), class_set, 250, seed=8)
    assert cipher_report.decision is OracleKind.CIPHER
    assert cipher_report.records == 1000
    assert cipher_report.queries == 1250

    random_report = online_phase(one_round_model.model, RandomOracle(seed=7), class_set, 250, seed=8)
    assert random_report.decision is OracleKind.RANDOM
    assert abs(random_report.accuracy - 0.25) < 0.1
    assert random_report.to_dict()['decision'] == 'RANDOM'


def test_online_phase_rejects_zero_pairs(one_round_model):
    with pytest.raises(OracleError) as exc:
        online_phase(one_round_model.model, RandomOracle(seed=1), selected_class_set(), 0, seed=1)
    assert exc.value.error_code is ErrorCode.EMPTY_QUERY


def test_online_phase_rejects_class_count_mismatch(one_round_model):
    with pytest.raises(ShapeError) as exc:
        online_phase(one_round_model.model, RandomOracle(seed=1), random_class_set(3, seed=1), 50, seed=1)
    assert exc.value.error_code is ErrorCode.SHAPE_MISMATCH


def test_run_trials(one_round_model):
    class_set = selected_class_set()
    summary = run_trials(one_round_model.model, RandomOracle, class_set, 250, trials=20, seed=9)
    assert len(summary.decisions) == 20
    assert summary.cipher_rate <= 0.1

    summary = run_trials(one_round_model.model, lambda s: CipherOracle('present', 1, s), class_set, 250,
                         trials=5, seed=9)
    assert summary.cipher_rate == 1.0
    assert summary.mean_accuracy > 0.9


class FlakyOracle(RandomOracle):
    def __init__(self, seed, failures):
        super().__init__(seed)
        self.failures = failures

    def _respond(self, blocks):
        if self.failures:
            self.failures -= 1
            raise OracleError('transport dropped', ErrorCode.ORACLE_FAILURE)
        return super()._respond(blocks)


def test_oracle_transport_failures_are_retried(one_round_model, monkeypatch):
    monkeypatch.setattr('neurodiff.error_handler.time.sleep', lambda seconds: None)
    report = online_phase(one_round_model.model, FlakyOracle(1, failures=2), selected_class_set(), 50, seed=2)
    assert report.records == 200

    with pytest.raises(OracleError) as exc:
        online_phase(one_round_model.model, FlakyOracle(1, failures=10), selected_class_set(), 50, seed=2)
    assert exc.value.error_code is ErrorCode.ORACLE_FAILURE


def test_accuracy_is_invariant_under_record_order(one_round_model):
    dataset = generate_dataset('present', 1, selected_class_set(), 200, seed=11)
    features, targets = encode_dataset(dataset)
    labels = np.argmax(targets, axis=1)
    order = philox(12).permutation(len(dataset))
    model = one_round_model.model
    assert evaluate_accuracy(model, features, labels) == evaluate_accuracy(model, features[order], labels[order])


def test_identity_rounds_are_perfectly_separable():
    dataset = generate_dataset('present', 0, selected_class_set(), 500, seed=13)
    _, report = fit_distinguisher(dataset, SMALL_ARCH, QUICK, init_seed=1, split_seed=2)
    assert report.final_accuracy == 1.0
