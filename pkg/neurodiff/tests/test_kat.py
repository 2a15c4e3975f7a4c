import pytest

from neurodiff.ciphers.present import SBOX
from neurodiff.ciphers.simeck import Z_SEQUENCE
from neurodiff.error_handler import KatFailure
from neurodiff.kat import KatReport, KatResult, kat_check, load_vectors


def test_bundled_vectors_pass():
    report = kat_check(roundtrips=20)
    assert len(report.vectors) == len(load_vectors('present')) + len(load_vectors('simeck'))
    assert report.passed
    assert all(v.batch_actual == v.expected for v in report.vectors)
    assert report.roundtrip_failures == {'present': 0, 'simeck': 0}
    report.raise_for_failures()


def test_mutated_sbox_fails_present_only():
    sbox = list(SBOX)
    sbox[0], sbox[1] = sbox[1], sbox[0]
    report = kat_check(present_sbox=sbox, roundtrips=0)
    failed = {v.cipher for v in report.failures}
    assert failed == {'present'}
    assert len(report.failures) == len(load_vectors('present'))
    with pytest.raises(KatFailure) as exc:
        report.raise_for_failures()
    assert 'present80-zero-zero' in str(exc.value)


def test_mutated_z_sequence_fails_simeck():
    z = list(Z_SEQUENCE)
    z[5] ^= 1
    report = kat_check(simeck_z=z, roundtrips=0)
    assert {v.cipher for v in report.failures} == {'simeck'}
    assert not report.passed


def test_report_lines():
    report = KatReport([KatResult('a', 'present', '00', '00'), KatResult('b', 'simeck', '01', '02')],
                       {'present': 0, 'simeck': 3})
    lines = report.lines()
    assert lines[0].startswith('PASS a')
    assert lines[1].startswith('FAIL b')
    assert lines[-1] == 'FAIL simeck round-trips (3 mismatches)'
    with pytest.raises(KatFailure) as exc:
        report.raise_for_failures()
    assert 'simeck-roundtrip' in str(exc.value)
