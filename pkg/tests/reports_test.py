import json

import numpy as np
import pytest

from wildtorus.exceptions import LemmaViolation
from wildtorus.reports import Provenance, Report, complex_pair, count_violations, dumps, to_plain, write_json


def test_to_plain():
    payload = {
        'z': 1 + 2j,
        'array': np.array([1.5, 2.5]),
        'count': np.int64(3),
        'value': np.float64(0.25),
        'flag': np.bool_(True),
        'nested': ({'w': np.complex128(3j)},),
        1: 'key',
    }
    assert to_plain(payload) == {
        'z': [1.0, 2.0],
        'array': [1.5, 2.5],
        'count': 3,
        'value': 0.25,
        'flag': True,
        'nested': [{'w': [0.0, 3.0]}],
        '1': 'key',
    }
    assert complex_pair(-1j) == [0.0, -1.0]


def test_report_passed():
    report = Report(check='stable cones')
    assert report.passed
    assert report.raise_on_violation() is report


def test_report_violation():
    report = Report(check='unstable cones', violations=2, witness=3 + 4j)
    assert not report.passed
    with pytest.raises(LemmaViolation) as e:
        report.raise_on_violation()
    assert e.value.check == 'unstable cones'
    assert report.to_dict()['witness'] == [3.0, 4.0]


def test_report_extra_fields():
    report = Report(check='c', samples=np.int64(10), margin=np.float64(0.5))
    data = json.loads(report.to_json())
    assert data['samples'] == 10
    assert data['margin'] == 0.5
    assert data['notes'] == []


def test_dumps_is_stable():
    first = dumps({'b': 1, 'a': [1j]})
    second = dumps({'a': [1j], 'b': 1})
    assert first == second
    assert first.endswith('\n')
    assert first.index('"a"') < first.index('"b"')


def test_write_json(tmp_path):
    provenance = Provenance(version='0.3.0', command='lemmas', seed=7, parameters={'lambda': 0.95})
    path = write_json(tmp_path / 'nested' / 'out.json', provenance)
    assert path.exists()
    assert json.loads(path.read_text())['parameters'] == {'lambda': 0.95}


def test_count_violations():
    reports = [Report(check='a', violations=1), Report(check='b'), Report(check='c', violations=4)]
    assert count_violations(reports) == 5
