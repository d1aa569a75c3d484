import pytest

from wildtorus import parallel
from wildtorus.exceptions import ParameterError


def test_default_is_single_thread():
    assert parallel.thread_count() == 1


def test_environment(monkeypatch):
    monkeypatch.setenv(parallel.THREADS_ENV, '4')
    assert parallel.thread_count() == 4
    monkeypatch.setenv(parallel.THREADS_ENV, ' ')
    assert parallel.thread_count() == 1


@pytest.mark.parametrize("raw", ['0', '-2', 'abc', '1.5'])
def test_invalid_environment(monkeypatch, raw: str):
    monkeypatch.setenv(parallel.THREADS_ENV, raw)
    with pytest.raises(ParameterError):
        parallel.thread_count()


def test_override(monkeypatch):
    monkeypatch.setenv(parallel.THREADS_ENV, '8')
    parallel.set_threads(2)
    assert parallel.thread_count() == 2
    parallel.set_threads(None)
    assert parallel.thread_count() == 8
    with pytest.raises(ParameterError):
        parallel.set_threads(0)


@pytest.mark.parametrize("threads", [1, 3])
def test_map_chunks_keeps_order(threads: int):
    parallel.set_threads(threads)
    chunks = [list(range(i, i + 5)) for i in range(0, 50, 5)]
    assert parallel.map_chunks(sum, chunks) == [sum(chunk) for chunk in chunks]
    assert parallel.map_chunks(sum, []) == []
