from typing import List, Optional

import pytest
from abstractrepo.exceptions import ItemNotFoundException
from abstractrepo.order import OrderOptions
from abstractrepo.paging import PageResolver, PagingOptions
from abstractrepo.specification import AttributeSpecification, Operator, SpecificationInterface
from pydantic import ValidationError

from wildtorus.registry import RegistryDatabase, RunCreateForm, RunUpdateForm, SqlRunRepository, run_filter

from tests.fixtures.registry import make_repository
from tests.fixtures.utils import dumps
from tests.providers.registry import data_provider_for_run_filter, data_provider_for_run_order, make_run_forms


def _fill(repo: SqlRunRepository, size: int = 12) -> None:
    for form in make_run_forms(size):
        repo.create(form)


def test_run_repo():
    repo = make_repository()
    assert len(repo.get_collection()) == 0
    assert repo.latest() is None

    run = repo.create(RunCreateForm(command='lemmas', lam=0.95, seed=0, version='0.3.0'))
    assert run.id == 1
    assert run.status == 'ok'
    assert run.violations == 0
    assert run.created_at is not None
    assert repo.exists(run.id)

    repo.create(RunCreateForm(command='annulus', lam=0.95, seed=1, status='violated', violations=2,
                              version='0.3.0'))
    assert repo.count() == 2

    stored = repo.get_item(2)
    assert stored.command == 'annulus'
    assert stored.violations == 2

    updated = repo.update(2, RunUpdateForm(status='ok', violations=0))
    assert updated.status == 'ok'
    assert updated.violations == 0
    assert updated.command == 'annulus'
    assert dumps(repo.get_item(2)) == dumps(updated)

    deleted = repo.delete(1)
    assert deleted.command == 'lemmas'
    assert not repo.exists(1)
    assert repo.count() == 1

    with pytest.raises(ItemNotFoundException):
        repo.get_item(1)

    with pytest.raises(ItemNotFoundException):
        repo.update(1, RunUpdateForm(status='failed'))

    with pytest.raises(ItemNotFoundException):
        repo.delete(1)


def test_run_forms():
    with pytest.raises(ValidationError):
        RunCreateForm(command='lemmas', status='crashed', version='0.3.0')
    with pytest.raises(ValidationError):
        RunCreateForm(command='lemmas', violations=-1, version='0.3.0')
    with pytest.raises(ValidationError):
        RunUpdateForm(status='unknown')


@pytest.mark.parametrize("test_case", data_provider_for_run_filter())
def test_filter(test_case):
    filter_spec: Optional[SpecificationInterface]
    expected: List[int]
    filter_spec, expected = test_case
    repo = make_repository()
    _fill(repo)
    actual = repo.get_collection(filter_spec=filter_spec)
    assert [run.id for run in actual] == expected
    assert repo.count(filter_spec=filter_spec) == len(expected)


def test_filter_errors():
    repo = make_repository()
    _fill(repo, 3)

    with pytest.raises(ValueError):
        repo.get_collection(AttributeSpecification('id', 2, Operator.IN))

    with pytest.raises(ValueError):
        repo.get_collection(AttributeSpecification('id', 2, Operator.NOT_IN))

    with pytest.raises(TypeError):
        repo.get_collection(AttributeSpecification('id', 2, 'UnsupportedOperator'))

    with pytest.raises(TypeError):
        repo.get_collection({})


def test_empty_filter():
    assert run_filter() is None


@pytest.mark.parametrize("test_case", data_provider_for_run_order())
def test_order(test_case):
    order: OrderOptions
    expected: List[int]
    order, expected = test_case
    repo = make_repository()
    _fill(repo)
    assert [run.id for run in repo.get_collection(order_options=order)] == expected


def test_paging():
    repo = make_repository()
    _fill(repo)

    assert [run.id for run in repo.get_collection(paging_options=PagingOptions(5, 0))] == [1, 2, 3, 4, 5]
    assert [run.id for run in repo.get_collection(paging_options=PagingOptions(5, 10))] == [11, 12]

    paginator = PageResolver(page_size=5, start_page=1)
    assert [run.id for run in repo.get_collection(paging_options=paginator.get_page(2))] == [6, 7, 8, 9, 10]

    flows = run_filter(command='flow')
    page = repo.get_collection(flows, paging_options=PagingOptions(2, 2))
    assert [run.id for run in page] == [9, 12]


def test_latest():
    repo = make_repository()
    _fill(repo)
    assert repo.latest().id == 12
    assert repo.latest('annulus').id == 11
    assert repo.latest('lemmas').command == 'lemmas'
    assert repo.latest('attract') is None


def test_registry_file(tmp_path):
    path = tmp_path / 'nested' / 'runs.sqlite'
    database = RegistryDatabase.at(path)
    try:
        run = SqlRunRepository(database).create(RunCreateForm(command='lemmas', version='0.3.0'))
    finally:
        database.dispose()
    assert path.is_file()

    reopened = RegistryDatabase.at(path)
    try:
        assert dumps(SqlRunRepository(reopened).get_collection()) == dumps([run])
    finally:
        reopened.dispose()
