"""Repository of recorded runs and the queries the ``report`` command issues."""
import abc
from typing import ContextManager, List, Optional, Type

from abstractrepo.order import OrderDirection, OrderOptions, OrderOptionsBuilder
from abstractrepo.paging import PagingOptions
from abstractrepo.repo import CrudRepositoryInterface
from abstractrepo.specification import AndSpecification, AttributeSpecification, Operator, SpecificationInterface
from sqlalchemy.orm import Query, Session

from wildtorus.registry.database import RegistryDatabase
from wildtorus.registry.models import Run, RunCreateForm, RunTable, RunUpdateForm
from wildtorus.registry.repo import SqlCrudRepository


class RunRepositoryInterface(CrudRepositoryInterface[Run, int, RunCreateForm, RunUpdateForm], abc.ABC):
    def latest(self, command: Optional[str] = None) -> Optional[Run]:
        raise NotImplementedError()


class SqlRunRepository(
    SqlCrudRepository[RunTable, Run, int, RunCreateForm, RunUpdateForm],
    RunRepositoryInterface,
):
    def __init__(self, database: RegistryDatabase):
        self._database = database

    @property
    def model_class(self) -> Type[Run]:
        return Run

    def latest(self, command: Optional[str] = None) -> Optional[Run]:
        spec = None if command is None else AttributeSpecification('command', command, Operator.E)
        order = OrderOptionsBuilder().add('id', OrderDirection.DESC).build()
        found = self.get_collection(spec, order, PagingOptions(1, 0))
        return found[0] if found else None

    @property
    def _table(self) -> Type[RunTable]:
        return RunTable

    def _session(self) -> ContextManager[Session]:
        return self._database.session()

    def _by_id(self, query: Query, item_id: int) -> Query:
        return query.filter(RunTable.id == item_id)

    def _to_model(self, row: RunTable) -> Run:
        return Run.model_validate(row)

    def _new_row(self, form: RunCreateForm) -> RunTable:
        return RunTable(**form.model_dump())

    def _apply_form(self, row: RunTable, form: RunUpdateForm) -> None:
        for key, value in form.model_dump(exclude_none=True).items():
            setattr(row, key, value)

    def _default_order(self, query: Query) -> Query:
        return query.order_by(RunTable.id)


def run_filter(
    command: Optional[str] = None,
    status: Optional[str] = None,
    lam_min: Optional[float] = None,
    lam_max: Optional[float] = None,
) -> Optional[SpecificationInterface]:
    """Conjunction of the given criteria, or ``None`` when none is set."""
    parts: List[SpecificationInterface] = []
    if command is not None:
        parts.append(AttributeSpecification('command', command, Operator.E))
    if status is not None:
        parts.append(AttributeSpecification('status', status, Operator.E))
    if lam_min is not None:
        parts.append(AttributeSpecification('lam', lam_min, Operator.GTE))
    if lam_max is not None:
        parts.append(AttributeSpecification('lam', lam_max, Operator.LTE))
    if not parts:
        return None
    return parts[0] if len(parts) == 1 else AndSpecification(*parts)


def run_order(key: str = 'id', descending: bool = False) -> OrderOptions:
    direction = OrderDirection.DESC if descending else OrderDirection.ASC
    builder = OrderOptionsBuilder()
    builder.add(key, direction)
    if key != 'id':
        builder.add('id', OrderDirection.ASC)
    return builder.build()
