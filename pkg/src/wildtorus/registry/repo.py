import abc
from typing import ContextManager, Generic, List, Optional, Type

from abstractrepo.exceptions import ItemNotFoundException
from abstractrepo.order import OrderOptions
from abstractrepo.paging import PagingOptions
from abstractrepo.repo import CrudRepositoryInterface, TCreateSchema, TIdValueType, TModel, TUpdateSchema
from abstractrepo.specification import SpecificationInterface
from sqlalchemy.exc import NoResultFound
from sqlalchemy.orm import Query, Session

from wildtorus.registry.order import order_clauses
from wildtorus.registry.specification import compile_specification
from wildtorus.registry.types import TRow


class SqlCrudRepository(
    Generic[TRow, TModel, TIdValueType, TCreateSchema, TUpdateSchema],
    CrudRepositoryInterface[TModel, TIdValueType, TCreateSchema, TUpdateSchema],
    abc.ABC,
):
    """CRUD repository over one mapped table.

    Rows are converted to pydantic models before they leave the session, so callers
    never see detached ORM objects. Subclasses describe the table, the session
    source and the row/model conversions.
    """

    def get_collection(
        self,
        filter_spec: Optional[SpecificationInterface[TModel, bool]] = None,
        order_options: Optional[OrderOptions] = None,
        paging_options: Optional[PagingOptions] = None,
    ) -> List[TModel]:
        """Lists stored items matching a filter, in order, one page at a time.

        Args:
            filter_spec: Optional specification restricting the rows.
            order_options: Optional sort order; the repository default order applies when omitted.
            paging_options: Optional limit and offset.

        Returns:
            The matching items as pydantic models.
        """
        with self._session() as sess:
            query = self._filtered(sess.query(self._table), filter_spec)
            if order_options is None:
                query = self._default_order(query)
            else:
                query = query.order_by(*order_clauses(order_options, self._table))
            if paging_options is not None:
                if paging_options.limit is not None:
                    query = query.limit(paging_options.limit)
                if paging_options.offset is not None:
                    query = query.offset(paging_options.offset)
            return [self._to_model(row) for row in query.all()]

    def count(self, filter_spec: Optional[SpecificationInterface[TModel, bool]] = None) -> int:
        """Counts stored items matching a filter.

        Args:
            filter_spec: Optional specification restricting the rows.

        Returns:
            The number of matching rows.
        """
        with self._session() as sess:
            return self._filtered(sess.query(self._table), filter_spec).count()

    def get_item(self, item_id: TIdValueType) -> TModel:
        """Fetches one item by primary key.

        Args:
            item_id: Primary key of the item.

        Returns:
            The stored item.

        Raises:
            ItemNotFoundException: If no row has ``item_id``.
        """
        with self._session() as sess:
            return self._to_model(self._fetch(sess, item_id))

    def exists(self, item_id: TIdValueType) -> bool:
        """Checks whether an item is stored.

        Args:
            item_id: Primary key to look up.

        Returns:
            True if a row has ``item_id``.
        """
        with self._session() as sess:
            return self._by_id(sess.query(self._table), item_id).count() > 0

    def create(self, form: TCreateSchema) -> TModel:
        """Stores a new item built from ``form``.

        Args:
            form: Creation schema of the item.

        Returns:
            The stored item, refreshed after commit so generated columns are filled.
        """
        with self._session() as sess:
            row = self._new_row(form)
            sess.add(row)
            return self._commit(sess, row)

    def update(self, item_id: TIdValueType, form: TUpdateSchema) -> TModel:
        """Applies ``form`` to the item with ``item_id``.

        Args:
            item_id: Primary key of the item.
            form: Update schema; its fields replace the stored ones.

        Returns:
            The updated item.

        Raises:
            ItemNotFoundException: If no row has ``item_id``.
        """
        with self._session() as sess:
            row = self._fetch(sess, item_id)
            self._apply_form(row, form)
            return self._commit(sess, row)

    def delete(self, item_id: TIdValueType) -> TModel:
        """Removes the item with ``item_id``.

        Args:
            item_id: Primary key of the item.

        Returns:
            The item as it was before deletion.

        Raises:
            ItemNotFoundException: If no row has ``item_id``.
        """
        with self._session() as sess:
            row = self._fetch(sess, item_id)
            deleted = self._to_model(row)
            sess.delete(row)
            sess.commit()
            return deleted

    @property
    @abc.abstractmethod
    def _table(self) -> Type[TRow]:
        raise NotImplementedError()

    @abc.abstractmethod
    def _session(self) -> ContextManager[Session]:
        """A context-managed session; leaving the block closes it."""
        raise NotImplementedError()

    @abc.abstractmethod
    def _by_id(self, query: Query, item_id: TIdValueType) -> Query:
        raise NotImplementedError()

    @abc.abstractmethod
    def _to_model(self, row: TRow) -> TModel:
        raise NotImplementedError()

    @abc.abstractmethod
    def _new_row(self, form: TCreateSchema) -> TRow:
        raise NotImplementedError()

    @abc.abstractmethod
    def _apply_form(self, row: TRow, form: TUpdateSchema) -> None:
        raise NotImplementedError()

    def _default_order(self, query: Query) -> Query:
        return query

    def _filtered(self, query: Query, filter_spec: Optional[SpecificationInterface]) -> Query:
        if filter_spec is None:
            return query
        return query.filter(compile_specification(filter_spec, self._table))

    def _fetch(self, sess: Session, item_id: TIdValueType) -> TRow:
        try:
            return self._by_id(sess.query(self._table), item_id).one()
        except NoResultFound:
            sess.rollback()
            raise ItemNotFoundException(self.model_class, item_id)

    def _commit(self, sess: Session, row: TRow) -> TModel:
        sess.commit()
        sess.refresh(row)
        return self._to_model(row)
