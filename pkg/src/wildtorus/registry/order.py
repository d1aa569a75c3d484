from typing import List, Type

from abstractrepo.order import NonesOrder, OrderDirection, OrderOption, OrderOptions
from sqlalchemy import UnaryExpression, asc, desc

from wildtorus.registry.types import TRow


def order_clause(option: OrderOption, table: Type[TRow]) -> UnaryExpression:
    column = getattr(table, option.attribute)
    clause = asc(column) if option.direction == OrderDirection.ASC else desc(column)
    return clause.nulls_first() if option.nones == NonesOrder.FIRST else clause.nulls_last()


def order_clauses(order: OrderOptions, table: Type[TRow]) -> List[UnaryExpression]:
    """ORDER BY terms for ``order``, in priority order."""
    return [order_clause(option, table) for option in order.options]
