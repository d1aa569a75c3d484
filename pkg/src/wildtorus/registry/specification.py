"""Translation of abstractrepo specifications into SQLAlchemy filter expressions."""
from typing import Any, Callable, Dict, Type

from abstractrepo.specification import (
    AndSpecification,
    AttributeSpecification,
    NotSpecification,
    Operator,
    OrSpecification,
    SpecificationInterface,
)
from sqlalchemy import ColumnElement, and_, not_, or_

from wildtorus.registry.types import TRow


def _listed(name: str, build: Callable[[ColumnElement, list], ColumnElement]):
    def apply(column: ColumnElement, value: Any) -> ColumnElement:
        if not isinstance(value, list):
            raise ValueError(f'{name} expects a list, got {type(value).__name__}')
        return build(column, value)
    return apply


_COMPARISONS: Dict[Operator, Callable[[ColumnElement, Any], ColumnElement]] = {
    Operator.E: lambda column, value: column == value,
    Operator.NE: lambda column, value: column != value,
    Operator.GT: lambda column, value: column > value,
    Operator.LT: lambda column, value: column < value,
    Operator.GTE: lambda column, value: column >= value,
    Operator.LTE: lambda column, value: column <= value,
    Operator.LIKE: lambda column, value: column.like(value),
    Operator.ILIKE: lambda column, value: column.ilike(value),
    Operator.IN: _listed('IN', lambda column, value: column.in_(value)),
    Operator.NOT_IN: _listed('NOT_IN', lambda column, value: column.not_in(value)),
}


def compile_specification(spec: SpecificationInterface, table: Type[TRow]) -> ColumnElement[bool]:
    """Builds the WHERE clause of ``spec`` against the columns of ``table``.

    Args:
        spec: Attribute, AND, OR or NOT specification; composites are compiled recursively.
        table: Mapped class whose attributes carry the compared column names.

    Returns:
        A boolean SQL expression usable in ``Query.filter``.

    Raises:
        ValueError: If a list operator gets a scalar value.
        TypeError: For specification or operator types without a SQL form.
    """
    if isinstance(spec, AndSpecification):
        return and_(*[compile_specification(item, table) for item in spec.specifications])
    if isinstance(spec, OrSpecification):
        return or_(*[compile_specification(item, table) for item in spec.specifications])
    if isinstance(spec, NotSpecification):
        return not_(compile_specification(spec.specification, table))
    if isinstance(spec, AttributeSpecification):
        comparison = _COMPARISONS.get(spec.operator)
        if comparison is None:
            raise TypeError(f'Unsupported operator: {spec.operator}')
        return comparison(getattr(table, spec.attribute_name), spec.attribute_value)
    raise TypeError(f'Unsupported specification type: {type(spec)}')
