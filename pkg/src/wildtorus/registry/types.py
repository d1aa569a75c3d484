from typing import TypeVar

TRow = TypeVar('TRow')
