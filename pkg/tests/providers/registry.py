from typing import Callable, Generator, List, Optional, Tuple

from abstractrepo.order import OrderOptions
from abstractrepo.specification import (
    AndSpecification,
    AttributeSpecification,
    NotSpecification,
    Operator,
    OrSpecification,
    SpecificationInterface,
)

from wildtorus.registry import RunCreateForm, run_filter, run_order

COMMANDS = ('lemmas', 'annulus', 'flow')
STATUSES = ('ok', 'ok', 'violated', 'failed')


def make_run_forms(size: int) -> List[RunCreateForm]:
    forms = []
    for i in range(size):
        command = COMMANDS[i % len(COMMANDS)]
        status = STATUSES[i % len(STATUSES)]
        forms.append(RunCreateForm(
            command=command,
            lam=round(0.9 + 0.01 * i, 2),
            mu_ratio=0.95 if command == 'flow' else 1.0,
            seed=i,
            status=status,
            violations=0 if status == 'ok' else i,
            report_path=f'out/{command}-{i}.json',
            version='0.3.0',
        ))
    return forms


def _ids(forms: List[RunCreateForm], predicate: Callable[[RunCreateForm], bool]) -> List[int]:
    return [i + 1 for i, form in enumerate(forms) if predicate(form)]


def data_provider_for_run_filter(
        size: int = 12,
) -> Generator[Tuple[Optional[SpecificationInterface], List[int]], None, None]:
    forms = make_run_forms(size)
    yield None, _ids(forms, lambda f: True)
    yield AttributeSpecification('command', 'flow', Operator.E), _ids(forms, lambda f: f.command == 'flow')
    yield AttributeSpecification('command', 'flow', Operator.NE), _ids(forms, lambda f: f.command != 'flow')
    yield AttributeSpecification('lam', 0.95, Operator.GTE), _ids(forms, lambda f: f.lam >= 0.95)
    yield AttributeSpecification('lam', 0.95, Operator.GT), _ids(forms, lambda f: f.lam > 0.95)
    yield AttributeSpecification('violations', 3, Operator.LT), _ids(forms, lambda f: f.violations < 3)
    yield AttributeSpecification('seed', 4, Operator.LTE), _ids(forms, lambda f: f.seed <= 4)
    yield AttributeSpecification('command', 'l%', Operator.LIKE), _ids(forms, lambda f: f.command == 'lemmas')
    yield AttributeSpecification('command', 'FL%', Operator.ILIKE), _ids(forms, lambda f: f.command == 'flow')
    yield AttributeSpecification('command', ['annulus', 'flow'], Operator.IN), \
        _ids(forms, lambda f: f.command in ('annulus', 'flow'))
    yield AttributeSpecification('status', ['ok'], Operator.NOT_IN), _ids(forms, lambda f: f.status != 'ok')
    yield AndSpecification(
        AttributeSpecification('command', 'lemmas', Operator.E),
        AttributeSpecification('status', 'ok', Operator.E),
    ), _ids(forms, lambda f: f.command == 'lemmas' and f.status == 'ok')
    yield OrSpecification(
        AttributeSpecification('status', 'failed', Operator.E),
        AttributeSpecification('lam', 0.92, Operator.LT),
    ), _ids(forms, lambda f: f.status == 'failed' or f.lam < 0.92)
    yield NotSpecification(AttributeSpecification('command', 'annulus', Operator.E)), \
        _ids(forms, lambda f: f.command != 'annulus')
    yield run_filter(command='annulus'), _ids(forms, lambda f: f.command == 'annulus')
    yield run_filter(status='violated', lam_min=0.93), _ids(forms, lambda f: f.status == 'violated' and f.lam >= 0.93)
    yield run_filter(lam_min=0.92, lam_max=0.96), _ids(forms, lambda f: 0.92 <= f.lam <= 0.96)


def data_provider_for_run_order(size: int = 12) -> Generator[Tuple[OrderOptions, List[int]], None, None]:
    forms = make_run_forms(size)
    ids = list(range(1, size + 1))
    yield run_order(), ids
    yield run_order('id', True), ids[::-1]
    yield run_order('lam', True), sorted(ids, key=lambda k: -forms[k - 1].lam)
    yield run_order('command'), sorted(ids, key=lambda k: (forms[k - 1].command, k))
    yield run_order('violations', True), sorted(ids, key=lambda k: (-forms[k - 1].violations, k))
    yield run_order('status'), sorted(ids, key=lambda k: (forms[k - 1].status, k))
