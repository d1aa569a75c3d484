from wildtorus.registry.database import RegistryDatabase
from wildtorus.registry.models import Run, RunCreateForm, RunUpdateForm
from wildtorus.registry.runs import RunRepositoryInterface, SqlRunRepository, run_filter, run_order

__all__ = [
    'RegistryDatabase',
    'Run',
    'RunCreateForm',
    'RunUpdateForm',
    'RunRepositoryInterface',
    'SqlRunRepository',
    'run_filter',
    'run_order',
]
