from typing import Any, Dict, Generator


def data_provider_for_invalid_map_params() -> Generator[Dict[str, Any], None, None]:
    yield {'lam': 1.0}
    yield {'lam': 0.0}
    yield {'lam': -0.5}
    yield {'mu': 1.5, 'sigma': 1.0}
    yield {'sigma': 2.0, 'mu': 1.0, 'eta': 2.0}
    yield {'beta0': 1.0}
    yield {'beta1': 0.5}
    yield {'perturb_radius': 0.0}
    yield {'eps_perturb': -0.1}
    yield {'unknown': 1}


def data_provider_for_invalid_flow_params() -> Generator[Dict[str, Any], None, None]:
    yield {'epsilon_iso': 0.5}
    yield {'eps_w': 0.0}
    yield {'time_cap': 0.0}
    yield {'rtol': -1.0}
    yield {'extra_field': 'x'}
