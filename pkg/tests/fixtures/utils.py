from typing import Any, Dict, List, Union

from wildtorus.registry import Run


def dumps(data: Union[List[Run], Run]) -> Union[List[Dict[str, Any]], Dict[str, Any]]:
    """Model fields without the creation timestamp, for comparing stored runs."""
    if isinstance(data, list):
        return [dumps(item) for item in data]
    return data.model_dump(exclude={'created_at'})
