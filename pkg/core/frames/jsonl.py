"""JSON Lines helpers for pydantic records (boxes.jsonl, labels.jsonl, captions.jsonl)."""
import json
from pathlib import Path
from typing import Iterable, List, Type, TypeVar

from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from core.utils.error_handling import ValidationError

M = TypeVar("M", bound=BaseModel)


def write_jsonl(path: Path, records: Iterable[BaseModel]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.model_dump(mode="json"), sort_keys=True) + "\n")
            count += 1
    return count


def read_jsonl(path: Path, model: Type[M]) -> List[M]:
    """Parse and validate every non-blank line of `path` as `model`."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"File not found: {path}", field=str(path))
    records = []
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(model.model_validate_json(line))
            except PydanticValidationError as e:
                raise ValidationError(f"{path}:{line_number}: {e}", field=str(path)) from e
    return records
