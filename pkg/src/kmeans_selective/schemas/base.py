"""
Base Pydantic schemas and utilities.
"""
import json
from typing import Any

from pydantic import BaseModel, ConfigDict


class BaseSchema(BaseModel):
    """Base schema with common configuration."""

    model_config = ConfigDict(
        from_attributes=True,
        populate_by_name=True,
        use_enum_values=True,
    )

    def to_json(self) -> str:
        """Deterministic JSON: aliases, sorted keys, two-space indent."""
        return json.dumps(self.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True)


class ErrorResponse(BaseSchema):
    """Machine-readable error payload written to stderr."""

    error: str
    message: str
    details: dict[str, Any] | None = None
