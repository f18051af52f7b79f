"""JSON validation and error handling for schema, state and checkpoint files."""

import json
import logging
from pathlib import Path
from typing import Any, Optional, TypeVar, Union

from pydantic import BaseModel, ValidationError

from models.errors import InvalidInput, ParseError
from models.schemas import IndicatorSchema, ModelCheckpoint, YearStateDocument

logger = logging.getLogger(__name__)

DocumentT = TypeVar("DocumentT", bound=BaseModel)


class ValidationService:
    """
    Reads JSON documents from disk and validates them against Pydantic schemas.

    Handles:
    - Unreadable files and malformed JSON (ParseError with the path)
    - Missing or invalid fields (InvalidInput with the first pydantic error)
    """

    @staticmethod
    def safe_parse_json(text: str) -> Optional[Any]:
        """
        Parse JSON text, tolerating a UTF-8 BOM and surrounding whitespace.

        Args:
            text: Raw file content

        Returns:
            Parsed JSON value or None if parsing fails
        """
        if not isinstance(text, str):
            logger.error(f"Expected string, got {type(text).__name__}")
            return None
        try:
            return json.loads(text.lstrip("\ufeff").strip())
        except json.JSONDecodeError as e:
            logger.error(f"Failed to parse JSON: {e}")
            return None

    def read_json(self, path: Union[str, Path]) -> Any:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"'{path}' is not valid UTF-8: {e.reason} at byte {e.start}") from e
        except OSError as e:
            raise ParseError(f"Cannot read '{path}': {e}") from e
        data = self.safe_parse_json(text)
        if data is None:
            raise ParseError(f"'{path}' is not valid JSON")
        return data

    @staticmethod
    def validate_document(model: type[DocumentT], data: Any, source: str) -> DocumentT:
        """
        Validate parsed JSON against a Pydantic model.

        Raises:
            InvalidInput: naming the source and the first failing field
        """
        try:
            return model.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"]) or "<root>"
            logger.debug(f"Invalid {model.__name__} data from {source}: {e}")
            raise InvalidInput(
                f"{source}: invalid {model.__name__} at '{location}': {first['msg']}"
            ) from e

    def load_schema(self, path: Union[str, Path]) -> IndicatorSchema:
        """Schema file: JSON array of {name, direction} (an {"indicators": [...]} object also works)."""
        data = self.read_json(path)
        if isinstance(data, list):
            data = {"indicators": data}
        schema = self.validate_document(IndicatorSchema, data, str(path))
        logger.info(f"[SCHEMA] Loaded {schema.size} indicators from {path}")
        return schema

    def load_state(self, path: Union[str, Path]) -> YearStateDocument:
        return self.validate_document(YearStateDocument, self.read_json(path), str(path))

    def load_checkpoint(self, path: Union[str, Path]) -> ModelCheckpoint:
        return self.validate_document(ModelCheckpoint, self.read_json(path), str(path))


validation_service = ValidationService()
