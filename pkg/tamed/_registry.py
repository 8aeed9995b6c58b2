"""
The JSON Schemas shipped with tamed, and validators for them.
"""

from __future__ import annotations

from functools import cache
from importlib.resources import files
from typing import TYPE_CHECKING, Any

from attrs import field, frozen
from jsonschema.validators import validator_for
from referencing.jsonschema import EMPTY_REGISTRY
import referencing_loaders

if TYPE_CHECKING:
    from jsonschema.exceptions import ValidationError
    from referencing.jsonschema import Schema, SchemaRegistry

CONFIG_URI = "tag:tamed,2026:config"
REPORT_URI = "tag:tamed,2026:report"


class Invalid(ExceptionGroup):  # type: ignore[reportMissingTypeArgument]
    """
    An instance is not valid under a schema.
    """


@cache
def registry() -> SchemaRegistry:
    resources = referencing_loaders.from_traversable(files("tamed.schemas"))
    return EMPTY_REGISTRY.with_resources(resources).crawl()


@frozen
class Validator:
    """
    A schema, ready to validate instances.
    """

    schema: Schema
    _registry: SchemaRegistry = field(alias="registry", repr=False)

    @classmethod
    def for_uri(cls, uri: str) -> Validator:
        schemas = registry()
        schema = schemas.resolver().lookup(uri).contents
        return cls(schema=schema, registry=schemas)

    def errors(self, instance: Any) -> list[ValidationError]:
        cls = validator_for(self.schema)
        validator = cls(self.schema, registry=self._registry)
        errors = validator.iter_errors(instance)
        return sorted(errors, key=lambda error: [str(e) for e in error.path])

    def is_valid(self, instance: Any) -> bool:
        return not self.errors(instance)

    def validated(self, instance: Any) -> Any:
        errors = self.errors(instance)
        if errors:
            raise Invalid("instance is invalid", errors)
        return instance
