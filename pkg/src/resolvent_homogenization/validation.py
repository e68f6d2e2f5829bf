# Copyright 2021 - 2024 Universität Tübingen, DKFZ, EMBL, and Universität zu Köln
# for the German Human Genome-Phenome Archive (GHGA)
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Utils for validating file payloads against the file schemas."""

import json
from collections.abc import Mapping
from fractions import Fraction
from typing import Any, TypeVar

import jsonschema
import pydantic

from resolvent_homogenization import __version__

JsonObject = Mapping[str, Any]
Schema = TypeVar("Schema", bound=pydantic.BaseModel)


class SpecValidationError(ValueError):
    """Raised when a file payload failed to validate against its schema."""

    def __init__(
        self,
        *,
        payload: JsonObject,
        error: pydantic.ValidationError | jsonschema.ValidationError,
        schema: type[pydantic.BaseModel],
    ):
        message = (
            "The payload failed validation against the corresponding"
            + f" schema: {error}."
            + f"\nThe complete payload was: {json.dumps(payload, default=str)}."
            + f" The schema is '{schema.__name__}' from resolvent-homogenization"
            + f" v{__version__}."
        )
        super().__init__(message)


def get_validated_payload(payload: JsonObject, schema: type[Schema]) -> Schema:
    """Validate a payload against a specified pydantic-based schema
    and return the validated pydantic model.
    """
    try:
        return schema(**payload)
    except pydantic.ValidationError as error:
        raise SpecValidationError(
            payload=payload, error=error, schema=schema
        ) from error


def validate_against_json_schema(
    payload: JsonObject, schema: type[pydantic.BaseModel]
) -> None:
    """Validate an already serialized payload against the json-schema exported from
    a pydantic model. Used for files that are written rather than read.
    """
    try:
        jsonschema.validate(instance=payload, schema=schema.model_json_schema())
    except jsonschema.ValidationError as error:
        raise SpecValidationError(
            payload=payload, error=error, schema=schema
        ) from error


def validated_eps(eps: Any) -> float:
    """Ensure that the provided eps can be interpreted as a reciprocal integer 1/m.

    Accepts numbers as well as strings like '1/8' or '0.125'.
    """
    try:
        value = Fraction(str(eps).strip()) if isinstance(eps, str) else Fraction(eps)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ValueError(f"Could not interpret eps: {eps!r}") from exc
    value = value.limit_denominator(1_000_000)
    if value <= 0 or value > 1 or value.numerator != 1:
        raise ValueError(f"eps must be a reciprocal integer 1/m in (0, 1], got {eps!r}")
    return float(value)
