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

"""Generates the config schema and the example config from the Config class of
the command line tool. With --check, only verifies that both files are up to date.
"""

import json
import sys
from pathlib import Path
from typing import Any

import typer
import yaml

from resolvent_homogenization.cli import echo_failure, echo_success
from resolvent_homogenization.config import Config

HERE = Path(__file__).parent.resolve()
REPO_ROOT_DIR = HERE.parent
CONFIG_SCHEMA_PATH = REPO_ROOT_DIR / "config_schema.json"
EXAMPLE_CONFIG_PATH = REPO_ROOT_DIR / "example_config.yaml"


class ValidationError(RuntimeError):
    """Raised when the config docs are not up to date."""


def get_schema() -> str:
    """The json-schema of the config, one key per line."""
    return json.dumps(Config.model_json_schema(), indent=2) + "\n"


def get_example() -> str:
    """The example config with all defaults filled in."""
    example: dict[str, Any] = json.loads(Config().model_dump_json())
    return yaml.safe_dump(example)


def update_docs():
    """Write both files."""
    CONFIG_SCHEMA_PATH.write_text(get_schema(), encoding="utf-8")
    EXAMPLE_CONFIG_PATH.write_text(get_example(), encoding="utf-8")


def check_docs():
    """Compare both files against freshly generated ones."""
    for path, expected in (
        (CONFIG_SCHEMA_PATH, get_schema()),
        (EXAMPLE_CONFIG_PATH, get_example()),
    ):
        if not path.exists() or path.read_text(encoding="utf-8") != expected:
            raise ValidationError(f"'{path.name}' is not up to date.")


def main(check: bool = typer.Option(False, help="Only check, don't update.")):
    """Update or check the config docs."""
    if check:
        try:
            check_docs()
        except ValidationError as error:
            echo_failure(f"Validation failed: {error}")
            sys.exit(1)
        echo_success("Config docs are up to date.")
        return

    update_docs()
    echo_success("Successfully updated the config docs.")


if __name__ == "__main__":
    typer.run(main)
