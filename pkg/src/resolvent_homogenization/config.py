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

"""Configuration of the command line tool."""

from pathlib import Path

from hexkit.config import config_from_yaml
from hexkit.log import LoggingConfig
from pydantic import Field

SERVICE_NAME = "resolvent_homogenization"


@config_from_yaml(prefix="homog")
class Config(LoggingConfig):
    """Config parameters and their defaults."""

    service_name: str = Field(
        default=SERVICE_NAME, description="Short name of this tool."
    )
    service_instance_id: str = Field(
        default="local",
        description=(
            "A string that uniquely identifies this run. This is included in log"
            + " messages."
        ),
        examples=["workstation-01"],
    )
    tol: float = Field(
        default=1e-10, gt=0, description="Tolerance of all Krylov solves."
    )
    cell_max_iterations: int = Field(
        default=10_000, ge=1, description="Iteration cap of the cell problem solves."
    )
    resolvent_max_iterations: int = Field(
        default=20_000, ge=1, description="Iteration cap of the oscillatory solves."
    )
    ellipticity_grid: int = Field(
        default=64,
        ge=2,
        description="Samples per axis used to estimate the ellipticity bounds.",
    )
    n_cell: int = Field(
        default=64, ge=4, description="Default cell grid of the 'cell' command."
    )
    jobs: int = Field(
        default=1, ge=1, description="Number of eps rows solved concurrently."
    )
    transform_workers: int | None = Field(
        default=None,
        description="Worker threads of each FFT (None leaves the scipy default).",
    )
    cache_dir: Path | None = Field(
        default=None,
        description="Directory of the corrector cache. No caching if not set.",
        examples=["/tmp/homog-cache"],
    )
