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

"""Contains pydantic BaseModel-based versions of the file formats.

Please note, these pydantic-based models are the source of truth for all other
representations of the files read and written by this package, such as the
json-schemas used to validate emitted reports.
"""

from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from resolvent_homogenization.validation import validated_eps

CONJUGATE_SYMMETRY_TOL = 1e-12


class FourierMode(BaseModel):
    """A single term amp * exp(2πi k·y) of a trigonometric polynomial."""

    k: list[int] = Field(..., description="The integer wave vector.", min_length=1)
    re: float = Field(..., description="Real part of the complex amplitude.")
    im: float = Field(default=0.0, description="Imaginary part of the amplitude.")
    model_config = ConfigDict(title="fourier_mode")


def check_conjugate_symmetry(modes: list[FourierMode], *, what: str) -> None:
    """Raise a ValueError unless the modes describe a real-valued function."""
    amplitudes: dict[tuple[int, ...], complex] = {}
    for mode in modes:
        key = tuple(mode.k)
        amplitudes[key] = amplitudes.get(key, 0j) + complex(mode.re, mode.im)
    for key, amplitude in amplitudes.items():
        partner = amplitudes.get(tuple(-index for index in key), 0j)
        if abs(amplitude - np.conj(partner)) > CONJUGATE_SYMMETRY_TOL:
            raise ValueError(
                f"{what} is not conjugate-symmetric at k={list(key)}:"
                + f" amplitude {amplitude} vs conjugate partner {partner}."
            )


class GridBlock(BaseModel):
    """Uniform samples of every matrix entry on the unit cell [-1/2, 1/2)^d."""

    n: int = Field(..., ge=2, description="Number of samples per axis.")
    samples: list[list[list[float]]] = Field(
        ...,
        description=(
            "samples[i][j] holds the n^d row-major samples of the entry a_ij at the"
            + " points y = -1/2 + l/n."
        ),
    )
    model_config = ConfigDict(title="grid_block")


class CoefficientSpec(BaseModel):
    """Specification of a 1-periodic d x d coefficient matrix a(y)."""

    dim: int = Field(..., ge=1, description="The spatial dimension d.")
    entries: list[list[list[FourierMode]]] | None = Field(
        default=None,
        description="entries[i][j] lists the Fourier modes of the entry a_ij.",
    )
    grid: GridBlock | None = Field(
        default=None, description="Alternative to entries: uniform grid samples."
    )
    real: bool = Field(
        default=True, description="Asserts that all entries are real-valued."
    )
    description: str | None = Field(
        default=None, description="Free text describing the coefficient."
    )
    model_config = ConfigDict(title="coefficient_spec")

    @model_validator(mode="after")
    def check_layout(self):
        """Ensure exactly one representation with consistent shapes is given."""
        if (self.entries is None) == (self.grid is None):
            raise ValueError("Exactly one of 'entries' or 'grid' must be given.")
        rows = (
            self.entries
            if self.entries is not None
            else self.grid.samples  # type: ignore[union-attr]
        )
        if len(rows) != self.dim or any(len(row) != self.dim for row in rows):
            raise ValueError(f"Expected a {self.dim} x {self.dim} matrix of entries.")
        if self.entries is not None:
            for i, row in enumerate(self.entries):
                for j, modes in enumerate(row):
                    if any(len(mode.k) != self.dim for mode in modes):
                        raise ValueError(
                            f"Entry ({i}, {j}) has wave vectors of the wrong length."
                        )
                    if self.real:
                        check_conjugate_symmetry(modes, what=f"Entry ({i}, {j})")
        else:
            expected = self.grid.n**self.dim  # type: ignore[union-attr]
            for row in self.grid.samples:  # type: ignore[union-attr]
                if any(len(samples) != expected for samples in row):
                    raise ValueError(f"Every entry needs exactly {expected} samples.")
        return self


class SignChoice(str, Enum):
    """The sign convention of the third-order operator L."""

    ADJOINT_MINUS_PRIMAL = "adjoint-minus-primal"
    PRIMAL_MINUS_ADJOINT = "primal-minus-adjoint"


class SweepConfig(BaseModel):
    """The configuration of one eps-sweep of the convergence harness."""

    coefficient: CoefficientSpec | Path = Field(
        ...,
        description=(
            "Inline coefficient specification or path to a coefficient spec file"
            + " (relative paths are resolved against the sweep file)."
        ),
    )
    eps: list[float] = Field(
        ...,
        min_length=1,
        description="Strictly decreasing reciprocal integers, e.g. ['1/8', '1/16'].",
    )
    grid_rule: int = Field(
        default=8,
        ge=4,
        description=(
            "Cell resolution multiplier: each period of a(x/eps) is resolved by"
            + " grid_rule * band points, so the torus grid is that times 1/eps."
        ),
    )
    datum: list[FourierMode] | None = Field(
        default=None,
        description="Fourier modes of f. Defaults to a seeded 3-mode polynomial.",
    )
    orders: list[int] = Field(
        default=[0, 1, 2], description="Approximation orders whose slopes must pass."
    )
    smoothing: bool = Field(
        default=True, description="Use the Steklov smoothing in the correctors."
    )
    sign: SignChoice | None = Field(
        default=None,
        description="Sign of L; null adjudicates between both signs numerically.",
    )
    tol: float = Field(default=1e-10, gt=0, description="Krylov tolerance.")
    max_iterations: int = Field(
        default=20_000, ge=1, description="Iteration cap of the oscillatory solves."
    )
    seed: int = Field(default=0, description="Seed of the default datum.")
    bmo_depth: int | None = Field(
        default=None,
        ge=0,
        description="If set, record the dyadic BMO estimate of the skew part.",
    )
    refinement_check: bool = Field(
        default=False,
        description="Re-solve the smallest eps on a doubled reference grid.",
    )
    exact_threshold: float = Field(
        default=1e-9,
        ge=0,
        description="Errors below this multiple of ||f|| count as exact.",
    )
    first_order_threshold: float = Field(default=0.9)
    second_order_threshold: float = Field(default=1.8)
    output_dir: Path | None = Field(default=None)
    model_config = ConfigDict(title="sweep_config")

    @field_validator("eps", mode="before")
    @classmethod
    def parse_eps(cls, values: Any):
        """Accept '1/m' strings next to plain numbers."""
        if not isinstance(values, list):
            return values
        return [validated_eps(value) for value in values]

    @field_validator("eps")
    @classmethod
    def check_decreasing(cls, values: list[float]):
        """Ensure the eps list is strictly decreasing."""
        if any(later >= earlier for earlier, later in zip(values, values[1:])):
            raise ValueError("The eps list must be strictly decreasing.")
        return values

    @field_validator("orders")
    @classmethod
    def check_orders(cls, orders: list[int]):
        """Ensure only the orders 0, 1 and 2 are requested."""
        if any(order not in (0, 1, 2) for order in orders):
            raise ValueError(f"Orders must be 0, 1 or 2, got {orders}.")
        return orders

    @field_validator("datum")
    @classmethod
    def check_datum(cls, modes: list[FourierMode] | None):
        """Ensure the datum is real and nonzero."""
        if modes is None:
            return modes
        if not any(mode.re or mode.im for mode in modes):
            raise ValueError("The datum f must be nonzero.")
        check_conjugate_symmetry(modes, what="The datum f")
        return modes


class ReportRow(BaseModel):
    """Error norms measured at one value of eps."""

    eps: float
    E0: float = Field(..., description="||u^eps - u|| in L2.")
    E1: float = Field(..., description="||u^eps - S u - eps U^eps|| in H1.")
    E2: float = Field(..., description="||u^eps - second order approximation|| in L2.")
    residual_osc: float = Field(..., description="Relative residual of the reference.")
    runtime_ms: float
    E2_by_sign: dict[SignChoice, float] = Field(default_factory=dict)
    E2_reduced: float | None = Field(
        default=None, description="E2 with the eps L and eps (K~)* terms dropped."
    )
    smoothing_gap: float | None = Field(
        default=None,
        description="L2 distance of the smoothing-on and smoothing-off approximations.",
    )
    third_order_norm: float | None = Field(
        default=None, description="||eps L f|| in L2."
    )
    first_order_residual: float | None = Field(
        default=None, description="||F^eps|| in H^-1 (diagnostic only)."
    )
    model_config = ConfigDict(title="report_row")


class Slopes(BaseModel):
    """Fitted log-log slopes; None marks an exact case or a missing fit."""

    s0: float | None = None
    s1: float | None = None
    s2: float | None = None
    s2_reduced: float | None = None
    s_smoothing_gap: float | None = None
    exact: list[str] = Field(
        default_factory=list, description="Names of error columns that vanished."
    )
    model_config = ConfigDict(title="slopes")


class ConvergenceReport(BaseModel):
    """The outcome of an eps-sweep."""

    rows: list[ReportRow]
    slopes: Slopes
    config_hash: str
    seed: int
    sign: SignChoice
    sign_slopes: dict[SignChoice, float | None] = Field(default_factory=dict)
    lambda_low: float
    lambda_high: float
    bmo_estimate: float | None = None
    a0: list[list[float]]
    refinement_change: dict[str, float] | None = None
    monotone: bool | None = Field(
        default=None, description="E2 <= E0 at the smallest eps."
    )
    partial: bool = False
    error: str | None = None
    passed: bool
    failures: list[str] = Field(default_factory=list)
    model_config = ConfigDict(title="convergence_report")


class LemmaRecord(BaseModel):
    """One measurement of a smoothing-operator estimate."""

    kind: str
    eps: float
    lhs: float
    rhs_part: float
    ratio: float | None
    model_config = ConfigDict(title="lemma_record")


# Lists file schemas (values) by file kinds (key):
schema_registry: dict[str, type[BaseModel]] = {
    "coefficient_spec": CoefficientSpec,
    "sweep_config": SweepConfig,
    "convergence_report": ConvergenceReport,
    "lemma_record": LemmaRecord,
}
