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

"""Eps-sweeps that measure the convergence rates of the approximations, and the
reports they produce.
"""

import csv
import hashlib
import json
import logging
import math
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from pydantic import BaseModel

from resolvent_homogenization.cache import CorrectorCache
from resolvent_homogenization.cell import (
    DEFAULT_CELL_MAX_ITERATIONS,
    CellCorrectors,
    HomogenizedData,
    homogenize,
)
from resolvent_homogenization.coefficients import (
    DEFAULT_ELLIPTICITY_GRID,
    CoefficientField,
    ellipticity_constant,
    load_coefficient_spec,
    skew_bmo_estimate,
)
from resolvent_homogenization.errors import DegenerateFit, HomogenizationError
from resolvent_homogenization.pydantic_ import (
    ConvergenceReport,
    FourierMode,
    ReportRow,
    SignChoice,
    Slopes,
    SweepConfig,
)
from resolvent_homogenization.resolvent import (
    adjoint_corrector_adjoint,
    corrector_term,
    first_order_approx,
    first_order_residual,
    solve_homogenized,
    solve_oscillatory,
    third_order_term,
)
from resolvent_homogenization.steklov import reciprocal
from resolvent_homogenization.torus import TorusField
from resolvent_homogenization.validation import (
    get_validated_payload,
    validate_against_json_schema,
)

CSV_COLUMNS = ("eps", "E0", "E1", "E2", "residual_osc", "runtime_ms")
REFINEMENT_LIMIT = 0.1
DATUM_MODES = 3
DATUM_BAND = 2
MIN_CELL_GRID = 4

log = logging.getLogger(__name__)


class ReportFormat(str, Enum):
    """The file formats of `emit_report`."""

    CSV = "csv"
    STRUCTURED = "structured"


def fit_rate(points: Sequence[tuple[float, float]]) -> float:
    """The least-squares slope of log(error) against log(eps).

    Raises:
        DegenerateFit: for fewer than three points or nonpositive values.
    """
    if len(points) < 3:
        raise DegenerateFit(reason=f"{len(points)} points, at least 3 are needed.")
    eps, errors = np.asarray(points, dtype=float).T
    if np.any(errors <= 0) or np.any(eps <= 0):
        raise DegenerateFit(reason="all eps values and errors must be positive.")
    slope, _ = np.polyfit(np.log(eps), np.log(errors), 1)
    return float(slope)


def default_datum_modes(dim: int, seed: int) -> list[FourierMode]:
    """Fourier modes of a seeded real trigonometric polynomial with three
    frequencies of band 2 and unit L2 norm.
    """
    rng = np.random.default_rng(seed)
    vectors = [
        [index - DATUM_BAND for index in k]
        for k in np.ndindex(*([2 * DATUM_BAND + 1] * dim))
    ]
    # one representative of each pair k, -k
    candidates = [k for k in vectors if any(k) and next(e for e in k if e) > 0]
    count = min(DATUM_MODES, len(candidates))
    chosen = sorted(rng.choice(len(candidates), size=count, replace=False))
    amplitudes = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    amplitudes /= math.sqrt(2 * float(np.sum(np.abs(amplitudes) ** 2)))
    modes = []
    for index, amplitude in zip(chosen, amplitudes):
        k = candidates[index]
        modes.append(FourierMode(k=k, re=amplitude.real, im=amplitude.imag))
        modes.append(
            FourierMode(
                k=[-entry for entry in k], re=amplitude.real, im=-amplitude.imag
            )
        )
    return modes


def datum_field(modes: Sequence[FourierMode], dim: int, n: int) -> TorusField:
    """The datum f on an n^d torus grid."""
    return TorusField.from_modes(
        dim, n, [(mode.k, complex(mode.re, mode.im)) for mode in modes]
    )


def datum_norm(modes: Sequence[FourierMode], dim: int) -> float:
    """||f|| in L2, computed on the smallest grid holding the datum."""
    band = max(abs(index) for mode in modes for index in mode.k)
    return datum_field(modes, dim, 2 * band + 2).l2_norm()


def default_datum(dim: int, n: int, seed: int) -> TorusField:
    """The seeded default datum f with unit L2 norm on an n^d grid."""
    return datum_field(default_datum_modes(dim, seed), dim, n)


def cell_grid(band: int, grid_rule: int) -> int:
    """The smallest power of two that is at least grid_rule * band."""
    target = max(MIN_CELL_GRID, grid_rule * band)
    return 1 << (target - 1).bit_length()


def config_hash(config: SweepConfig) -> str:
    """SHA-256 of the canonical JSON form of a sweep config."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _read_payload(path: Path) -> Any:
    with open(path, encoding="utf-8") as file:
        if path.suffix in (".yaml", ".yml"):
            return yaml.safe_load(file)
        return json.load(file)


def load_sweep_config(path: Path) -> SweepConfig:
    """Read and validate a sweep config; a relative coefficient path is resolved
    against the directory of the sweep file.
    """
    path = Path(path)
    config = get_validated_payload(_read_payload(path), SweepConfig)
    if isinstance(config.coefficient, Path) and not config.coefficient.is_absolute():
        config = config.model_copy(
            update={"coefficient": path.parent / config.coefficient}
        )
    return config


def load_field(config: SweepConfig) -> CoefficientField:
    """The coefficient field referenced by a sweep config."""
    if isinstance(config.coefficient, Path):
        return load_coefficient_spec(config.coefficient)
    return CoefficientField.from_spec(config.coefficient)


class _RowMeasurement(BaseModel):
    """All error norms of one row before the sign of L is fixed."""

    eps: float
    E0: float
    E1: float
    E2_by_sign: dict[SignChoice, float]
    E2_reduced: float
    smoothing_gap: float
    third_order_norm: float
    first_order_residual: float
    residual_osc: float
    runtime_ms: float

    def to_row(self, sign: SignChoice) -> ReportRow:
        return ReportRow(
            eps=self.eps,
            E0=self.E0,
            E1=self.E1,
            E2=self.E2_by_sign[sign],
            residual_osc=self.residual_osc,
            runtime_ms=self.runtime_ms,
            E2_by_sign=self.E2_by_sign,
            E2_reduced=self.E2_reduced,
            smoothing_gap=self.smoothing_gap,
            third_order_norm=self.third_order_norm,
            first_order_residual=self.first_order_residual,
        )


class _Sweep:
    """Shared immutable inputs of the rows of one sweep."""

    def __init__(
        self,
        config: SweepConfig,
        field: CoefficientField,
        correctors: CellCorrectors,
        homogenized: HomogenizedData,
        *,
        n_cell: int,
        lambda_low: float,
        datum: Sequence[FourierMode],
        workers: int | None,
    ):
        self.config = config
        self.field = field
        self.correctors = correctors
        self.homogenized = homogenized
        self.n_cell = n_cell
        self.lambda_low = lambda_low
        self.datum = datum
        self.workers = workers
        self.signs = (
            [config.sign]
            if config.sign is not None
            else [SignChoice.PRIMAL_MINUS_ADJOINT, SignChoice.ADJOINT_MINUS_PRIMAL]
        )

    def measure(self, eps: float, refinement: int = 1) -> _RowMeasurement:
        """Solve the reference problem at eps and measure every error norm."""
        started = time.perf_counter()
        config = self.config
        m = reciprocal(eps)
        n = self.n_cell * m * refinement
        f = datum_field(self.datum, self.field.dim, n)
        reference = solve_oscillatory(
            self.field,
            eps,
            f,
            tol=config.tol,
            max_iterations=config.max_iterations,
            lambda_low=self.lambda_low,
            workers=self.workers,
        )
        u_eps = reference.u
        u0 = solve_homogenized(self.homogenized.a0, f)
        first = first_order_approx(
            u0, self.correctors.primal, eps, smoothing=config.smoothing
        ).value

        def corrections(smoothing: bool) -> tuple[TorusField, TorusField]:
            """K_ε f and (K̃_ε)* f."""
            return (
                corrector_term(u0, self.correctors.primal, eps, smoothing),
                adjoint_corrector_adjoint(
                    f, self.homogenized, self.correctors, eps, smoothing
                ),
            )

        primal, adjoint = corrections(config.smoothing)
        other_primal, other_adjoint = corrections(not config.smoothing)
        reduced = u0 + eps * primal
        full = reduced + eps * adjoint
        third_order = {
            sign: eps * third_order_term(f, self.homogenized, sign)
            for sign in self.signs
        }
        measurement = _RowMeasurement(
            eps=eps,
            E0=(u_eps - u0).l2_norm(),
            E1=(u_eps - first).h1_norm(),
            E2_by_sign={
                sign: (u_eps - full - third_order[sign]).l2_norm()
                for sign in self.signs
            },
            E2_reduced=(u_eps - reduced).l2_norm(),
            smoothing_gap=eps
            * (primal + adjoint - other_primal - other_adjoint).l2_norm(),
            third_order_norm=third_order[self.signs[0]].l2_norm(),
            first_order_residual=first_order_residual(
                self.field, eps, f, first, self.workers
            ),
            residual_osc=reference.residual,
            runtime_ms=1000 * (time.perf_counter() - started),
        )
        log.info(
            "Measured a sweep row.",
            extra={
                "eps": eps,
                "grid": n,
                "E0": measurement.E0,
                "E1": measurement.E1,
                "E2_by_sign": {
                    sign.value: error for sign, error in measurement.E2_by_sign.items()
                },
            },
        )
        return measurement


def _slope(
    name: str,
    eps: Sequence[float],
    errors: Sequence[float],
    exact_bound: float,
    exact: list[str],
) -> float | None:
    """Fit one slope; errors below exact_bound mark the column as exact."""
    if all(error <= exact_bound for error in errors):
        exact.append(name)
        return None
    try:
        slope = fit_rate(list(zip(eps, errors)))
    except DegenerateFit as error:
        log.warning("Could not fit %s.", name, extra={"reason": error.reason})
        return None
    log.info("Fitted a convergence slope.", extra={"slope_name": name, "slope": slope})
    return slope


def _homogenize(
    field: CoefficientField,
    n_cell: int,
    config: SweepConfig,
    *,
    cache: CorrectorCache | None,
    cell_max_iterations: int,
    ellipticity_grid: int,
    workers: int | None,
) -> tuple[CellCorrectors, HomogenizedData]:
    cached = cache.load(field, n_cell, config.tol) if cache else None
    if cached is not None:
        return cached
    result = homogenize(
        field,
        n_cell,
        config.tol,
        max_iterations=cell_max_iterations,
        ellipticity_grid=ellipticity_grid,
        workers=workers,
    )
    if cache:
        cache.store(field, n_cell, config.tol, *result)
    return result


def run_sweep(
    config: SweepConfig,
    *,
    jobs: int = 1,
    workers: int | None = None,
    cache: CorrectorCache | None = None,
    cell_max_iterations: int = DEFAULT_CELL_MAX_ITERATIONS,
    ellipticity_grid: int = DEFAULT_ELLIPTICITY_GRID,
) -> ConvergenceReport:
    """Measure E0, E1 and E2 at every eps of the config and fit their slopes.

    Rows are solved on `jobs` threads. A failing row turns the outcome into a
    partial report without slopes.
    """
    field = load_field(config)
    lambda_low, lambda_high = ellipticity_constant(field, ellipticity_grid)
    n_cell = cell_grid(field.band, config.grid_rule)
    correctors, homogenized = _homogenize(
        field,
        n_cell,
        config,
        cache=cache,
        cell_max_iterations=cell_max_iterations,
        ellipticity_grid=ellipticity_grid,
        workers=workers,
    )
    datum = config.datum or default_datum_modes(field.dim, config.seed)
    sweep = _Sweep(
        config,
        field,
        correctors,
        homogenized,
        n_cell=n_cell,
        lambda_low=lambda_low,
        datum=datum,
        workers=workers,
    )
    exact_bound = config.exact_threshold * datum_norm(datum, field.dim)

    measurements: list[_RowMeasurement] = []
    error_message: str | None = None
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        futures = [executor.submit(sweep.measure, eps) for eps in config.eps]
        for future in futures:
            try:
                measurements.append(future.result())
            except HomogenizationError as error:
                error_message = str(error)
                log.warning(
                    "A sweep row failed, the report will be partial.",
                    extra={"error": error_message},
                )
                for pending in futures:
                    pending.cancel()
                break
            except Exception:
                for pending in futures:
                    pending.cancel()
                raise
    partial = error_message is not None

    eps = [measurement.eps for measurement in measurements]
    exact: list[str] = []
    sign_slopes: dict[SignChoice, float | None] = {}
    if not partial:
        for sign in sweep.signs:
            sign_slopes[sign] = _slope(
                f"s2[{sign.value}]",
                eps,
                [measurement.E2_by_sign[sign] for measurement in measurements],
                exact_bound,
                [],
            )
    if config.sign is not None:
        sign = config.sign
    else:
        # the larger slope wins; ties and missing fits keep the first sign
        candidates = {
            choice: slope for choice, slope in sign_slopes.items() if slope is not None
        }
        sign = (
            max(candidates, key=candidates.__getitem__)
            if candidates
            else sweep.signs[0]
        )
    rows = [measurement.to_row(sign) for measurement in measurements]

    slopes = Slopes()
    if not partial:
        columns = {
            "s0": [row.E0 for row in rows],
            "s1": [row.E1 for row in rows],
            "s2": [row.E2 for row in rows],
            "s2_reduced": [row.E2_reduced for row in rows],
            "s_smoothing_gap": [row.smoothing_gap for row in rows],
        }
        fitted = {
            name: _slope(name, eps, errors, exact_bound, exact)
            for name, errors in columns.items()
        }
        slopes = Slopes(**fitted, exact=exact)

    refinement_change = None
    if config.refinement_check and not partial and rows:
        refined = sweep.measure(config.eps[-1], refinement=2).to_row(sign)
        refinement_change = {
            name: abs(getattr(refined, name) - getattr(rows[-1], name))
            / getattr(rows[-1], name)
            for name in ("E0", "E1", "E2")
            if getattr(rows[-1], name) > exact_bound
        }

    monotone = None
    if rows:
        last = rows[-1]
        monotone = last.E2 <= last.E0 or max(last.E0, last.E2) <= exact_bound

    failures = _acceptance_failures(config, slopes, refinement_change, partial)
    report = ConvergenceReport(
        rows=rows,
        slopes=slopes,
        config_hash=config_hash(config),
        seed=config.seed,
        sign=sign,
        sign_slopes=sign_slopes,
        lambda_low=lambda_low,
        lambda_high=lambda_high,
        bmo_estimate=(
            skew_bmo_estimate(field, config.bmo_depth)
            if config.bmo_depth is not None
            else None
        ),
        a0=homogenized.a0.tolist(),
        refinement_change=refinement_change,
        monotone=monotone,
        partial=partial,
        error=error_message,
        passed=not failures,
        failures=failures,
    )
    log.info(
        "Finished the sweep.",
        extra={"passed": report.passed, "sign": sign.value, "failures": failures},
    )
    return report


def _acceptance_failures(
    config: SweepConfig,
    slopes: Slopes,
    refinement_change: dict[str, float] | None,
    partial: bool,
) -> list[str]:
    if partial:
        return ["the sweep is partial"]
    failures = []
    thresholds = {
        0: ("s0", config.first_order_threshold),
        1: ("s1", config.first_order_threshold),
        2: ("s2", config.second_order_threshold),
    }
    for order in config.orders:
        name, threshold = thresholds[order]
        if name in slopes.exact:
            continue
        slope = getattr(slopes, name)
        if slope is None:
            failures.append(f"{name}: no slope could be fitted")
        elif slope < threshold:
            failures.append(f"{name} = {slope:.3f} < {threshold}")
    for name, change in (refinement_change or {}).items():
        if change > REFINEMENT_LIMIT:
            failures.append(
                f"{name} moved by {change:.1%} when the reference grid was doubled"
            )
    return failures


def emit_report(
    report: ConvergenceReport,
    output_dir: Path,
    formats: Sequence[ReportFormat] = (ReportFormat.CSV, ReportFormat.STRUCTURED),
) -> list[Path]:
    """Write `report.csv` and/or `report.json` and return the written paths.

    The structured report is validated against the json-schema of the report
    model before it is written.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if ReportFormat.CSV in formats:
        path = output_dir / "report.csv"
        with open(path, "w", encoding="utf-8", newline="") as file:
            writer = csv.writer(file)
            writer.writerow(CSV_COLUMNS)
            for row in report.rows:
                writer.writerow([getattr(row, column) for column in CSV_COLUMNS])
        written.append(path)
    if ReportFormat.STRUCTURED in formats:
        payload = report.model_dump(mode="json")
        validate_against_json_schema(payload, ConvergenceReport)
        path = output_dir / "report.json"
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        written.append(path)
    return written
