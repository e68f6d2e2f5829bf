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

"""The command line interface."""

import json
from pathlib import Path
from typing import Annotated

import numpy as np
import typer
from hexkit.log import configure_logging

from resolvent_homogenization.cache import CorrectorCache
from resolvent_homogenization.cell import homogenize
from resolvent_homogenization.coefficients import (
    ellipticity_constant,
    load_coefficient_spec,
)
from resolvent_homogenization.config import Config
from resolvent_homogenization.errors import HomogenizationError
from resolvent_homogenization.harness import (
    ReportFormat,
    cell_grid,
    default_datum,
    emit_report,
    load_sweep_config,
    run_sweep,
)
from resolvent_homogenization.pydantic_ import SignChoice
from resolvent_homogenization.resolvent import (
    first_order_approx,
    second_order_approx,
    solve_homogenized,
    solve_oscillatory,
)
from resolvent_homogenization.steklov import run_lemma_battery
from resolvent_homogenization.validation import SpecValidationError, validated_eps

EXIT_FAILED_ACCEPTANCE = 1
EXIT_ERROR = 2

# invalid input files and domain failures exit with EXIT_ERROR
HANDLED_ERRORS = (HomogenizationError, SpecValidationError, ValueError, OSError)

cli = typer.Typer(
    help="Cell correctors, homogenized matrices and resolvent convergence sweeps.",
    no_args_is_help=True,
)

ConfigYamlOption = Annotated[
    Path | None,
    typer.Option(help="YAML file with config values, see example_config.yaml."),
]


def echo_success(message: str):
    """Print a success message."""
    typer.echo(typer.style(text=message, fg=typer.colors.GREEN))


def echo_failure(message: str):
    """Print a failure message."""
    typer.echo(typer.style(text=message, fg=typer.colors.RED), err=True)


def _setup(config_yaml: Path | None, **overrides) -> Config:
    """Load the config and configure logging."""
    values = {key: value for key, value in overrides.items() if value is not None}
    config = (
        Config(config_yaml=config_yaml, **values)  # type: ignore[call-arg]
        if config_yaml
        else Config(**values)  # type: ignore[call-arg]
    )
    configure_logging(config=config)
    return config


def _parse_eps(eps: str) -> float:
    try:
        return validated_eps(eps)
    except ValueError as error:
        raise typer.BadParameter(str(error)) from error


def _fail(error: Exception):
    echo_failure(str(error))
    raise typer.Exit(code=EXIT_ERROR) from error


def _format_matrix(matrix: np.ndarray) -> str:
    return "\n".join(
        "  " + "  ".join(f"{entry: .10f}" for entry in row)
        for row in np.atleast_2d(matrix)
    )


@cli.command()
def cell(
    coeff: Annotated[Path, typer.Option(help="Coefficient spec file (JSON or YAML).")],
    n_cell: Annotated[int | None, typer.Option(help="Cell grid per axis.")] = None,
    tol: Annotated[float | None, typer.Option(help="Krylov tolerance.")] = None,
    config_yaml: ConfigYamlOption = None,
):
    """Solve the cell problems and print the homogenized data."""
    config = _setup(config_yaml, n_cell=n_cell, tol=tol)
    try:
        field = load_coefficient_spec(coeff)
        lambda_low, lambda_high = ellipticity_constant(field, config.ellipticity_grid)
        cache = CorrectorCache(config.cache_dir) if config.cache_dir else None
        cached = cache.load(field, config.n_cell, config.tol) if cache else None
        correctors, homogenized = cached or homogenize(
            field,
            config.n_cell,
            config.tol,
            max_iterations=config.cell_max_iterations,
            ellipticity_grid=config.ellipticity_grid,
            workers=config.transform_workers,
        )
        if cache and cached is None:
            cache.store(field, config.n_cell, config.tol, correctors, homogenized)
    except HANDLED_ERRORS as error:
        _fail(error)

    typer.echo(f"lambda bounds: [{lambda_low:.10g}, {lambda_high:.10g}]")
    typer.echo("a0:")
    typer.echo(_format_matrix(homogenized.a0))
    typer.echo(f"adjoint defect |(a*)0 - (a0)^T|: {homogenized.adjoint_defect:.3e}")
    typer.echo(
        "sup |N^j|: "
        + ", ".join(f"{value:.6g}" for value in correctors.primal.sup_norms)
    )
    typer.echo(
        "sup |Ntilde^j|: "
        + ", ".join(f"{value:.6g}" for value in correctors.adjoint.sup_norms)
    )
    typer.echo(
        "solenoidality defects g: "
        + ", ".join(f"{value:.3e}" for value in homogenized.g.solenoidality_defects)
    )
    typer.echo(
        "solenoidality defects gtilde: "
        + ", ".join(
            f"{value:.3e}" for value in homogenized.gtilde.solenoidality_defects
        )
    )
    for name, constants in (("c", homogenized.c), ("ctilde", homogenized.ctilde)):
        for j in range(field.dim):
            typer.echo(f"{name}[j={j + 1}] (rows k, columns i):")
            typer.echo(_format_matrix(constants[j]))


@cli.command()
def lemmas(
    eps: Annotated[
        list[str], typer.Option(help="Scale parameters 1/m, repeat the option.")
    ],
    n: Annotated[int, typer.Option(help="Torus grid per axis.")] = 256,
    trials: Annotated[int, typer.Option(help="Random trials per estimate.")] = 10,
    seed: Annotated[int, typer.Option(help="Seed of the random fields.")] = 0,
    dim: Annotated[int, typer.Option(help="Spatial dimension.")] = 2,
    out: Annotated[Path | None, typer.Option(help="CSV file, stdout if unset.")] = None,
    config_yaml: ConfigYamlOption = None,
):
    """Measure the estimates of the smoothing operator and emit a CSV."""
    _setup(config_yaml)
    try:
        records = run_lemma_battery(
            [_parse_eps(value) for value in eps], n=n, trials=trials, seed=seed, dim=dim
        )
    except HANDLED_ERRORS as error:
        _fail(error)
    lines = ["kind,eps,lhs,rhs_part,ratio"] + [
        ",".join(
            str(value) if value is not None else ""
            for value in (
                record.kind,
                record.eps,
                record.lhs,
                record.rhs_part,
                record.ratio,
            )
        )
        for record in records
    ]
    text = "\n".join(lines) + "\n"
    if out:
        out.write_text(text, encoding="utf-8")
        echo_success(f"Wrote {len(records)} records to '{out}'.")
    else:
        typer.echo(text, nl=False)


@cli.command()
def solve(
    coeff: Annotated[Path, typer.Option(help="Coefficient spec file (JSON or YAML).")],
    eps: Annotated[str, typer.Option(help="Scale parameter 1/m.")],
    grid: Annotated[int, typer.Option(help="Torus grid per axis.")],
    out: Annotated[Path, typer.Option(help="Field file (.npz) to write.")],
    order: Annotated[int, typer.Option(min=0, max=2, help="Approximation order.")] = 2,
    no_smoothing: Annotated[
        bool, typer.Option("--no-smoothing", help="Drop the smoothing operator.")
    ] = False,
    sign: Annotated[
        SignChoice, typer.Option(help="Sign of L.")
    ] = SignChoice.PRIMAL_MINUS_ADJOINT,
    tol: Annotated[float | None, typer.Option(help="Krylov tolerance.")] = None,
    seed: Annotated[int, typer.Option(help="Seed of the default datum.")] = 0,
    config_yaml: ConfigYamlOption = None,
):
    """Solve the oscillatory problem for the seeded default datum and compare it
    with one approximation.
    """
    config = _setup(config_yaml, tol=tol)
    value = _parse_eps(eps)
    smoothing = not no_smoothing
    try:
        field = load_coefficient_spec(coeff)
        f = default_datum(field.dim, grid, seed)
        reference = solve_oscillatory(
            field,
            value,
            f,
            tol=config.tol,
            max_iterations=config.resolvent_max_iterations,
            workers=config.transform_workers,
        )
        n_cell = cell_grid(field.band, 8)
        correctors, homogenized = homogenize(
            field,
            n_cell,
            config.tol,
            max_iterations=config.cell_max_iterations,
            ellipticity_grid=config.ellipticity_grid,
            workers=config.transform_workers,
        )
        u0 = solve_homogenized(homogenized.a0, f)
        if order == 0:
            approximation = u0
        elif order == 1:
            approximation = first_order_approx(
                u0, correctors.primal, value, smoothing
            ).value
        else:
            approximation = second_order_approx(
                f, homogenized, correctors, value, smoothing, sign
            )
    except HANDLED_ERRORS as error:
        _fail(error)

    difference = reference.u - approximation
    norm = difference.h1_norm() if order == 1 else difference.l2_norm()
    np.savez(
        out,
        dim=field.dim,
        n=grid,
        coefficients=reference.u.coefficients,
        approximation=approximation.coefficients,
    )
    typer.echo(f"residual: {reference.residual:.3e} after {reference.iterations} steps")
    typer.echo(f"||u_eps|| = {reference.u.l2_norm():.10g}")
    typer.echo(f"order {order} error ({'H1' if order == 1 else 'L2'}): {norm:.6e}")
    echo_success(f"Wrote the solution to '{out}'.")


@cli.command()
def sweep(
    config_file: Annotated[
        Path, typer.Option("--config", help="Sweep config file (JSON or YAML).")
    ],
    out: Annotated[Path | None, typer.Option(help="Output directory.")] = None,
    sign: Annotated[SignChoice | None, typer.Option(help="Sign of L.")] = None,
    no_smoothing: Annotated[
        bool, typer.Option("--no-smoothing", help="Drop the smoothing operator.")
    ] = False,
    jobs: Annotated[int | None, typer.Option(help="Rows solved concurrently.")] = None,
    config_yaml: ConfigYamlOption = None,
):
    """Run an eps-sweep; exits with 0 iff all acceptance thresholds pass."""
    config = _setup(config_yaml, jobs=jobs)
    try:
        sweep_config = load_sweep_config(config_file)
    except HANDLED_ERRORS as error:
        _fail(error)
    updates: dict = {}
    if sign is not None:
        updates["sign"] = sign
    if no_smoothing:
        updates["smoothing"] = False
    sweep_config = sweep_config.model_copy(update=updates)
    output_dir = out or sweep_config.output_dir
    if output_dir is None:
        _fail(ValueError("No output directory given, use --out."))

    try:
        report = run_sweep(
            sweep_config,
            jobs=config.jobs,
            workers=config.transform_workers,
            cache=CorrectorCache(config.cache_dir) if config.cache_dir else None,
            cell_max_iterations=config.cell_max_iterations,
            ellipticity_grid=config.ellipticity_grid,
        )
    except HANDLED_ERRORS as error:
        _fail(error)
    paths = emit_report(
        report, output_dir, (ReportFormat.CSV, ReportFormat.STRUCTURED)
    )
    if report.passed:
        echo_success(
            "All acceptance thresholds passed. Reports: "
            + ", ".join(str(path) for path in paths)
        )
        return
    summary = {
        "passed": False,
        "failures": report.failures,
        "slopes": report.slopes.model_dump(mode="json"),
        "partial": report.partial,
        "error": report.error,
    }
    typer.echo(json.dumps(summary), err=False)
    echo_failure("The sweep failed its acceptance thresholds.")
    raise typer.Exit(code=EXIT_FAILED_ACCEPTANCE)

