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

"""Periodic cell problems, the homogenized matrix, flux correctors and corrector
constants.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from resolvent_homogenization.coefficients import (
    DEFAULT_ELLIPTICITY_GRID,
    CoefficientField,
    ellipticity_constant,
)
from resolvent_homogenization.errors import GridTooCoarse, InternalInconsistency
from resolvent_homogenization.krylov import OscillatoryOperator, solve_krylov
from resolvent_homogenization.torus import (
    TWO_PI,
    TorusField,
    retained_mask,
    to_spectral,
    wave_numbers,
)

DEFAULT_TOL = 1e-10
DEFAULT_CELL_MAX_ITERATIONS = 10_000

log = logging.getLogger(__name__)


def _frozen_array(array: np.ndarray) -> np.ndarray:
    frozen = np.array(array, dtype=float)
    frozen.flags.writeable = False
    return frozen


class CorrectorFamily(BaseModel):
    """The correctors N^j (or Ñ^j for the adjoint family) of one cell problem.

    `correctors` has one component per j; `gradients[j, i]` is the derivative of
    N^j along y_i.
    """

    dim: int
    n_cell: int
    adjoint: bool
    correctors: TorusField
    gradients: TorusField
    residual_norms: list[float]
    iterations: list[int]
    sup_norms: list[float]
    model_config = ConfigDict(frozen=True)

    @classmethod
    def from_correctors(
        cls,
        correctors: TorusField,
        *,
        adjoint: bool,
        residual_norms: list[float],
        iterations: list[int],
    ):
        """Complete a family from the corrector coefficients alone."""
        return cls(
            dim=correctors.dim,
            n_cell=correctors.n,
            adjoint=adjoint,
            correctors=correctors,
            gradients=correctors.gradient(),
            residual_norms=residual_norms,
            iterations=iterations,
            sup_norms=[
                correctors.component(j).sup_norm() for j in range(correctors.dim)
            ],
        )


class CellCorrectors(BaseModel):
    """Both corrector families on a common cell grid."""

    primal: CorrectorFamily
    adjoint: CorrectorFamily
    model_config = ConfigDict(frozen=True)

    @property
    def dim(self) -> int:
        """Dimension of the cell."""
        return self.primal.dim

    @property
    def n_cell(self) -> int:
        """Grid points per axis of the cell grid."""
        return self.primal.n_cell

    @property
    def N(self) -> TorusField:  # noqa: N802
        """The primal correctors N^j."""
        return self.primal.correctors

    @property
    def Ntilde(self) -> TorusField:  # noqa: N802
        """The adjoint correctors Ñ^j."""
        return self.adjoint.correctors

    @property
    def gradN(self) -> TorusField:  # noqa: N802
        """Gradients of the primal correctors."""
        return self.primal.gradients

    @property
    def gradNtilde(self) -> TorusField:  # noqa: N802
        """Gradients of the adjoint correctors."""
        return self.adjoint.gradients


class FluxCorrectors(BaseModel):
    """The flux correctors g^j; `fields[j, i]` is the i-th component of g^j."""

    fields: TorusField
    solenoidality_defects: list[float]
    model_config = ConfigDict(frozen=True)


class HomogenizedData(BaseModel):
    """The homogenized matrix and everything derived from it.

    `c[j, k, i]` and `ctilde[j, k, i]` are the i-th components of the corrector
    constants c^{jk} = <N^k g̃^j> and c̃^{jk} = <Ñ^k g^j>.
    """

    a0: np.ndarray
    a0_adj: np.ndarray
    g: FluxCorrectors
    gtilde: FluxCorrectors
    c: np.ndarray
    ctilde: np.ndarray
    adjoint_defect: float
    constants_defect: float
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("a0", "a0_adj", "c", "ctilde")
    @classmethod
    def freeze(cls, array: np.ndarray):
        """Store immutable float copies."""
        return _frozen_array(array)


def _check_cell_grid(field: CoefficientField, n_cell: int) -> None:
    if n_cell < 4 or n_cell & (n_cell - 1):
        raise ValueError(f"n_cell must be a power of two >= 4, got {n_cell}.")
    required = 2 * field.band + 2
    if n_cell < required:
        raise GridTooCoarse(
            grid=n_cell, required=required, what=f"a coefficient of band {field.band}"
        )


def _unit_vectors(dim: int, n: int) -> np.ndarray:
    """Coefficients of the constant vector fields e_j, indexed [j, i]."""
    units = np.zeros((dim, dim) + (n,) * dim, dtype=np.complex128)
    for j in range(dim):
        units[(j, j) + (0,) * dim] = 1.0
    return units


def _divergence(flux: np.ndarray, n: int, dim: int) -> np.ndarray:
    derivative = 1j * TWO_PI * wave_numbers(n, dim)
    return np.sum(flux * derivative, axis=-1 - dim)


def solve_cell_problem(
    field: CoefficientField,
    n_cell: int,
    tol: float = DEFAULT_TOL,
    adjoint: bool = False,
    *,
    max_iterations: int = DEFAULT_CELL_MAX_ITERATIONS,
    ellipticity_grid: int = DEFAULT_ELLIPTICITY_GRID,
    jobs: int = 1,
    workers: int | None = None,
) -> CorrectorFamily:
    """Solve -div a(e_j + ∇N^j) = 0 with <N^j> = 0 for every j.

    With `adjoint=True` the matrix a* = a^T is used, which yields Ñ^j. The
    correctors are computed on a cell grid of n_cell points per axis by a
    preconditioned matrix-free Krylov iteration. The j-problems are independent
    and run on `jobs` threads.
    """
    _check_cell_grid(field, n_cell)
    ellipticity_constant(field, ellipticity_grid)
    operator = OscillatoryOperator(field, n_cell, adjoint=adjoint, workers=workers)
    dim = field.dim
    units = _unit_vectors(dim, n_cell)
    mask = retained_mask(n_cell, dim)
    zero_mode = (0,) * dim
    family = "adjoint" if adjoint else "primal"

    def solve_one(j: int):
        rhs = _divergence(operator.multiply(units[j]), n_cell, dim)
        result = solve_krylov(
            operator,
            TorusField(dim=dim, n=n_cell, coefficients=rhs).values(workers),
            tol=tol,
            max_iterations=max_iterations,
        )
        coefficients = to_spectral(
            result.solution.reshape(operator.field_shape), dim, workers
        )
        coefficients = coefficients * mask
        coefficients[zero_mode] = 0.0
        gradient = TorusField(dim=dim, n=n_cell, coefficients=coefficients).gradient()
        flux = operator.multiply(gradient.coefficients + units[j])
        weak_residual = float(np.max(np.abs(_divergence(flux, n_cell, dim))))
        log.info(
            "Solved the %s cell problem for j=%d.",
            family,
            j,
            extra={
                "j": j,
                "family": family,
                "n_cell": n_cell,
                "iterations": result.iterations,
                "residual": result.residual,
                "weak_residual": weak_residual,
            },
        )
        return coefficients, result.iterations, weak_residual

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(executor.map(solve_one, range(dim)))
    else:
        outcomes = [solve_one(j) for j in range(dim)]

    correctors = TorusField(
        dim=dim, n=n_cell, coefficients=np.stack([outcome[0] for outcome in outcomes])
    )
    return CorrectorFamily.from_correctors(
        correctors,
        adjoint=adjoint,
        residual_norms=[outcome[2] for outcome in outcomes],
        iterations=[outcome[1] for outcome in outcomes],
    )


def _flux_operator(
    field: CoefficientField, correctors: CorrectorFamily, workers: int | None
) -> OscillatoryOperator:
    return OscillatoryOperator(
        field, correctors.n_cell, adjoint=correctors.adjoint, workers=workers
    )


def _unit_gradients(correctors: CorrectorFamily) -> np.ndarray:
    """Coefficients of e_j + ∇N^j, indexed [j, i]."""
    return correctors.gradients.coefficients + _unit_vectors(
        correctors.dim, correctors.n_cell
    )


def homogenized_matrix(
    field: CoefficientField, correctors: CorrectorFamily, workers: int | None = None
) -> np.ndarray:
    """The matrix whose column j is the cell average <a(e_j + ∇N^j)>.

    For an adjoint family this is (a*)^0 computed from Ñ.
    """
    operator = _flux_operator(field, correctors, workers)
    fluxes = operator.multiply(_unit_gradients(correctors))
    averages = fluxes[(Ellipsis,) + (0,) * correctors.dim].real
    return averages.T.copy()


def flux_correctors(
    field: CoefficientField,
    correctors: CorrectorFamily,
    a0: np.ndarray,
    workers: int | None = None,
) -> FluxCorrectors:
    """The mean-free fields g^j = a(e_j + ∇N^j) - a0 e_j and their solenoidality
    defects max_k |k·ĝ^j(k)|.

    For an adjoint family pass (a*)^0 to obtain g̃^j.
    """
    dim = correctors.dim
    n = correctors.n_cell
    operator = _flux_operator(field, correctors, workers)
    fluxes = operator.multiply(_unit_gradients(correctors))
    zero_mode = (Ellipsis,) + (0,) * dim
    fluxes[zero_mode] -= np.asarray(a0, dtype=float).T
    # exact zero mean, not just up to roundoff
    fluxes[zero_mode] = 0.0
    k = wave_numbers(n, dim)
    contraction = np.sum(fluxes * k[np.newaxis], axis=1)
    defects = [float(np.max(np.abs(contraction[j]))) for j in range(dim)]
    return FluxCorrectors(
        fields=TorusField(dim=dim, n=n, coefficients=fluxes),
        solenoidality_defects=defects,
    )


def _spectral_constants(correctors: TorusField, flux: FluxCorrectors) -> np.ndarray:
    """[j, k, i] -> <N^k g^j_i> from Fourier coefficients."""
    dim = correctors.dim
    left = correctors.coefficients.reshape(dim, -1)
    right = np.conj(flux.fields.coefficients).reshape(dim, dim, -1)
    return np.einsum("kq,jiq->jki", left, right).real


def _quadrature_constants(
    field: CoefficientField,
    correctors: TorusField,
    flux_family: CorrectorFamily,
    workers: int | None,
) -> np.ndarray:
    """[j, k, i] -> <N^k (a(e_j + ∇N^j))_i> by quadrature on the padded grid,
    where the flux a(e_j + ∇N^j) belongs to `flux_family` and is not truncated.
    """
    dim = correctors.dim
    operator = _flux_operator(field, flux_family, workers)
    flux_values = operator.flux_values(_unit_gradients(flux_family))
    corrector_values = correctors.values_on(operator.padded_grid, workers)
    points = operator.padded_grid**dim
    return (
        np.einsum(
            "kq,jiq->jki",
            corrector_values.reshape(dim, -1),
            flux_values.reshape(dim, dim, -1),
        )
        / points
    )


def corrector_constants(
    field: CoefficientField,
    correctors: CellCorrectors,
    g: FluxCorrectors,
    gtilde: FluxCorrectors,
    tol: float = DEFAULT_TOL,
    workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """The constants c^{jk} = <N^k g̃^j> and c̃^{jk} = <Ñ^k g^j>, indexed [j, k, i].

    Both are evaluated twice: spectrally from the flux correctors and by
    quadrature of the raw forms <N^k a*(∇Ñ^j + e_j)> and <Ñ^k a(∇N^j + e_j)>,
    which agree because the correctors are mean free.

    Raises:
        InternalInconsistency: if the two evaluations differ by more than 100 * tol.
    """
    c = _spectral_constants(correctors.N, gtilde)
    ctilde = _spectral_constants(correctors.Ntilde, g)
    c_raw = _quadrature_constants(field, correctors.N, correctors.adjoint, workers)
    ctilde_raw = _quadrature_constants(
        field, correctors.Ntilde, correctors.primal, workers
    )
    difference = max(
        float(np.max(np.abs(c - c_raw))), float(np.max(np.abs(ctilde - ctilde_raw)))
    )
    bound = 100 * tol
    if difference > bound:
        raise InternalInconsistency(
            quantity="the corrector constants", difference=difference, bound=bound
        )
    return c, ctilde


def homogenize(
    field: CoefficientField,
    n_cell: int,
    tol: float = DEFAULT_TOL,
    *,
    max_iterations: int = DEFAULT_CELL_MAX_ITERATIONS,
    ellipticity_grid: int = DEFAULT_ELLIPTICITY_GRID,
    jobs: int = 1,
    workers: int | None = None,
) -> tuple[CellCorrectors, HomogenizedData]:
    """Run both cell problems and assemble all homogenized data.

    For symmetric fields the adjoint family is the primal one.
    """
    lambda_low, _ = ellipticity_constant(field, ellipticity_grid)
    options = {
        "max_iterations": max_iterations,
        "ellipticity_grid": ellipticity_grid,
        "jobs": jobs,
        "workers": workers,
    }
    primal = solve_cell_problem(field, n_cell, tol, adjoint=False, **options)
    if field.skew_vanishes:
        adjoint = primal.model_copy(update={"adjoint": True})
    else:
        adjoint = solve_cell_problem(field, n_cell, tol, adjoint=True, **options)
    correctors = CellCorrectors(primal=primal, adjoint=adjoint)

    a0 = homogenized_matrix(field, primal, workers)
    a0_adj = homogenized_matrix(field, adjoint, workers)
    adjoint_defect = float(np.max(np.abs(a0_adj - a0.T)))
    if adjoint_defect > 10 * tol:
        log.warning(
            "The homogenized matrix and its adjoint counterpart disagree.",
            extra={"difference": adjoint_defect, "bound": 10 * tol},
        )
    lowest = float(np.linalg.eigvalsh((a0 + a0.T) / 2)[0])
    if lowest < lambda_low * (1 - 1e-8):
        log.warning(
            "The homogenized matrix violates the ellipticity bound of the field.",
            extra={"lowest_eigenvalue": lowest, "lambda_low": lambda_low},
        )

    g = flux_correctors(field, primal, a0, workers)
    gtilde = flux_correctors(field, adjoint, a0_adj, workers)
    worst_defect = max(g.solenoidality_defects + gtilde.solenoidality_defects)
    if worst_defect > 10 * tol:
        log.warning(
            "The flux correctors are not solenoidal to tolerance.",
            extra={"defect": worst_defect, "bound": 10 * tol},
        )
    c, ctilde = corrector_constants(field, correctors, g, gtilde, tol, workers)
    constants_defect = float(np.max(np.abs(c - ctilde)))
    log.info(
        "Homogenized the coefficient field.",
        extra={
            "n_cell": n_cell,
            "a0": a0.tolist(),
            "adjoint_defect": adjoint_defect,
            "solenoidality_defect": worst_defect,
        },
    )
    return correctors, HomogenizedData(
        a0=a0,
        a0_adj=a0_adj,
        g=g,
        gtilde=gtilde,
        c=c,
        ctilde=ctilde,
        adjoint_defect=adjoint_defect,
        constants_defect=constants_defect,
    )
