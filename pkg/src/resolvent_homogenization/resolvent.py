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

"""The oscillatory resolvent (A_ε + 1)^-1 with A_ε = -div a(x/ε)∇ on the unit torus,
the homogenized resolvent and the approximations built from the correctors.

All fields live on one torus grid of n points per axis with ε = 1/m. Corrector
products are formed with the 3/2 rule and stay exact as long as the corrector
band times m plus the band of the datum is below n/2.
"""

import logging
from enum import Enum
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from resolvent_homogenization.cell import (
    CellCorrectors,
    CorrectorFamily,
    HomogenizedData,
)
from resolvent_homogenization.coefficients import (
    DEFAULT_ELLIPTICITY_GRID,
    CoefficientField,
    ellipticity_constant,
)
from resolvent_homogenization.errors import NonElliptic
from resolvent_homogenization.krylov import OscillatoryOperator, solve_krylov
from resolvent_homogenization.pydantic_ import SignChoice
from resolvent_homogenization.steklov import reciprocal, steklov_apply
from resolvent_homogenization.torus import (
    TWO_PI,
    TorusField,
    dealiased_product,
    wave_numbers,
)

DEFAULT_TOL = 1e-10
DEFAULT_RESOLVENT_MAX_ITERATIONS = 20_000
ENERGY_SLACK = 1e-8

log = logging.getLogger(__name__)


class Order(str, Enum):
    """The approximation orders."""

    ZERO = "zero"
    FIRST_H1 = "first-h1"
    SECOND_L2 = "second-l2"


class ApproximationOrder(BaseModel):
    """An approximation order together with the use of the smoothing operator."""

    order: Order
    smoothing: bool = True
    model_config = ConfigDict(frozen=True)


class ResolventSolution(BaseModel):
    """The reference solution u^ε, the homogenized solution u and all
    approximations of u^ε at one eps.
    """

    eps: float
    u_eps: TorusField
    u0: TorusField
    approximations: dict[ApproximationOrder, TorusField]
    residual: float
    iterations: int
    sign: SignChoice
    model_config = ConfigDict(frozen=True)


class FirstOrderApproximation(BaseModel):
    """The first approximation and its gradient assembled from ∇N."""

    value: TorusField
    gradient: TorusField
    model_config = ConfigDict(frozen=True)


class OscillatorySolve(NamedTuple):
    """A solution of the oscillatory problem with its solver record."""

    u: TorusField
    residual: float
    iterations: int


def _symmetric_eigenvalues(a0: np.ndarray) -> np.ndarray:
    a0 = np.asarray(a0, dtype=float)
    return np.linalg.eigvalsh((a0 + a0.T) / 2)


def homogenized_symbol(a0: np.ndarray, n: int, dim: int) -> np.ndarray:
    """The multiplier 1 / (1 + 2πk·a0 2πk) of (A_0 + 1)^-1.

    Only the symmetric part of a0 enters the quadratic form.
    """
    a0 = np.asarray(a0, dtype=float)
    lowest = float(_symmetric_eigenvalues(a0)[0])
    if lowest <= 0:
        raise NonElliptic(lambda_low=lowest, where="homogenized matrix")
    k = TWO_PI * wave_numbers(n, dim)
    quadratic = np.einsum("i...,ij,j...->...", k, (a0 + a0.T) / 2, k)
    return 1.0 / (1.0 + quadratic)


def elliptic_constant(a0: np.ndarray) -> float:
    """The constant c of ||(A_0 + 1)^-1 f||_{H^2} <= c ||f||."""
    lowest = float(_symmetric_eigenvalues(a0)[0])
    if lowest <= 0:
        raise NonElliptic(lambda_low=lowest, where="homogenized matrix")
    return max(1.0, 1.0 / lowest)


def solve_homogenized(
    a0: np.ndarray, f: TorusField, adjoint: bool = False
) -> TorusField:
    """Solve (A_0 + 1)u = f, or (A_0* + 1)v = f with `adjoint=True`, exactly in
    Fourier space.

    Both problems share one symbol because the skew part of a0 does not
    contribute to k·a0 k.
    """
    a0 = np.asarray(a0, dtype=float)
    matrix = a0.T if adjoint else a0
    u = f.multiplier(homogenized_symbol(matrix, f.n, f.dim))
    bound = elliptic_constant(matrix) * f.l2_norm()
    if u.h2_norm() > bound * (1 + ENERGY_SLACK):
        log.warning(
            "The homogenized solution violates the elliptic estimate.",
            extra={"h2_norm": u.h2_norm(), "bound": bound},
        )
    return u


def solve_oscillatory(
    field: CoefficientField,
    eps: float,
    f: TorusField,
    *,
    tol: float = DEFAULT_TOL,
    adjoint: bool = False,
    max_iterations: int = DEFAULT_RESOLVENT_MAX_ITERATIONS,
    lambda_low: float | None = None,
    workers: int | None = None,
) -> OscillatorySolve:
    """Solve (A_ε + 1)u^ε = f, or (A_ε* + 1)v^ε = f with `adjoint=True`.

    The energy estimates ||u^ε|| <= ||f|| and λ||∇u^ε||^2 <= ||f||^2 are checked
    and a warning is logged if one of them fails.

    Raises:
        GridTooCoarse: if the grid of f cannot hold a(x/eps) with dealiasing.
        NoConvergence: if the Krylov iteration stagnates.
    """
    m = reciprocal(eps)
    if lambda_low is None:
        lambda_low, _ = ellipticity_constant(field, DEFAULT_ELLIPTICITY_GRID)
    operator = OscillatoryOperator(
        field, f.n, scale=m, shift=1.0, adjoint=adjoint, workers=workers
    )
    result = solve_krylov(
        operator, f.values(workers), tol=tol, max_iterations=max_iterations
    )
    u = TorusField.from_values(
        result.solution.reshape(operator.field_shape), f.dim, workers
    )

    f_norm = f.l2_norm()
    gradient_norm = u.gradient().l2_norm()
    if u.l2_norm() > f_norm * (1 + ENERGY_SLACK) or lambda_low * gradient_norm**2 > (
        f_norm**2 * (1 + ENERGY_SLACK)
    ):
        log.warning(
            "The energy estimates fail for an oscillatory solve.",
            extra={
                "eps": eps,
                "l2_norm": u.l2_norm(),
                "gradient_norm": gradient_norm,
                "datum_norm": f_norm,
            },
        )
    log.info(
        "Solved the oscillatory resolvent problem.",
        extra={
            "eps": eps,
            "grid": f.n,
            "adjoint": adjoint,
            "iterations": result.iterations,
            "residual": result.residual,
        },
    )
    return OscillatorySolve(u, result.residual, result.iterations)


def solve_resolvent(
    field: CoefficientField,
    eps: float,
    f: TorusField,
    tol: float = DEFAULT_TOL,
    adjoint: bool = False,
    *,
    max_iterations: int = DEFAULT_RESOLVENT_MAX_ITERATIONS,
    workers: int | None = None,
) -> TorusField:
    """The solution u^ε of (A_ε + 1)u^ε = f (or v^ε of the adjoint problem)."""
    return solve_oscillatory(
        field,
        eps,
        f,
        tol=tol,
        adjoint=adjoint,
        max_iterations=max_iterations,
        workers=workers,
    ).u


def _scaled(cell_field: TorusField, m: int, n: int) -> TorusField:
    """x -> F(x/ε) for a cell field F."""
    return cell_field.rescaled(m, n)


def _contract_first(product: TorusField) -> TorusField:
    """Sum over the first component axis."""
    return product.with_coefficients(product.coefficients.sum(axis=0))


def first_order_approx(
    u0: TorusField,
    correctors: CorrectorFamily,
    eps: float,
    smoothing: bool = True,
) -> FirstOrderApproximation:
    """The first approximation u' + ε N^j(x/ε) ∂_j u' with u' = S^ε u0, or u' = u0
    without smoothing, and its gradient

        (∇_y N^j(x/ε) + e_j) ∂_j u' + ε N^j(x/ε) ∇∂_j u'.

    Raises:
        GridTooCoarse: if the grid of u0 cannot hold N(x/eps).
    """
    m = reciprocal(eps)
    smoothed = steklov_apply(u0, eps) if smoothing else u0
    corrector = _scaled(correctors.correctors, m, u0.n)
    corrector_gradient = _scaled(correctors.gradients, m, u0.n)
    first_derivatives = smoothed.gradient()
    second_derivatives = first_derivatives.gradient()

    value = smoothed + eps * _contract_first(
        dealiased_product(corrector, first_derivatives)
    )
    column = first_derivatives.with_coefficients(
        first_derivatives.coefficients[:, np.newaxis]
    )
    oscillating = _contract_first(dealiased_product(corrector_gradient, column))
    stacked = corrector.with_coefficients(corrector.coefficients[:, np.newaxis])
    curvature = _contract_first(dealiased_product(stacked, second_derivatives))
    gradient = oscillating + first_derivatives + eps * curvature
    return FirstOrderApproximation(value=value, gradient=gradient)


def corrector_term(
    u: TorusField, correctors: CorrectorFamily, eps: float, smoothing: bool = True
) -> TorusField:
    """N^j(x/ε) S^ε ∂_j u, or N^j(x/ε) ∂_j u without smoothing.

    Applied to u = (A_0 + 1)^-1 f this is K_ε f.
    """
    m = reciprocal(eps)
    smoothed = steklov_apply(u, eps) if smoothing else u
    corrector = _scaled(correctors.correctors, m, u.n)
    return _contract_first(dealiased_product(corrector, smoothed.gradient()))


def adjoint_corrector(
    h: TorusField,
    homogenized: HomogenizedData,
    correctors: CellCorrectors,
    eps: float,
    smoothing: bool = True,
) -> TorusField:
    """K̃_ε h = Ñ^j(x/ε) S^ε ∂_j (A_0* + 1)^-1 h."""
    v = solve_homogenized(homogenized.a0, h, adjoint=True)
    return corrector_term(v, correctors.adjoint, eps, smoothing)


def adjoint_corrector_adjoint(
    f: TorusField,
    homogenized: HomogenizedData,
    correctors: CellCorrectors,
    eps: float,
    smoothing: bool = True,
) -> TorusField:
    """The L2 adjoint (K̃_ε)* f = -(A_0 + 1)^-1 S^ε div(Ñ(x/ε) f).

    The sign comes from moving the gradient of K̃_ε onto the other factor.
    """
    m = reciprocal(eps)
    corrector = _scaled(correctors.Ntilde, m, f.n)
    flux = dealiased_product(corrector, f).divergence()
    if smoothing:
        flux = steklov_apply(flux, eps)
    return -solve_homogenized(homogenized.a0, flux)


def third_order_term(
    f: TorusField,
    homogenized: HomogenizedData,
    sign: SignChoice = SignChoice.PRIMAL_MINUS_ADJOINT,
) -> TorusField:
    """L f = (A_0 + 1)^-1 C_i^{jk} ∂_j ∂_i ∂_k (A_0 + 1)^-1 f.

    C = c - c̃ for the sign `primal-minus-adjoint` and C = c̃ - c for
    `adjoint-minus-primal`.
    """
    difference = homogenized.c - homogenized.ctilde
    if SignChoice(sign) == SignChoice.ADJOINT_MINUS_PRIMAL:
        difference = -difference
    k = wave_numbers(f.n, f.dim)
    cubic = np.einsum("jki,j...,i...,k...->...", difference, k, k, k)
    resolvent = homogenized_symbol(homogenized.a0, f.n, f.dim)
    return f.multiplier(-1j * TWO_PI**3 * cubic * resolvent**2)


def second_order_approx(
    f: TorusField,
    homogenized: HomogenizedData,
    correctors: CellCorrectors,
    eps: float,
    smoothing: bool = True,
    sign: SignChoice = SignChoice.PRIMAL_MINUS_ADJOINT,
    *,
    include_adjoint_term: bool = True,
    include_third_order: bool = True,
) -> TorusField:
    """The approximation u + ε K_ε f + ε (K̃_ε)* f + ε L f of u^ε in L2.

    Without smoothing S^ε is dropped from both corrector terms. The flags drop
    the adjoint-corrector and third-order terms, which leaves the approximation
    that is sufficient for symmetric fields.
    """
    if not smoothing and not all(
        np.isfinite(correctors.primal.sup_norms + correctors.adjoint.sup_norms)
    ):
        raise ValueError("Omitting the smoothing needs bounded correctors.")
    u = solve_homogenized(homogenized.a0, f)
    approximation = u + eps * corrector_term(u, correctors.primal, eps, smoothing)
    if include_adjoint_term:
        approximation = approximation + eps * adjoint_corrector_adjoint(
            f, homogenized, correctors, eps, smoothing
        )
    if include_third_order:
        approximation = approximation + eps * third_order_term(f, homogenized, sign)
    return approximation


def first_order_residual(
    field: CoefficientField,
    eps: float,
    f: TorusField,
    approximation: TorusField,
    workers: int | None = None,
) -> float:
    """||f - (A_ε + 1)w||_{H^-1} for an approximation w of u^ε."""
    m = reciprocal(eps)
    operator = OscillatoryOperator(field, f.n, scale=m, shift=1.0, workers=workers)
    applied = operator.apply_spectral(approximation.coefficients)
    return f.with_coefficients(f.coefficients - applied).h_minus1_norm()


def resolve(
    field: CoefficientField,
    eps: float,
    f: TorusField,
    homogenized: HomogenizedData,
    correctors: CellCorrectors,
    *,
    tol: float = DEFAULT_TOL,
    max_iterations: int = DEFAULT_RESOLVENT_MAX_ITERATIONS,
    sign: SignChoice = SignChoice.PRIMAL_MINUS_ADJOINT,
    lambda_low: float | None = None,
    workers: int | None = None,
) -> ResolventSolution:
    """Solve the oscillatory problem and build every approximation order."""
    solve = solve_oscillatory(
        field,
        eps,
        f,
        tol=tol,
        max_iterations=max_iterations,
        lambda_low=lambda_low,
        workers=workers,
    )
    u0 = solve_homogenized(homogenized.a0, f)
    approximations = {ApproximationOrder(order=Order.ZERO): u0}
    for smoothing in (True, False):
        first = ApproximationOrder(order=Order.FIRST_H1, smoothing=smoothing)
        second = ApproximationOrder(order=Order.SECOND_L2, smoothing=smoothing)
        approximations[first] = first_order_approx(
            u0, correctors.primal, eps, smoothing
        ).value
        approximations[second] = second_order_approx(
            f, homogenized, correctors, eps, smoothing, sign
        )
    return ResolventSolution(
        eps=eps,
        u_eps=solve.u,
        u0=u0,
        approximations=approximations,
        residual=solve.residual,
        iterations=solve.iterations,
        sign=sign,
    )
