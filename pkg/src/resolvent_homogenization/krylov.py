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

"""Matrix-free Fourier-Galerkin operators -div(a(m x)∇u) + shift*u and the Krylov
driver shared by the cell problems and the oscillatory resolvent solves.

Unknowns are the real values of a field on the uniform n^d torus grid. The
operator keeps only the retained modes |k_j| < n/2, forms coefficient-gradient
products on the 3/2-rule padded grid and is therefore exact on the retained
modes whenever scale * band <= n/2.
"""

import logging
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy.sparse.linalg import LinearOperator, cg, gmres

from resolvent_homogenization.coefficients import (
    CoefficientField,
    sample,
    split_symmetric,
)
from resolvent_homogenization.errors import GridTooCoarse, NoConvergence
from resolvent_homogenization.torus import (
    TWO_PI,
    dealias_grid,
    pad_coefficients,
    retained_mask,
    to_physical,
    to_spectral,
    truncate_coefficients,
    wave_numbers,
)

GMRES_RESTART = 50

log = logging.getLogger(__name__)


class OscillatoryOperator(LinearOperator):
    """The operator u -> -div(a(scale * x)∇u) + shift * u on an n^d torus grid.

    With `adjoint=True` the transposed matrix a* = a^T is used instead of a.
    """

    def __init__(
        self,
        field: CoefficientField,
        n: int,
        *,
        scale: int = 1,
        shift: float = 0.0,
        adjoint: bool = False,
        workers: int | None = None,
    ):
        required = 2 * scale * field.band
        if n < required:
            raise GridTooCoarse(
                grid=n, required=required, what=f"a coefficient of band {field.band}"
                + f" oscillating {scale} times per unit length"
            )
        self.field = field
        self.n = n
        self.dim = field.dim
        self.scale = scale
        self.shift = shift
        self.adjoint = adjoint
        self.workers = workers
        self.padded_grid = dealias_grid(n)
        matrix = sample(field, self.padded_grid, scale, workers)
        self._matrix = matrix.swapaxes(0, 1) if adjoint else matrix
        self._mask = retained_mask(n, self.dim)
        self._derivative = 1j * TWO_PI * wave_numbers(n, self.dim)
        self.field_shape = (n,) * self.dim
        size = n**self.dim
        super().__init__(shape=(size, size), dtype=np.float64)

    def flux_values(self, vector_coefficients: NDArray) -> NDArray[np.float64]:
        """Values of a(scale * x)v on the padded grid for a vector field v.

        The vector index is the last axis before the grid axes; leading axes
        broadcast.
        """
        padded = pad_coefficients(vector_coefficients, self.padded_grid, self.dim)
        values = to_physical(padded, self.dim, self.workers)
        return _contract(self._matrix, values, self.dim)

    def multiply(self, vector_coefficients: NDArray) -> NDArray[np.complex128]:
        """Coefficients of a(scale * x)v truncated to the grid.

        The zero mode of the result is the exact cell average of the product.
        """
        product = self.flux_values(vector_coefficients)
        spectrum = to_spectral(product, self.dim, self.workers)
        return truncate_coefficients(spectrum, self.n, self.dim)

    def apply_spectral(self, coefficients: NDArray) -> NDArray[np.complex128]:
        """Apply the operator to the coefficients of a scalar field."""
        coefficients = coefficients * self._mask
        gradient = coefficients[np.newaxis] * self._derivative
        flux = self.multiply(gradient)
        divergence = np.sum(flux * self._derivative, axis=0)
        return self.shift * coefficients - divergence

    def _matvec(self, x: NDArray) -> NDArray:
        values = np.asarray(x, dtype=float).reshape(self.field_shape)
        coefficients = to_spectral(values, self.dim, self.workers)
        result = self.apply_spectral(coefficients)
        return to_physical(result, self.dim, self.workers).ravel()

    def _rmatvec(self, x: NDArray) -> NDArray:
        return self.transposed()._matvec(x)

    def transposed(self) -> "OscillatoryOperator":
        """The operator with a replaced by a^T, which is its Euclidean transpose."""
        if not hasattr(self, "_transposed"):
            self._transposed = OscillatoryOperator(
                self.field,
                self.n,
                scale=self.scale,
                shift=self.shift,
                adjoint=not self.adjoint,
                workers=self.workers,
            )
        return self._transposed

    @property
    def symmetric(self) -> bool:
        """Whether the operator is symmetric, i.e. the skew part of a vanishes."""
        return self.field.skew_vanishes

    def preconditioner(self) -> LinearOperator:
        """The inverse of -div<a^s>∇ + shift, a diagonal Fourier multiplier.

        Without shift the zero mode is mapped to zero, which keeps iterates mean
        free. The Nyquist modes are mapped to zero as well.
        """
        symmetric, _ = split_symmetric(self.field)
        mean = symmetric.mean_matrix
        k = TWO_PI * wave_numbers(self.n, self.dim)
        quadratic = np.einsum("i...,ij,j...->...", k, mean, k)
        denominator = self.shift + quadratic
        symbol = np.zeros(self.field_shape)
        active = self._mask & (denominator > 0)
        symbol[active] = 1.0 / denominator[active]
        shape = self.field_shape
        dim = self.dim
        workers = self.workers

        def apply(x: NDArray) -> NDArray:
            coefficients = to_spectral(np.reshape(x, shape), dim, workers) * symbol
            return to_physical(coefficients, dim, workers).ravel()

        return LinearOperator(shape=self.shape, matvec=apply, dtype=np.float64)


def _contract(matrix: NDArray, values: NDArray, dim: int) -> NDArray:
    """Pointwise matrix-vector product; the vector index is the axis before the grid."""
    vector_axis = values.ndim - dim - 1
    moved = np.moveaxis(values, vector_axis, 0)
    product = np.einsum("ij...,j...->i...", matrix, moved)
    return np.moveaxis(product, 0, vector_axis)


class KrylovResult(NamedTuple):
    """Outcome of a preconditioned Krylov solve."""

    solution: NDArray[np.float64]
    iterations: int
    residual: float


def solve_krylov(
    operator: OscillatoryOperator,
    rhs: NDArray,
    *,
    tol: float,
    max_iterations: int,
) -> KrylovResult:
    """Solve operator(x) = rhs with conjugate gradients if the operator is
    symmetric and restarted GMRES otherwise.

    The reported residual is the relative Euclidean residual of the returned
    solution on the grid values.
    """
    b = np.asarray(rhs, dtype=float).ravel()
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return KrylovResult(np.zeros_like(b), 0, 0.0)

    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    preconditioner = operator.preconditioner()
    if operator.symmetric:
        log.debug(
            "Starting conjugate gradients.",
            extra={"unknowns": b.size, "tol": tol, "max_iterations": max_iterations},
        )
        solution, info = cg(
            operator,
            b,
            rtol=tol,
            atol=0.0,
            maxiter=max_iterations,
            M=preconditioner,
            callback=count,
        )
    else:
        log.debug(
            "Starting restarted GMRES.",
            extra={"unknowns": b.size, "tol": tol, "restart": GMRES_RESTART},
        )
        solution, info = gmres(
            operator,
            b,
            rtol=tol,
            atol=0.0,
            restart=GMRES_RESTART,
            maxiter=-(-max_iterations // GMRES_RESTART),
            M=preconditioner,
            callback=count,
            callback_type="pr_norm",
        )
    residual = float(np.linalg.norm(b - operator.matvec(solution))) / b_norm
    if info > 0:
        raise NoConvergence(iterations=iterations, residual=residual, tol=tol)
    if info < 0:
        raise ValueError(f"Illegal input to the Krylov solver (info={info}).")
    return KrylovResult(solution, iterations, residual)
