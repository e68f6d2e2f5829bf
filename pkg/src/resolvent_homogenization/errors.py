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

"""Errors raised by the numerical kernels of this package."""


class HomogenizationError(RuntimeError):
    """Base class for all domain errors of this package."""


class NonElliptic(HomogenizationError):
    """Raised when the symmetric part of a matrix field is not positive definite."""

    def __init__(self, *, lambda_low: float, where: str = "coefficient field"):
        self.lambda_low = lambda_low
        message = (
            f"The {where} is not elliptic: the smallest eigenvalue of its symmetric"
            + f" part is {lambda_low:.6g} <= 0."
        )
        super().__init__(message)


class NoConvergence(HomogenizationError):
    """Raised when a Krylov iteration stagnates above its tolerance."""

    def __init__(self, *, iterations: int, residual: float, tol: float):
        self.iterations = iterations
        self.residual = residual
        self.tol = tol
        message = (
            f"Krylov solver did not converge within {iterations} iterations:"
            + f" relative residual {residual:.3e} > tol {tol:.3e}."
        )
        super().__init__(message)


class InternalInconsistency(HomogenizationError):
    """Raised when two independent evaluations of one quantity disagree."""

    def __init__(self, *, quantity: str, difference: float, bound: float):
        self.quantity = quantity
        self.difference = difference
        self.bound = bound
        message = (
            f"Two evaluations of {quantity} differ by {difference:.3e},"
            + f" which exceeds the admissible bound {bound:.3e}."
        )
        super().__init__(message)


class BadEps(HomogenizationError, ValueError):
    """Raised for a scale parameter outside of (0, 1]."""

    def __init__(self, *, eps: float):
        self.eps = eps
        super().__init__(f"The scale parameter eps must lie in (0, 1], got {eps}.")


class IncommensurateEps(HomogenizationError, ValueError):
    """Raised when 1/eps does not match the grid the periodic factors live on."""

    def __init__(self, *, eps: float, reason: str):
        self.eps = eps
        self.reason = reason
        super().__init__(f"eps = {eps} is incommensurate with the torus grid: {reason}")


class GridTooCoarse(HomogenizationError, ValueError):
    """Raised when a torus grid cannot resolve the eps-oscillation of its data."""

    def __init__(self, *, grid: int, required: int, what: str):
        self.grid = grid
        self.required = required
        message = (
            f"A torus grid of {grid} points per axis is too coarse for {what};"
            + f" at least {required} points per axis are required."
        )
        super().__init__(message)


class DegenerateFit(HomogenizationError, ValueError):
    """Raised when a convergence rate cannot be fitted from the given points."""

    def __init__(self, *, reason: str):
        self.reason = reason
        super().__init__(f"Cannot fit a convergence rate: {reason}")
