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

"""Band-limited real fields on the torus [0, 1)^d stored as Fourier coefficients.

Coefficients use the FFT ordering of an n^d grid with forward normalization, so
the coefficient of the mode k is the amplitude of exp(2πi k·x). Retained modes
are those with |k_j| < n/2 on every axis; the Nyquist modes are kept at zero so
that differentiation maps real fields to real fields.
"""

from collections.abc import Iterable, Sequence
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import fft

from resolvent_homogenization.errors import GridTooCoarse

TWO_PI = 2.0 * np.pi


def _read_only(array: NDArray) -> NDArray:
    array.flags.writeable = False
    return array


@lru_cache(maxsize=64)
def wave_numbers(n: int, dim: int) -> NDArray[np.float64]:
    """Integer wave vectors of an n^d grid in FFT order, shape (dim, n, ..., n)."""
    axis = fft.fftfreq(n, d=1.0 / n)
    return _read_only(np.stack(np.meshgrid(*([axis] * dim), indexing="ij")))


@lru_cache(maxsize=64)
def retained_mask(n: int, dim: int) -> NDArray[np.bool_]:
    """Mask of the modes with |k_j| < n/2 on every axis."""
    return _read_only(np.all(np.abs(wave_numbers(n, dim)) < n / 2, axis=0))


@lru_cache(maxsize=64)
def squared_frequencies(n: int, dim: int) -> NDArray[np.float64]:
    """|2πk|^2 for every mode of the grid."""
    return _read_only(np.sum((TWO_PI * wave_numbers(n, dim)) ** 2, axis=0))


def grid_points(n: int, dim: int) -> NDArray[np.float64]:
    """The points l/n of the uniform torus grid, shape (dim, n, ..., n)."""
    axis = np.arange(n) / n
    return np.stack(np.meshgrid(*([axis] * dim), indexing="ij"))


def _grid_axes(dim: int) -> tuple[int, ...]:
    return tuple(range(-dim, 0))


def _embedding(n_small: int, n_large: int, dim: int, scale: int = 1):
    """Advanced indices pairing the retained modes k of an n_small grid with the
    positions of scale*k on an n_large grid.
    """
    signed = fft.fftfreq(n_small, d=1.0 / n_small).astype(np.int64)
    kept = np.abs(signed) < n_small / 2
    small = np.nonzero(kept)[0]
    large = (scale * signed[kept]) % n_large
    return (
        (Ellipsis, *np.ix_(*([small] * dim))),
        (Ellipsis, *np.ix_(*([large] * dim))),
    )


def pad_coefficients(
    coefficients: NDArray, n_target: int, dim: int, scale: int = 1
) -> NDArray[np.complex128]:
    """Embed coefficients into a larger grid, optionally stretching k to scale*k."""
    n_source = coefficients.shape[-1]
    out = np.zeros(
        coefficients.shape[:-dim] + (n_target,) * dim, dtype=np.complex128
    )
    small, large = _embedding(n_source, n_target, dim, scale)
    out[large] = coefficients[small]
    return out


def truncate_coefficients(
    coefficients: NDArray, n_target: int, dim: int
) -> NDArray[np.complex128]:
    """Keep the retained modes of an n_target grid, dropping everything else."""
    n_source = coefficients.shape[-1]
    out = np.zeros(
        coefficients.shape[:-dim] + (n_target,) * dim, dtype=np.complex128
    )
    small, large = _embedding(n_target, n_source, dim)
    out[small] = coefficients[large]
    return out


def to_physical(
    coefficients: NDArray, dim: int, workers: int | None = None
) -> NDArray[np.float64]:
    """Real grid values of coefficients given on a grid of their own size."""
    return fft.ifftn(
        coefficients, axes=_grid_axes(dim), norm="forward", workers=workers
    ).real


def to_spectral(
    values: NDArray, dim: int, workers: int | None = None
) -> NDArray[np.complex128]:
    """Forward-normalized coefficients of real grid values."""
    return fft.fftn(values, axes=_grid_axes(dim), norm="forward", workers=workers)


class TorusField(BaseModel):
    """A real scalar, vector or matrix valued field on the torus [0, 1)^d.

    The leading axes of `coefficients` are component axes, the trailing `dim`
    axes are the n^d Fourier modes.
    """

    dim: int
    n: int
    coefficients: np.ndarray
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("coefficients")
    @classmethod
    def freeze_coefficients(cls, coefficients: np.ndarray):
        """Store an immutable complex copy."""
        return _read_only(np.array(coefficients, dtype=np.complex128))

    @model_validator(mode="after")
    def check_grid(self):
        """Ensure an even grid matching the coefficient array."""
        if self.n < 2 or self.n % 2:
            raise ValueError(f"The torus grid size must be even, got {self.n}.")
        if self.coefficients.shape[self.coefficients.ndim - self.dim :] != (
            (self.n,) * self.dim
        ):
            raise ValueError("The coefficient array does not match the grid.")
        return self

    @classmethod
    def zeros(cls, dim: int, n: int, components: tuple[int, ...] = ()):
        """The zero field."""
        return cls(dim=dim, n=n, coefficients=np.zeros(components + (n,) * dim))

    @classmethod
    def from_values(cls, values: NDArray, dim: int, workers: int | None = None):
        """Interpolate real grid values; the Nyquist modes are discarded."""
        n = values.shape[-1]
        coefficients = to_spectral(values, dim, workers) * retained_mask(n, dim)
        return cls(dim=dim, n=n, coefficients=coefficients)

    @classmethod
    def from_modes(
        cls, dim: int, n: int, modes: Iterable[tuple[Sequence[int], complex]]
    ):
        """Build a scalar field from (wave vector, amplitude) pairs."""
        coefficients = np.zeros((n,) * dim, dtype=np.complex128)
        for k, amplitude in modes:
            if len(k) != dim:
                raise ValueError(f"Wave vector {list(k)} does not have {dim} entries.")
            if max(abs(int(index)) for index in k) >= n / 2:
                raise GridTooCoarse(
                    grid=n,
                    required=2 * max(abs(int(index)) for index in k) + 2,
                    what=f"the mode k={list(k)}",
                )
            coefficients[tuple(int(index) % n for index in k)] += amplitude
        return cls(dim=dim, n=n, coefficients=coefficients)

    @property
    def components(self) -> tuple[int, ...]:
        """Shape of the component axes; () for scalar fields."""
        return self.coefficients.shape[: self.coefficients.ndim - self.dim]

    def with_coefficients(self, coefficients: NDArray) -> "TorusField":
        """A field on the same grid with other coefficients."""
        return TorusField(dim=self.dim, n=self.n, coefficients=coefficients)

    def values(self, workers: int | None = None) -> NDArray[np.float64]:
        """Real values on the field's own grid."""
        return to_physical(self.coefficients, self.dim, workers)

    def values_on(self, n_grid: int, workers: int | None = None) -> NDArray[np.float64]:
        """Exact values on a finer grid of n_grid points per axis."""
        if n_grid < self.n:
            raise GridTooCoarse(grid=n_grid, required=self.n, what="interpolation")
        padded = pad_coefficients(self.coefficients, n_grid, self.dim)
        return to_physical(padded, self.dim, workers)

    def component(self, *index: int) -> "TorusField":
        """Select one component of a vector or matrix valued field."""
        return self.with_coefficients(self.coefficients[index])

    @property
    def mean(self) -> NDArray[np.float64] | float:
        """Cell average, one value per component."""
        average = self.coefficients[(Ellipsis,) + (0,) * self.dim].real
        return float(average) if np.ndim(average) == 0 else average

    def multiplier(self, symbol: NDArray) -> "TorusField":
        """Apply a Fourier multiplier given on the n^d grid."""
        return self.with_coefficients(self.coefficients * symbol)

    def gradient(self) -> "TorusField":
        """The gradient; the derivative index becomes the last component axis."""
        axis = len(self.components)
        expanded = np.expand_dims(self.coefficients, axis=axis)
        return self.with_coefficients(
            expanded * (1j * TWO_PI * wave_numbers(self.n, self.dim))
        )

    def divergence(self) -> "TorusField":
        """Contract the last component axis (of length dim) with the gradient."""
        if not self.components or self.components[-1] != self.dim:
            raise ValueError("The divergence needs a vector valued field.")
        derivative = 1j * TWO_PI * wave_numbers(self.n, self.dim)
        return self.with_coefficients(
            np.sum(self.coefficients * derivative, axis=-1 - self.dim)
        )

    def rescaled(self, scale: int, n_target: int) -> "TorusField":
        """The field x -> u(scale * x) on a grid of n_target points per axis."""
        required = (self.n - 2) * scale + 2
        if n_target < required:
            raise GridTooCoarse(
                grid=n_target, required=required, what=f"a field scaled by {scale}"
            )
        return TorusField(
            dim=self.dim,
            n=n_target,
            coefficients=pad_coefficients(self.coefficients, n_target, self.dim, scale),
        )

    def truncated(self, n_target: int) -> "TorusField":
        """Spectral truncation (or zero padding) to another grid."""
        if n_target >= self.n:
            return self.rescaled(1, n_target)
        return TorusField(
            dim=self.dim,
            n=n_target,
            coefficients=truncate_coefficients(self.coefficients, n_target, self.dim),
        )

    def inner(self, other: "TorusField") -> float:
        """The L2 inner product, summed over components."""
        return float(np.sum(self.coefficients * np.conj(other.coefficients)).real)

    def _weighted_norm(self, weight: NDArray) -> float:
        return float(np.sqrt(np.sum(weight * np.abs(self.coefficients) ** 2)))

    def l2_norm(self) -> float:
        """The L2 norm."""
        return self._weighted_norm(np.ones((self.n,) * self.dim))

    def h1_norm(self) -> float:
        """The H1 norm with weight 1 + |2πk|^2."""
        return self._weighted_norm(1.0 + squared_frequencies(self.n, self.dim))

    def h_minus1_norm(self) -> float:
        """The H^-1 norm with weight (1 + |2πk|^2)^-1."""
        return self._weighted_norm(1.0 / (1.0 + squared_frequencies(self.n, self.dim)))

    def h2_norm(self) -> float:
        """The H2 norm with weight (1 + |2πk|^2)^2."""
        return self._weighted_norm((1.0 + squared_frequencies(self.n, self.dim)) ** 2)

    def sup_norm(self, oversampling: int = 2) -> float:
        """Maximum modulus on an oversampled grid."""
        return float(np.max(np.abs(self.values_on(oversampling * self.n))))

    def __add__(self, other: "TorusField") -> "TorusField":
        """Pointwise sum of two fields on the same grid."""
        return self.with_coefficients(self.coefficients + other.coefficients)

    def __sub__(self, other: "TorusField") -> "TorusField":
        """Pointwise difference of two fields on the same grid."""
        return self.with_coefficients(self.coefficients - other.coefficients)

    def __neg__(self) -> "TorusField":
        """The negated field."""
        return self.with_coefficients(-self.coefficients)

    def __mul__(self, scalar: float) -> "TorusField":
        """The field scaled by a constant."""
        return self.with_coefficients(self.coefficients * scalar)

    __rmul__ = __mul__


def norms(u: TorusField) -> tuple[float, float, float]:
    """The L2, H1 and H^-1 norms of a field."""
    return u.l2_norm(), u.h1_norm(), u.h_minus1_norm()


def dealias_grid(n: int) -> int:
    """Size of the 3/2-rule padded grid for products of two fields on n points."""
    return 3 * n // 2


def dealiased_product(
    left: TorusField, right: TorusField, workers: int | None = None
) -> TorusField:
    """Pointwise product of two fields on the same grid, truncated to that grid.

    Products are formed on the 3/2-rule padded grid, which makes the result exact
    on every retained mode. Component axes broadcast like numpy arrays.
    """
    if left.n != right.n or left.dim != right.dim:
        raise ValueError("Both factors must live on the same torus grid.")
    n_pad = dealias_grid(left.n)
    left_values = left.values_on(n_pad, workers)
    right_values = right.values_on(n_pad, workers)
    product = to_spectral(left_values * right_values, left.dim, workers)
    return TorusField(
        dim=left.dim,
        n=left.n,
        coefficients=truncate_coefficients(product, left.n, left.dim),
    )
