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

"""Representation, sampling and validation of 1-periodic coefficient matrices."""

import hashlib
import itertools
import json
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import yaml
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import fft

from resolvent_homogenization.errors import NonElliptic
from resolvent_homogenization.pydantic_ import CoefficientSpec
from resolvent_homogenization.torus import grid_points
from resolvent_homogenization.validation import get_validated_payload

REALITY_TOL = 1e-12
DEFAULT_ELLIPTICITY_GRID = 64

Modes = Sequence[tuple[Sequence[int], complex]]


def _wave_vectors(band: int, dim: int) -> NDArray[np.int64]:
    """All k in [-band, band]^d in the storage order, shape (P, dim)."""
    axis = np.arange(-band, band + 1)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([component.ravel() for component in mesh], axis=-1)


def _center_axis(coefficients: NDArray, axis: int) -> NDArray:
    """Reorder one FFT axis to k = -B..B, splitting a Nyquist mode evenly."""
    n = coefficients.shape[axis]
    shifted = fft.fftshift(coefficients, axes=axis)
    if n % 2:
        return shifted
    nyquist = np.take(shifted, [0], axis=axis) / 2
    rest = np.take(shifted, np.arange(1, n), axis=axis)
    return np.concatenate([nyquist, rest, nyquist], axis=axis)


class CoefficientField(BaseModel):
    """A 1-periodic d x d real matrix field a(y) given as a trigonometric polynomial.

    `coefficients[i, j]` holds the amplitudes of the modes k in [-band, band]^d of
    the entry a_ij, stored at the array position k + band.
    """

    dim: int
    band: int
    coefficients: np.ndarray
    description: str | None = None
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("coefficients")
    @classmethod
    def freeze_coefficients(cls, coefficients: np.ndarray):
        """Store an immutable complex copy."""
        frozen = np.array(coefficients, dtype=np.complex128)
        frozen.flags.writeable = False
        return frozen

    @model_validator(mode="after")
    def check_real_matrix(self):
        """Ensure matching shapes and conjugate symmetry across k <-> -k."""
        width = 2 * self.band + 1
        expected = (self.dim, self.dim) + (width,) * self.dim
        if self.coefficients.shape != expected:
            raise ValueError(
                f"Expected coefficients of shape {expected},"
                + f" got {self.coefficients.shape}."
            )
        reverse = (Ellipsis,) + (slice(None, None, -1),) * self.dim
        mirrored = np.conj(self.coefficients[reverse])
        scale = max(1.0, float(np.max(np.abs(self.coefficients))))
        if np.max(np.abs(self.coefficients - mirrored)) > REALITY_TOL * scale:
            raise ValueError("The coefficient amplitudes are not conjugate-symmetric.")
        return self

    @classmethod
    def constant(cls, matrix: ArrayLike):
        """A constant matrix field."""
        matrix = np.asarray(matrix, dtype=float)
        dim = matrix.shape[0]
        return cls(
            dim=dim, band=0, coefficients=matrix.reshape((dim, dim) + (1,) * dim)
        )

    @classmethod
    def from_modes(
        cls,
        dim: int,
        entries: dict[tuple[int, int], Modes],
        description: str | None = None,
    ):
        """Build a field from (wave vector, amplitude) lists keyed by entry (i, j)."""
        band = max(
            (
                abs(int(index))
                for modes in entries.values()
                for k, _ in modes
                for index in k
            ),
            default=0,
        )
        width = 2 * band + 1
        coefficients = np.zeros((dim, dim) + (width,) * dim, dtype=np.complex128)
        for (i, j), modes in entries.items():
            for k, amplitude in modes:
                if len(k) != dim:
                    raise ValueError(
                        f"Wave vector {list(k)} does not have {dim} entries."
                    )
                coefficients[(i, j, *(int(index) + band for index in k))] += amplitude
        return cls(
            dim=dim, band=band, coefficients=coefficients, description=description
        )

    @classmethod
    def from_samples(cls, samples: ArrayLike, description: str | None = None):
        """Interpolate uniform samples taken at y = -1/2 + l/n on the unit cell.

        The samples array has shape (d, d, n, ..., n). Periodicity is implied by
        index wrap-around; a Nyquist mode is split evenly between k = -n/2 and
        k = +n/2 so that the interpolant stays real and reproduces every sample.
        """
        samples = np.asarray(samples, dtype=float)
        dim = samples.shape[0]
        n = samples.shape[-1]
        grid_axes = tuple(range(2, 2 + dim))
        coefficients = fft.fftn(samples, axes=grid_axes, norm="forward")
        for axis in grid_axes:
            coefficients = _center_axis(coefficients, axis)
        band = n // 2
        # shift of the sampling origin from 0 to -1/2
        signs = (-1.0) ** np.abs(_wave_vectors(band, dim).sum(axis=-1))
        coefficients = coefficients * signs.reshape((2 * band + 1,) * dim)
        return cls(
            dim=dim, band=band, coefficients=coefficients, description=description
        )

    @classmethod
    def from_spec(cls, spec: CoefficientSpec):
        """Build a field from a validated coefficient spec."""
        if spec.grid is not None:
            n = spec.grid.n
            samples = np.asarray(spec.grid.samples, dtype=float)
            return cls.from_samples(
                samples.reshape((spec.dim, spec.dim) + (n,) * spec.dim),
                description=spec.description,
            )
        entries = {
            (i, j): [(mode.k, complex(mode.re, mode.im)) for mode in modes]
            for i, row in enumerate(spec.entries or [])
            for j, modes in enumerate(row)
        }
        return cls.from_modes(spec.dim, entries, description=spec.description)

    @property
    def mean_matrix(self) -> NDArray[np.float64]:
        """The cell average <a>."""
        return self.coefficients[(Ellipsis,) + (self.band,) * self.dim].real.copy()

    @property
    def skew_vanishes(self) -> bool:
        """Whether the skew-symmetric part b is identically zero."""
        return bool(np.all(self.coefficients == self.coefficients.swapaxes(0, 1)))

    def adjoint(self) -> "CoefficientField":
        """The transposed field a*(y) = a(y)^T."""
        return self.model_copy(
            update={"coefficients": self.coefficients.swapaxes(0, 1).copy()}
        )

    def content_hash(self) -> str:
        """A SHA-256 hash of the dimension, band and amplitudes."""
        digest = hashlib.sha256()
        digest.update(json.dumps({"dim": self.dim, "band": self.band}).encode())
        digest.update(np.ascontiguousarray(self.coefficients).tobytes())
        return digest.hexdigest()


def evaluate(field: CoefficientField, y: ArrayLike) -> NDArray[np.float64]:
    """Exact evaluation of a(y mod 1) at one point or an array of points (..., d)."""
    points = np.mod(np.asarray(y, dtype=float), 1.0)
    k = _wave_vectors(field.band, field.dim)
    phases = np.exp(2j * np.pi * (points @ k.T))
    flat = field.coefficients.reshape(field.dim, field.dim, -1)
    return np.einsum("...p,ijp->...ij", phases, flat).real


def sample(
    field: CoefficientField, n: int, scale: int = 1, workers: int | None = None
) -> NDArray[np.float64]:
    """Values of a(scale * x) at the torus grid points x = l/n.

    The result has the shape (d, d, n, ..., n).
    """
    dim = field.dim
    if 2 * scale * field.band < n:
        spectrum = np.zeros((dim, dim) + (n,) * dim, dtype=np.complex128)
        index = (scale * np.arange(-field.band, field.band + 1)) % n
        spectrum[(Ellipsis, *np.ix_(*([index] * dim)))] = field.coefficients
        return fft.ifftn(
            spectrum, axes=tuple(range(2, 2 + dim)), norm="forward", workers=workers
        ).real
    points = np.moveaxis(scale * grid_points(n, dim), 0, -1)
    return np.moveaxis(evaluate(field, points), (-2, -1), (0, 1))


def split_symmetric(
    field: CoefficientField,
) -> tuple[CoefficientField, CoefficientField]:
    """The decomposition a = a^s + b into symmetric and skew-symmetric parts."""
    transposed = field.coefficients.swapaxes(0, 1)
    symmetric = field.model_copy(
        update={"coefficients": (field.coefficients + transposed) / 2}
    )
    skew = field.model_copy(
        update={"coefficients": (field.coefficients - transposed) / 2}
    )
    return symmetric, skew


def ellipticity_constant(
    field: CoefficientField, grid_resolution: int = DEFAULT_ELLIPTICITY_GRID
) -> tuple[float, float]:
    """Extreme eigenvalues of a^s(y) over the samples of a uniform grid.

    The grid minimum is an estimate of the ellipticity constant from above; it is
    exact whenever the grid contains the minimizing point.
    """
    if grid_resolution < 2:
        raise ValueError(f"grid_resolution must be at least 2, got {grid_resolution}.")
    symmetric, _ = split_symmetric(field)
    values = sample(symmetric, grid_resolution)
    matrices = np.moveaxis(values, (0, 1), (-2, -1))
    eigenvalues = np.linalg.eigvalsh(matrices)
    lambda_low = float(eigenvalues[..., 0].min())
    lambda_high = float(eigenvalues[..., -1].max())
    if lambda_low <= 0:
        raise NonElliptic(lambda_low=lambda_low)
    return lambda_low, lambda_high


def bmo_seminorm(g: ArrayLike, max_depth: int) -> float:
    """Largest mean oscillation of g over dyadic cubes of the periodic unit cell.

    g holds samples on a grid of 2^max_depth points per axis. Cubes of every depth
    0..max_depth are translated by whole samples with periodic wrap-around, which
    gives a lower bound for the BMO seminorm restricted to cubes.
    """
    values = np.asarray(g, dtype=float)
    n = 2**max_depth
    if any(size != n for size in values.shape):
        raise ValueError(
            f"Expected 2^{max_depth} = {n} samples per axis, got {values.shape}."
        )
    if np.ptp(values) == 0:
        return 0.0
    # the seminorm ignores constants; centering keeps the cube means small
    values = values - values.mean()
    dim = values.ndim
    axes = tuple(range(dim))
    # every translate of the whole cell holds the same values
    best = float(np.mean(np.abs(values)))
    for depth in range(1, max_depth):
        side = n >> depth
        blocked_shape = tuple(itertools.chain.from_iterable([(n // side, side)] * dim))
        cube_axes = tuple(range(1, 2 * dim, 2))
        for offset in itertools.product(range(side), repeat=dim):
            shifted = np.roll(values, shift=[-o for o in offset], axis=axes)
            cubes = shifted.reshape(blocked_shape)
            means = cubes.mean(axis=cube_axes, keepdims=True)
            oscillation = np.abs(cubes - means).mean(axis=cube_axes)
            best = max(best, float(oscillation.max()))
    return best


def skew_bmo_estimate(field: CoefficientField, max_depth: int) -> float:
    """The largest dyadic BMO estimate among the entries of the skew part b."""
    _, skew = split_symmetric(field)
    values = sample(skew, 2**max_depth)
    return max(
        (
            bmo_seminorm(values[i, j], max_depth)
            for i in range(field.dim)
            for j in range(i + 1, field.dim)
        ),
        default=0.0,
    )


def load_coefficient_spec(path: Path) -> CoefficientField:
    """Read and validate a JSON or YAML coefficient spec file."""
    with open(path, encoding="utf-8") as spec_file:
        if path.suffix in (".yaml", ".yml"):
            payload = yaml.safe_load(spec_file)
        else:
            payload = json.load(spec_file)
    spec = get_validated_payload(payload, CoefficientSpec)
    return CoefficientField.from_spec(spec)
