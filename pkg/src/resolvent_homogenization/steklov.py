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

"""The Steklov average S^ε over the cube ε[-1/2, 1/2)^d and measurements of its
estimates in interaction with ε-periodic factors.

On the torus S^ε is the Fourier multiplier prod_j sinc(ε k_j) with the
normalized sinc(t) = sin(πt)/(πt). Periodic factors b(y) are scalar fields on a
cell grid; b(x/ε) is formed exactly on a quadrature grid of twice the field
grid, which holds every product of up to four band-limited factors.
"""

import logging
from collections.abc import Sequence
from enum import Enum
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from resolvent_homogenization.errors import BadEps, IncommensurateEps
from resolvent_homogenization.pydantic_ import LemmaRecord
from resolvent_homogenization.torus import (
    TorusField,
    squared_frequencies,
    to_physical,
    to_spectral,
    wave_numbers,
)

MEAN_FREE_TOL = 1e-12

log = logging.getLogger(__name__)


class LemmaKind(str, Enum):
    """The measured estimates of the smoothing operator."""

    L41 = "L41"  # ||b_ε S φ||^2 <= <b^2> ||φ||^2
    L42 = "L42"  # (b_ε S φ, Φ) <= C ε <b^2>^1/2 ||φ|| ||∇Φ||, <b> = 0
    L44 = "L44"  # (b_ε S φ, S ψ) <= C ε^2 <b^2>^1/2 ||∇φ|| ||∇ψ||, <b> = 0
    L45 = "L45"  # (α_ε S φ, β_ε S ψ) <= C ε^2 ... ||∇φ|| ||∇ψ||, <αβ> = 0
    L46 = "L46"  # |(α_ε S φ, β_ε S ψ) - <αβ>(φ, ψ)| <= C ε ... ||φ|| ||∇ψ||
    M2 = "M2"  # ||S φ - φ|| <= (√d/2) ε ||∇φ||
    M3 = "M3"  # ||S φ - φ||_{H^-1} <= (√d/2) ε ||φ||
    M7 = "M7"  # ||S φ - φ|| <= C ε^2 ||∇^2 φ||
    M50 = "M50"  # ||b_ε S φ||_{H^-1} <= C ε <b^2>^1/2 ||φ||, <b> = 0


class LemmaValue(NamedTuple):
    """A measured left-hand side and the bound without its constant."""

    lhs: float
    rhs_part: float


def reciprocal(eps: float) -> int:
    """The integer m with eps = 1/m.

    Raises:
        BadEps: if eps lies outside of (0, 1].
        IncommensurateEps: if 1/eps is not an integer.
    """
    if not 0 < eps <= 1:
        raise BadEps(eps=eps)
    m = round(1 / eps)
    if abs(m * eps - 1) > 1e-9:
        fraction = Fraction(eps).limit_denominator(1000)
        raise IncommensurateEps(
            eps=eps, reason=f"1/eps = {1 / eps:.6g} ({fraction}) is not an integer."
        )
    return m


def steklov_symbol(n: int, dim: int, eps: float) -> NDArray[np.float64]:
    """The multiplier prod_j sinc(ε k_j) on an n^d grid."""
    return np.prod(np.sinc(eps * wave_numbers(n, dim)), axis=0)


def steklov_apply(u: TorusField, eps: float) -> TorusField:
    """Average u over the cube ε[-1/2, 1/2)^d.

    Raises:
        BadEps: if eps lies outside of (0, 1].
    """
    if not 0 < eps <= 1:
        raise BadEps(eps=eps)
    return u.multiplier(steklov_symbol(u.n, u.dim, eps))


def _band(factor: TorusField) -> int:
    """Largest |k_j| of a nonzero coefficient."""
    nonzero = np.abs(factor.coefficients) > 0
    if not nonzero.any():
        return 0
    return int(np.max(np.abs(wave_numbers(factor.n, factor.dim))[:, nonzero]))


class _Quadrature:
    """Physical values on the 2n quadrature grid of a lemma instance."""

    def __init__(self, n: int, dim: int, eps: float):
        self.n = n
        self.dim = dim
        self.grid = 2 * n
        self.eps = eps
        self.m = reciprocal(eps)

    def field(self, u: TorusField) -> NDArray[np.float64]:
        return u.values_on(self.grid)

    def smoothed(self, u: TorusField) -> NDArray[np.float64]:
        return steklov_apply(u, self.eps).values_on(self.grid)

    def factor(self, b: TorusField) -> NDArray[np.float64]:
        """Values of b(x/ε)."""
        band = _band(b)
        if 2 * self.m * band >= self.n:
            raise IncommensurateEps(
                eps=self.eps,
                reason=(
                    f"the factor of band {band} scaled by {self.m} does not fit on"
                    + f" a field grid of {self.n} points per axis."
                ),
            )
        return b.truncated(2 * band + 2).rescaled(self.m, self.grid).values()

    def mean(self, values: NDArray) -> float:
        return float(np.mean(values))

    def h_minus1_norm(self, values: NDArray) -> float:
        spectrum = to_spectral(values, self.dim)
        weight = 1.0 / (1.0 + squared_frequencies(self.grid, self.dim))
        return float(np.sqrt(np.sum(weight * np.abs(spectrum) ** 2)))


def _gradient_norm(u: TorusField) -> float:
    weights = squared_frequencies(u.n, u.dim)
    return float(np.sqrt(np.sum(weights * np.abs(u.coefficients) ** 2)))


def _hessian_norm(u: TorusField) -> float:
    """||∇^2 u|| with all d^2 second derivatives."""
    return float(
        np.sqrt(
            np.sum(squared_frequencies(u.n, u.dim) ** 2 * np.abs(u.coefficients) ** 2)
        )
    )


def _require(field: TorusField | None, name: str, kind: LemmaKind) -> TorusField:
    if field is None:
        raise ValueError(f"The estimate {kind.value} needs the input '{name}'.")
    return field


def _require_mean_free(values: NDArray, what: str) -> None:
    scale = max(1.0, float(np.max(np.abs(values))))
    if abs(float(np.mean(values))) > MEAN_FREE_TOL * scale:
        raise ValueError(f"The estimate needs {what} with zero mean.")


def lemma_evaluator(
    kind: LemmaKind,
    eps: float,
    phi: TorusField,
    psi: TorusField | None = None,
    alpha: TorusField | None = None,
    beta: TorusField | None = None,
) -> LemmaValue:
    """Measure one estimate of the smoothing operator at scale eps.

    `phi` and `psi` are fields on a common torus grid; `alpha` (also used as b)
    and `beta` are periodic factors given on a cell grid. The returned
    `rhs_part` is the right-hand side with its constant stripped.

    Raises:
        BadEps: if eps lies outside of (0, 1].
        IncommensurateEps: if 1/eps is not an integer or b(x/eps) does not fit on
            the grid of phi.
    """
    kind = LemmaKind(kind)
    if kind in (LemmaKind.M2, LemmaKind.M3, LemmaKind.M7):
        difference = steklov_apply(phi, eps) - phi
        if kind == LemmaKind.M2:
            return LemmaValue(difference.l2_norm(), eps * _gradient_norm(phi))
        if kind == LemmaKind.M3:
            return LemmaValue(difference.h_minus1_norm(), eps * phi.l2_norm())
        return LemmaValue(difference.l2_norm(), eps**2 * _hessian_norm(phi))

    quadrature = _Quadrature(phi.n, phi.dim, eps)
    alpha = _require(alpha, "alpha", kind)
    a = quadrature.factor(alpha)
    alpha_mean_square = alpha.l2_norm() ** 2
    smoothed_phi = quadrature.smoothed(phi)

    if kind == LemmaKind.L41:
        lhs = quadrature.mean((a * smoothed_phi) ** 2)
        return LemmaValue(lhs, alpha_mean_square * phi.l2_norm() ** 2)
    if kind in (LemmaKind.L42, LemmaKind.L44, LemmaKind.M50):
        _require_mean_free(a, "a factor b")
    if kind == LemmaKind.M50:
        lhs = quadrature.h_minus1_norm(a * smoothed_phi)
        return LemmaValue(lhs, eps * np.sqrt(alpha_mean_square) * phi.l2_norm())

    psi = _require(psi, "psi", kind)
    if kind == LemmaKind.L42:
        lhs = abs(quadrature.mean(a * smoothed_phi * quadrature.field(psi)))
        rhs = eps * np.sqrt(alpha_mean_square) * phi.l2_norm() * _gradient_norm(psi)
        return LemmaValue(lhs, rhs)
    if kind == LemmaKind.L44:
        lhs = abs(quadrature.mean(a * smoothed_phi * quadrature.smoothed(psi)))
        rhs = (
            eps**2
            * np.sqrt(alpha_mean_square)
            * _gradient_norm(phi)
            * _gradient_norm(psi)
        )
        return LemmaValue(lhs, rhs)

    beta = _require(beta, "beta", kind)
    b = quadrature.factor(beta)
    beta_mean_square = beta.l2_norm() ** 2
    form = quadrature.mean(a * smoothed_phi * b * quadrature.smoothed(psi))
    factor_norms = np.sqrt(alpha_mean_square * beta_mean_square)
    if kind == LemmaKind.L45:
        _require_mean_free(a * b, "factors α, β with <αβ>")
        rhs = eps**2 * factor_norms * _gradient_norm(phi) * _gradient_norm(psi)
        return LemmaValue(abs(form), rhs)
    product_mean = alpha.inner(beta)
    lhs = abs(form - product_mean * phi.inner(psi))
    rhs = eps * factor_norms * phi.l2_norm() * _gradient_norm(psi)
    return LemmaValue(lhs, rhs)


def cosine_factor(
    dim: int, frequency: int, axis: int = 0, n_cell: int = 16
) -> TorusField:
    """The periodic factor cos(2π frequency y_axis) on a cell grid."""
    k = [0] * dim
    k[axis] = frequency
    return TorusField.from_modes(
        dim, n_cell, [(k, 0.5), ([-index for index in k], 0.5)]
    )


def sine_series(dim: int, n: int, decay: float, axis: int = 0) -> TorusField:
    """The real sine series sum_k sgn(k)|k|^-decay i exp(2πi k x_axis) over all
    retained k != 0.

    All of its modes are in phase, which rules out cancellations in the
    bilinear forms of the ε^2 estimates.
    """
    coefficients = np.zeros((n,) * dim, dtype=np.complex128)
    k = np.arange(1, n // 2)
    index = [0] * dim
    positive = list(index)
    negative = list(index)
    positive[axis] = k
    negative[axis] = (-k) % n
    coefficients[tuple(positive)] = 1j * k**-decay
    coefficients[tuple(negative)] = -1j * k**-decay
    return TorusField(dim=dim, n=n, coefficients=coefficients)


def random_field(
    dim: int, n: int, band: int, rng: np.random.Generator
) -> TorusField:
    """A random real trigonometric polynomial with modes |k_j| <= band."""
    if 2 * band + 2 > n:
        raise ValueError(f"A band of {band} does not fit on a grid of {n} points.")
    inside = np.all(np.abs(wave_numbers(n, dim)) <= band, axis=0)
    shape = (n,) * dim
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    coefficients = noise * inside
    # the real part keeps the band and symmetrizes k <-> -k
    return TorusField.from_values(to_physical(coefficients, dim), dim)


RANDOM_BAND = 3
RANDOM_KINDS = (
    LemmaKind.M2,
    LemmaKind.M3,
    LemmaKind.M7,
    LemmaKind.L41,
    LemmaKind.L42,
    LemmaKind.M50,
)


def _record(kind: LemmaKind, eps: float, value: LemmaValue) -> LemmaRecord:
    ratio = value.lhs / value.rhs_part if value.rhs_part > 0 else None
    return LemmaRecord(
        kind=kind.value, eps=eps, lhs=value.lhs, rhs_part=value.rhs_part, ratio=ratio
    )


def run_lemma_battery(
    eps_values: Sequence[float],
    n: int = 256,
    trials: int = 10,
    seed: int = 0,
    dim: int = 2,
) -> list[LemmaRecord]:
    """Measure every estimate at every eps.

    Estimates with free inputs are measured on `trials` seeded random fields and
    the trial with the largest ratio lhs / rhs_part is kept. The ε^2 estimates
    and the ε estimate with a nonzero mean use in-phase sine series, for which
    the measured left-hand sides follow the predicted powers of ε.
    """
    b = cosine_factor(dim, 1)
    b_double = cosine_factor(dim, 2)
    smooth = sine_series(dim, n, 1.5)
    transverse_rough = sine_series(dim, n, 0.5, axis=dim - 1)
    transverse_smooth = sine_series(dim, n, 1.5, axis=dim - 1)
    records: list[LemmaRecord] = []
    for eps in eps_values:
        rng = np.random.default_rng(seed)
        pairs = [
            (
                random_field(dim, n, RANDOM_BAND, rng),
                random_field(dim, n, RANDOM_BAND, rng),
            )
            for _ in range(trials)
        ]
        for kind in RANDOM_KINDS:
            worst = max(
                (
                    _record(kind, eps, lemma_evaluator(kind, eps, phi, psi, alpha=b))
                    for phi, psi in pairs
                ),
                key=lambda record: record.ratio or 0.0,
            )
            records.append(worst)
        records.append(
            _record(
                LemmaKind.L44,
                eps,
                lemma_evaluator(LemmaKind.L44, eps, smooth, smooth, alpha=b),
            )
        )
        records.append(
            _record(
                LemmaKind.L45,
                eps,
                lemma_evaluator(
                    LemmaKind.L45, eps, smooth, smooth, alpha=b, beta=b_double
                ),
            )
        )
        records.append(
            _record(
                LemmaKind.L46,
                eps,
                lemma_evaluator(
                    LemmaKind.L46,
                    eps,
                    transverse_rough,
                    transverse_smooth,
                    alpha=b,
                    beta=b,
                ),
            )
        )
        log.info("Measured the smoothing estimates.", extra={"eps": eps, "n": n})
    return records
