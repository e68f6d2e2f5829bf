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

"""Test the smoothing operator and the measurements of its estimates."""

import numpy as np
import pytest

from resolvent_homogenization.errors import BadEps, IncommensurateEps
from resolvent_homogenization.steklov import (
    LemmaKind,
    cosine_factor,
    lemma_evaluator,
    random_field,
    reciprocal,
    run_lemma_battery,
    steklov_apply,
)
from resolvent_homogenization.torus import TorusField

SQRT_D_HALF = np.sqrt(2) / 2


@pytest.fixture(scope="module")
def battery():
    """Lemma measurements at eps = 1/8 and 1/16, keyed by (kind, eps)."""
    records = run_lemma_battery([1 / 8, 1 / 16], n=256, trials=3, seed=0)
    return {(record.kind, record.eps): record for record in records}


def test_reciprocal():
    """eps = 1/m maps to m; other values are rejected."""
    assert reciprocal(1 / 16) == 16
    assert reciprocal(1.0) == 1
    with pytest.raises(IncommensurateEps):
        reciprocal(0.3)
    with pytest.raises(BadEps):
        reciprocal(0.0)


def test_constant_unchanged():
    """The symbol is 1 at k = 0."""
    one = TorusField.from_modes(2, 8, [((0, 0), 1.0)])
    assert np.allclose(steklov_apply(one, 0.5).coefficients, one.coefficients)


def test_whole_periods_vanish():
    """Averaging cos(2π 4 x_1) over cubes of side 1/4 gives zero."""
    u = TorusField.from_modes(2, 16, [((4, 0), 0.5), ((-4, 0), 0.5)])
    assert steklov_apply(u, 1 / 4).l2_norm() == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("eps", [0.0, -0.25, 1.5])
def test_bad_eps(eps: float):
    """The scale must lie in (0, 1]."""
    u = TorusField.zeros(1, 8)
    with pytest.raises(BadEps):
        steklov_apply(u, eps)


def test_contraction():
    """||S φ|| <= ||φ|| for 100 random fields."""
    rng = np.random.default_rng(0)
    for _ in range(100):
        phi = random_field(2, 32, 6, rng)
        assert steklov_apply(phi, 1 / 8).l2_norm() <= phi.l2_norm() * (1 + 1e-14)


@pytest.mark.parametrize("kind", [LemmaKind.M2, LemmaKind.M3])
def test_explicit_constant(kind: LemmaKind):
    """The estimates of S φ - φ hold with the constant √d/2 over 100 trials."""
    rng = np.random.default_rng(1)
    for trial in range(100):
        eps = 1 / (2 + trial % 7)
        phi = random_field(2, 32, 8, rng)
        value = lemma_evaluator(kind, eps, phi)
        assert value.lhs <= SQRT_D_HALF * value.rhs_part * (1 + 1e-12)


def test_self_adjoint_and_commutes():
    """(S φ, ψ) = (φ, S ψ) and S ∇φ = ∇ S φ."""
    rng = np.random.default_rng(2)
    phi = random_field(2, 32, 6, rng)
    psi = random_field(2, 32, 6, rng)
    eps = 1 / 4
    assert steklov_apply(phi, eps).inner(psi) == pytest.approx(
        phi.inner(steklov_apply(psi, eps)), abs=1e-12
    )
    difference = steklov_apply(phi.gradient(), eps) - steklov_apply(phi, eps).gradient()
    assert difference.l2_norm() < 1e-12


def test_first_estimate_has_unit_constant():
    """||b_ε S φ||^2 <= <b^2> ||φ||^2 for random fields."""
    rng = np.random.default_rng(3)
    b = cosine_factor(2, 1)
    for _ in range(10):
        phi = random_field(2, 64, 5, rng)
        value = lemma_evaluator(LemmaKind.L41, 1 / 8, phi, alpha=b)
        assert value.lhs <= value.rhs_part * (1 + 1e-12)


def test_lemma_needs_inputs():
    """Missing inputs of a bilinear estimate are reported."""
    phi = random_field(2, 64, 3, np.random.default_rng(4))
    with pytest.raises(ValueError, match="psi"):
        lemma_evaluator(LemmaKind.L44, 1 / 8, phi, alpha=cosine_factor(2, 1))
    with pytest.raises(ValueError, match="alpha"):
        lemma_evaluator(LemmaKind.L41, 1 / 8, phi)


def test_lemma_needs_mean_free_factor():
    """A factor with nonzero mean is rejected where <b> = 0 is required."""
    phi = random_field(2, 64, 3, np.random.default_rng(5))
    constant = TorusField.from_modes(2, 16, [((0, 0), 1.0)])
    with pytest.raises(ValueError, match="zero mean"):
        lemma_evaluator(LemmaKind.L42, 1 / 8, phi, phi, alpha=constant)


def test_factor_must_fit_grid():
    """b(x/ε) must be representable on the grid of φ."""
    phi = random_field(2, 32, 3, np.random.default_rng(6))
    with pytest.raises(IncommensurateEps):
        lemma_evaluator(LemmaKind.L41, 1 / 16, phi, alpha=cosine_factor(2, 1))


@pytest.mark.parametrize(
    "kind,low,high",
    [
        (LemmaKind.M7, 3.0, 5.0),
        (LemmaKind.L44, 3.0, 5.0),
        (LemmaKind.L45, 3.0, 5.0),
        (LemmaKind.L46, 1.7, 2.3),
    ],
)
def test_halving_eps(battery, kind: LemmaKind, low: float, high: float):
    """Halving eps divides the left-hand side by the predicted power of two."""
    factor = battery[(kind.value, 1 / 8)].lhs / battery[(kind.value, 1 / 16)].lhs
    assert low <= factor <= high


def test_battery_covers_every_kind(battery):
    """Every estimate is measured at every eps with a finite ratio."""
    assert {kind for kind, _ in battery} == {kind.value for kind in LemmaKind}
    for record in battery.values():
        assert record.ratio is not None
        assert np.isfinite(record.ratio)
