# Copyright 2021 - 2024 Universit�t T�bingen, DKFZ, EMBL, and Universit�t zu K�ln
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

"""Test the cell problems, the homogenized matrix and the corrector constants."""

from pathlib import Path

import numpy as np
import pytest

from resolvent_homogenization.cache import CorrectorCache
from resolvent_homogenization.cell import (
    CellCorrectors,
    homogenize,
    solve_cell_problem,
)
from resolvent_homogenization.coefficients import CoefficientField
from resolvent_homogenization.errors import GridTooCoarse, NonElliptic
from resolvent_homogenization.torus import grid_points
from tests.fixtures.utils import (
    bmo_skew_field,
    laminate_field,
    nonsymmetric_field,
    skew_laminate_field,
)

SQRT3 = np.sqrt(3.0)


@pytest.fixture(scope="module")
def laminate():
    """The homogenized laminate on a 64-point cell grid."""
    field = laminate_field()
    return (field, *homogenize(field, 64))


@pytest.fixture(scope="module")
def nonsymmetric():
    """The homogenized nonsymmetric field on a 32-point cell grid."""
    field = nonsymmetric_field()
    return (field, *homogenize(field, 32))


def test_constant_field():
    """Constant fields have vanishing correctors and a0 = a."""
    matrix = np.array([[2.0, 0.5], [-0.5, 1.0]])
    correctors, homogenized = homogenize(CoefficientField.constant(matrix), 4)
    assert not np.any(correctors.N.coefficients)
    assert not np.any(correctors.Ntilde.coefficients)
    assert np.allclose(homogenized.a0, matrix, atol=1e-14)
    assert not np.any(homogenized.g.fields.coefficients)
    assert not np.any(homogenized.c)
    assert not np.any(homogenized.ctilde)


def test_laminate_matrix(laminate):
    """a0 = diag(√3, 2): harmonic mean across the layers, arithmetic along them."""
    _, _, homogenized = laminate
    assert np.allclose(homogenized.a0, np.diag([SQRT3, 2.0]), atol=1e-8)
    assert np.allclose(homogenized.a0, homogenized.a0.T, atol=1e-12)


def test_laminate_correctors(laminate):
    """dN^1/dy_1 = √3 / (2 + sin 2πy_1) - 1 and N^2 = 0."""
    _, correctors, _ = laminate
    y = grid_points(64, 2)[0]
    expected = SQRT3 / (2 + np.sin(2 * np.pi * y)) - 1
    gradients = correctors.gradN.values()
    assert np.allclose(gradients[0, 0], expected, atol=1e-8)
    assert np.allclose(gradients[0, 1], 0.0, atol=1e-10)
    assert correctors.N.component(1).l2_norm() < 1e-10
    assert correctors.N.component(0).mean == 0.0


def test_laminate_flux_correctors(laminate):
    """The layer-normal flux is constant, so g^1 vanishes; g^2 = sin(2πy_1) e_2."""
    _, _, homogenized = laminate
    g = homogenized.g.fields
    assert g.component(0).l2_norm() < 1e-8
    assert g.component(1, 1).l2_norm() == pytest.approx(1 / np.sqrt(2), abs=1e-8)
    assert max(homogenized.g.solenoidality_defects) <= 1e-8


def test_symmetric_shortcut(laminate):
    """For symmetric fields both families coincide and c = c̃."""
    field, correctors, homogenized = laminate
    assert correctors.adjoint.adjoint
    assert np.array_equal(correctors.N.coefficients, correctors.Ntilde.coefficients)
    assert np.max(np.abs(homogenized.c - homogenized.ctilde)) <= 1e-7
    assert homogenized.constants_defect <= 1e-7

    adjoint = solve_cell_problem(field, 64, adjoint=True)
    difference = adjoint.correctors - correctors.N
    assert difference.l2_norm() < 1e-8


def test_one_dimensional_harmonic_mean():
    """In one dimension a0 is the harmonic mean."""
    _, homogenized = homogenize(laminate_field(dim=1), 64)
    assert homogenized.a0[0, 0] == pytest.approx(SQRT3, abs=1e-8)


def test_adjoint_consistency(nonsymmetric):
    """(a*)^0 = (a0)^T for a nonsymmetric field."""
    _, _, homogenized = nonsymmetric
    assert np.max(np.abs(homogenized.a0_adj - homogenized.a0.T)) <= 1e-7
    assert homogenized.adjoint_defect <= 1e-7


def test_flux_correctors_nonsymmetric(nonsymmetric):
    """Both flux corrector families have zero mean and are solenoidal."""
    _, correctors, homogenized = nonsymmetric
    for flux in (homogenized.g, homogenized.gtilde):
        assert not np.any(flux.fields.coefficients[..., 0, 0])
        assert max(flux.solenoidality_defects) <= 1e-8
    assert max(correctors.primal.residual_norms) <= 1e-8
    assert max(correctors.adjoint.residual_norms) <= 1e-8


def test_constants_nonsymmetric(nonsymmetric):
    """The constants are real arrays indexed [j, k, i]; the field is generic
    enough for c and c̃ to differ.
    """
    _, _, homogenized = nonsymmetric
    assert homogenized.c.shape == (2, 2, 2)
    assert homogenized.ctilde.shape == (2, 2, 2)
    assert homogenized.constants_defect > 1e-6


def test_a0_is_elliptic(nonsymmetric):
    """The symmetric part of a0 is bounded below by the ellipticity constant."""
    _, _, homogenized = nonsymmetric
    a0 = homogenized.a0
    assert np.linalg.eigvalsh((a0 + a0.T) / 2)[0] > 0.5


def test_skew_laminate_closed_form():
    """A skew part coupled to a layered symmetric part: N^2 = -Ñ^2 is known in
    closed form and c - c̃ has the single entry amplitude / 4π.
    """
    amplitude = 1.5
    correctors, homogenized = homogenize(skew_laminate_field(amplitude), 16)
    y = grid_points(16, 2)[0]
    expected = amplitude * np.cos(2 * np.pi * y) / (4 * np.pi)
    assert np.allclose(correctors.N.values()[1], expected, atol=1e-8)
    assert np.allclose(correctors.Ntilde.values()[1], -expected, atol=1e-8)
    assert correctors.N.component(0).l2_norm() < 1e-10
    assert np.allclose(
        homogenized.a0, np.diag([2.0, 2.0 + amplitude**2 / 4]), atol=1e-8
    )
    difference = homogenized.c - homogenized.ctilde
    assert difference[1, 1, 1] == pytest.approx(amplitude / (4 * np.pi), abs=1e-8)
    difference[1, 1, 1] = 0.0
    assert np.max(np.abs(difference)) <= 1e-8


def test_parallel_families_agree():
    """Solving the j-problems on threads gives the same correctors."""
    field = nonsymmetric_field()
    serial = solve_cell_problem(field, 16)
    threaded = solve_cell_problem(field, 16, jobs=2)
    assert np.allclose(
        serial.correctors.coefficients, threaded.correctors.coefficients, atol=1e-14
    )


@pytest.mark.parametrize("n_cell", [3, 12, 2])
def test_cell_grid_power_of_two(n_cell: int):
    """The cell grid is a power of two of at least 4."""
    with pytest.raises(ValueError):
        solve_cell_problem(laminate_field(), n_cell)


def test_cell_grid_too_coarse():
    """A band-3 field does not fit on 4 points."""
    with pytest.raises(GridTooCoarse):
        solve_cell_problem(bmo_skew_field(), 4)


def test_cell_problem_non_elliptic():
    """Non-elliptic fields are rejected before solving."""
    field = CoefficientField.from_modes(
        2,
        {
            (0, 0): [((0, 0), 0.5), ((1, 0), 0.5), ((-1, 0), 0.5)],
            (1, 1): [((0, 0), 1)],
        },
    )
    with pytest.raises(NonElliptic):
        solve_cell_problem(field, 8)


def test_cache_round_trip(tmp_path: Path, nonsymmetric):
    """A stored result loads back identically; other keys miss."""
    field, correctors, homogenized = nonsymmetric
    cache = CorrectorCache(tmp_path)
    assert cache.load(field, 32, 1e-10) is None
    cache.store(field, 32, 1e-10, correctors, homogenized)

    loaded = cache.load(field, 32, 1e-10)
    assert loaded is not None
    loaded_correctors, loaded_homogenized = loaded
    assert np.array_equal(loaded_correctors.N.coefficients, correctors.N.coefficients)
    assert np.array_equal(loaded_homogenized.c, homogenized.c)
    assert loaded_homogenized.g.solenoidality_defects == (
        homogenized.g.solenoidality_defects
    )
    assert loaded_correctors.adjoint.adjoint
    assert cache.load(field, 32, 1e-8) is None
    assert cache.load(laminate_field(), 32, 1e-10) is None


@pytest.mark.parametrize(
    "name", ["dim", "n_cell", "N", "Ntilde", "gradN", "gradNtilde"]
)
def test_corrector_accessors_are_documented(name):
    """The accessors of the corrector pair carry docstrings."""
    assert getattr(CellCorrectors, name).__doc__
