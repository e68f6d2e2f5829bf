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

"""Coefficient fields and paths shared by the tests"""

from pathlib import Path

from resolvent_homogenization.coefficients import CoefficientField

BASE_DIR = Path(__file__).parent.resolve()
EXAMPLE_DATA_DIR = BASE_DIR.parent.parent / "example_data"

# sin(2πy) = (exp(2πiy) - exp(-2πiy)) / 2i
SINE = [((1, 0), -0.5j), ((-1, 0), 0.5j)]


def laminate_field(dim: int = 2) -> CoefficientField:
    """The symmetric laminate (2 + sin 2πy_1) I."""
    k_plus = (1,) + (0,) * (dim - 1)
    k_minus = (-1,) + (0,) * (dim - 1)
    diagonal = [((0,) * dim, 2.0), (k_plus, -0.5j), (k_minus, 0.5j)]
    return CoefficientField.from_modes(
        dim, {(i, i): diagonal for i in range(dim)}, description="laminate"
    )


def nonsymmetric_field() -> CoefficientField:
    """A 2d field with a nonconstant symmetric part and a nonconstant skew part.

    a_11 = 2 + sin 2πy_1, a_22 = 2 + cos(2πy_1)/2, a_12^s = 0.3 cos 2πy_2 and
    b_12 = 0.8 sin 2πy_2 + 0.5 cos 2πy_1.
    """
    skew = [((0, 1), -0.4j), ((0, -1), 0.4j), ((1, 0), 0.25), ((-1, 0), 0.25)]
    symmetric_off = [((0, 1), 0.15), ((0, -1), 0.15)]
    return CoefficientField.from_modes(
        2,
        {
            (0, 0): [((0, 0), 2.0), *SINE],
            (1, 1): [((0, 0), 2.0), ((1, 0), 0.25), ((-1, 0), 0.25)],
            (0, 1): symmetric_off + skew,
            (1, 0): symmetric_off + [(k, -amplitude) for k, amplitude in skew],
        },
        description="nonsymmetric",
    )


def skew_laminate_field(amplitude: float = 1.5) -> CoefficientField:
    """A layered field with a_11 = 2, a_22 = 2 + cos 2πy_1 and the skew part
    b_12 = amplitude * sin 2πy_1.

    Its correctors are N^2 = amplitude * cos(2πy_1) / 4π = -Ñ^2 with N^1 = 0,
    a0 = diag(2, 2 + amplitude^2 / 4) and c - c̃ vanishes except for the entry
    [j, k, i] = [2, 2, 2], which equals amplitude / 4π.
    """
    skew = [((1, 0), -0.5j * amplitude), ((-1, 0), 0.5j * amplitude)]
    return CoefficientField.from_modes(
        2,
        {
            (0, 0): [((0, 0), 2.0)],
            (1, 1): [((0, 0), 2.0), ((1, 0), 0.5), ((-1, 0), 0.5)],
            (0, 1): skew,
            (1, 0): [(k, -value) for k, value in skew],
        },
        description="skew laminate",
    )


def constant_skew_field(skew: float = 0.7) -> CoefficientField:
    """The laminate plus the constant skew matrix [[0, skew], [-skew, 0]]."""
    laminate = laminate_field()
    coefficients = laminate.coefficients.copy()
    center = (laminate.band,) * 2
    coefficients[(0, 1, *center)] += skew
    coefficients[(1, 0, *center)] -= skew
    return CoefficientField(
        dim=2, band=laminate.band, coefficients=coefficients, description="skew"
    )


def bmo_skew_field() -> CoefficientField:
    """The laminate plus a skew part of large contrast, b_12 = 3 cos 2πy_1 +
    1.5 cos 6πy_1, whose mean oscillation is far above a quarter of its sup.
    """
    b = [((1, 0), 1.5), ((-1, 0), 1.5), ((3, 0), 0.75), ((-3, 0), 0.75)]
    return CoefficientField.from_modes(
        2,
        {
            (0, 0): [((0, 0), 2.0), *SINE],
            (1, 1): [((0, 0), 2.0), *SINE],
            (0, 1): b,
            (1, 0): [(k, -amplitude) for k, amplitude in b],
        },
        description="bmo skew",
    )
