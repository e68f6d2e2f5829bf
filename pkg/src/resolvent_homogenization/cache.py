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

"""A file cache of cell correctors and homogenized data."""

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from resolvent_homogenization.cell import (
    CellCorrectors,
    CorrectorFamily,
    FluxCorrectors,
    HomogenizedData,
)
from resolvent_homogenization.coefficients import CoefficientField
from resolvent_homogenization.torus import TorusField

log = logging.getLogger(__name__)


class CorrectorCache:
    """Stores the outcome of `homogenize` as one .npz file per cache key.

    The key is a SHA-256 hash of the coefficient amplitudes, the cell grid and
    the solver tolerance.
    """

    def __init__(self, directory: Path):
        self.directory = Path(directory)

    @staticmethod
    def key(field: CoefficientField, n_cell: int, tol: float) -> str:
        """The content hash identifying one homogenization run."""
        digest = hashlib.sha256()
        digest.update(field.content_hash().encode())
        digest.update(json.dumps({"n_cell": n_cell, "tol": tol}).encode())
        return digest.hexdigest()

    def path(self, key: str) -> Path:
        """The cache file of a key."""
        return self.directory / f"{key}.npz"

    def load(
        self, field: CoefficientField, n_cell: int, tol: float
    ) -> tuple[CellCorrectors, HomogenizedData] | None:
        """Return the cached result or None on a cache miss."""
        path = self.path(self.key(field, n_cell, tol))
        if not path.exists():
            return None
        with np.load(path) as archive:
            arrays = {name: archive[name] for name in archive.files}
        metadata = json.loads(str(arrays.pop("metadata")))
        log.debug("Loaded cell correctors from the cache.", extra={"path": str(path)})

        def family(name: str, adjoint: bool) -> CorrectorFamily:
            correctors = TorusField(
                dim=field.dim, n=n_cell, coefficients=arrays[name]
            )
            return CorrectorFamily.from_correctors(
                correctors,
                adjoint=adjoint,
                residual_norms=metadata[name]["residual_norms"],
                iterations=metadata[name]["iterations"],
            )

        def flux(name: str) -> FluxCorrectors:
            return FluxCorrectors(
                fields=TorusField(dim=field.dim, n=n_cell, coefficients=arrays[name]),
                solenoidality_defects=metadata[name]["solenoidality_defects"],
            )

        correctors = CellCorrectors(
            primal=family("N", adjoint=False), adjoint=family("Ntilde", adjoint=True)
        )
        homogenized = HomogenizedData(
            a0=arrays["a0"],
            a0_adj=arrays["a0_adj"],
            g=flux("g"),
            gtilde=flux("gtilde"),
            c=arrays["c"],
            ctilde=arrays["ctilde"],
            adjoint_defect=metadata["adjoint_defect"],
            constants_defect=metadata["constants_defect"],
        )
        return correctors, homogenized

    def store(
        self,
        field: CoefficientField,
        n_cell: int,
        tol: float,
        correctors: CellCorrectors,
        homogenized: HomogenizedData,
    ) -> Path:
        """Write one homogenization result and return the file path."""
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path(self.key(field, n_cell, tol))
        metadata = {
            "dim": field.dim,
            "n_cell": n_cell,
            "tol": tol,
            "N": {
                "residual_norms": correctors.primal.residual_norms,
                "iterations": correctors.primal.iterations,
            },
            "Ntilde": {
                "residual_norms": correctors.adjoint.residual_norms,
                "iterations": correctors.adjoint.iterations,
            },
            "g": {"solenoidality_defects": homogenized.g.solenoidality_defects},
            "gtilde": {
                "solenoidality_defects": homogenized.gtilde.solenoidality_defects
            },
            "adjoint_defect": homogenized.adjoint_defect,
            "constants_defect": homogenized.constants_defect,
        }
        np.savez_compressed(
            path,
            N=correctors.N.coefficients,
            Ntilde=correctors.Ntilde.coefficients,
            a0=homogenized.a0,
            a0_adj=homogenized.a0_adj,
            g=homogenized.g.fields.coefficients,
            gtilde=homogenized.gtilde.fields.coefficients,
            c=homogenized.c,
            ctilde=homogenized.ctilde,
            metadata=np.array(json.dumps(metadata)),
        )
        log.info("Stored cell correctors in the cache.", extra={"path": str(path)})
        return path
