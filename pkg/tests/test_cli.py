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

"""Test the command line interface."""

import json
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from resolvent_homogenization.cli import EXIT_ERROR, EXIT_FAILED_ACCEPTANCE, cli
from resolvent_homogenization.config import Config
from tests.fixtures.utils import EXAMPLE_DATA_DIR

runner = CliRunner()

LAMINATE = str(EXAMPLE_DATA_DIR / "laminate.json")

CONSTANT_SWEEP = """
coefficient:
  dim: 2
  entries:
    - [[{k: [0, 0], re: 1.5}], [{k: [0, 0], re: 0.2}]]
    - [[{k: [0, 0], re: 0.2}], [{k: [0, 0], re: 1.0}]]
eps: ["1/2", "1/4", "1/8"]
grid_rule: 4
"""


def _summary(output: str) -> dict:
    """The JSON failure summary among the printed lines, skipping log records."""
    for line in output.splitlines():
        if line.startswith("{"):
            payload = json.loads(line)
            if "failures" in payload:
                return payload
    raise AssertionError("No failure summary was printed.")


def test_cell():
    """The cell command prints the homogenized laminate."""
    result = runner.invoke(cli, ["cell", "--coeff", LAMINATE, "--n-cell", "32"])
    assert result.exit_code == 0, result.output
    assert "a0:" in result.output
    assert "1.7320508" in result.output
    assert "ctilde[j=2]" in result.output


def test_cell_grid_spec():
    """Grid-sampled specs are accepted too."""
    path = str(EXAMPLE_DATA_DIR / "laminate_grid.json")
    result = runner.invoke(cli, ["cell", "--coeff", path, "--n-cell", "32"])
    assert result.exit_code == 0, result.output
    assert "1.7320508" in result.output


def test_cell_with_cache(tmp_path: Path):
    """A configured cache directory receives the corrector file."""
    config_yaml = tmp_path / "config.yaml"
    config_yaml.write_text(f"cache_dir: {tmp_path / 'cache'}\n", encoding="utf-8")
    arguments = ["cell", "--coeff", LAMINATE, "--n-cell", "16"]
    arguments += ["--config-yaml", str(config_yaml)]
    first = runner.invoke(cli, arguments)
    second = runner.invoke(cli, arguments)
    assert first.exit_code == second.exit_code == 0
    assert len(list((tmp_path / "cache").glob("*.npz"))) == 1
    assert "1.73205" in first.output
    assert "1.73205" in second.output


@pytest.mark.parametrize(
    "payload",
    [
        "{not json",
        json.dumps({"dim": 1, "entries": [[[{"k": [1], "re": 1.0}]]]}),
        json.dumps({"dim": 1, "entries": [[[{"k": [0], "re": -1.0}]]]}),
    ],
)
def test_cell_invalid_input(tmp_path: Path, payload: str):
    """Invalid or non-elliptic inputs exit with the error code."""
    path = tmp_path / "bad.json"
    path.write_text(payload, encoding="utf-8")
    result = runner.invoke(cli, ["cell", "--coeff", str(path), "--n-cell", "8"])
    assert result.exit_code == EXIT_ERROR


def test_cell_missing_file(tmp_path: Path):
    """A missing coefficient file is reported, not raised."""
    result = runner.invoke(cli, ["cell", "--coeff", str(tmp_path / "missing.json")])
    assert result.exit_code == EXIT_ERROR


def test_lemmas(tmp_path: Path):
    """The lemma battery writes one CSV line per estimate and eps."""
    out = tmp_path / "lemmas.csv"
    arguments = ["lemmas", "--eps", "1/4", "--eps", "1/8", "--n", "64"]
    result = runner.invoke(cli, arguments + ["--trials", "1", "--out", str(out)])
    assert result.exit_code == 0, result.output
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "kind,eps,lhs,rhs_part,ratio"
    assert len(lines) == 1 + 2 * 9


def test_lemmas_bad_eps():
    """eps must be a reciprocal integer."""
    result = runner.invoke(cli, ["lemmas", "--eps", "0.3"])
    assert result.exit_code == 2


def test_solve(tmp_path: Path):
    """The solve command writes the reference solution and the approximation."""
    out = tmp_path / "u.npz"
    arguments = ["solve", "--coeff", LAMINATE, "--eps", "1/4", "--grid", "64"]
    result = runner.invoke(cli, arguments + ["--order", "2", "--out", str(out)])
    assert result.exit_code == 0, result.output
    with np.load(out) as archive:
        assert int(archive["dim"]) == 2
        assert int(archive["n"]) == 64
        assert archive["coefficients"].shape == (64, 64)
        assert archive["approximation"].shape == (64, 64)
    assert "order 2 error (L2)" in result.output


def test_solve_grid_too_coarse(tmp_path: Path):
    """A grid that cannot hold a(x/eps) is rejected."""
    arguments = ["solve", "--coeff", LAMINATE, "--eps", "1/8", "--grid", "8"]
    result = runner.invoke(cli, arguments + ["--out", str(tmp_path / "u.npz")])
    assert result.exit_code == EXIT_ERROR


def test_sweep_passes(tmp_path: Path):
    """A passing sweep exits with 0 and writes both reports."""
    config = tmp_path / "sweep.yaml"
    config.write_text(CONSTANT_SWEEP + "smoothing: false\n", encoding="utf-8")
    out = tmp_path / "out"
    result = runner.invoke(cli, ["sweep", "--config", str(config), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "report.csv").exists()
    assert (out / "report.json").exists()


def test_sweep_fails_acceptance(tmp_path: Path):
    """A partial sweep exits with 1 and prints a machine-readable summary."""
    config = tmp_path / "sweep.yaml"
    config.write_text(
        f"coefficient: {LAMINATE}\neps: ['1/2', '1/4', '1/8']\nmax_iterations: 1\n",
        encoding="utf-8",
    )
    result = runner.invoke(
        cli, ["sweep", "--config", str(config), "--out", str(tmp_path / "out")]
    )
    assert result.exit_code == EXIT_FAILED_ACCEPTANCE
    summary = _summary(result.output)
    assert summary["passed"] is False
    assert summary["partial"] is True
    assert summary["failures"] == ["the sweep is partial"]


def test_sweep_invalid_config(tmp_path: Path):
    """An invalid sweep config exits with the error code before any solve."""
    config = tmp_path / "sweep.yaml"
    config.write_text(f"coefficient: {LAMINATE}\neps: []\n", encoding="utf-8")
    result = runner.invoke(
        cli, ["sweep", "--config", str(config), "--out", str(tmp_path / "out")]
    )
    assert result.exit_code == EXIT_ERROR


def test_sweep_needs_output_dir(tmp_path: Path):
    """Without --out or output_dir there is nowhere to write to."""
    config = tmp_path / "sweep.yaml"
    config.write_text(CONSTANT_SWEEP, encoding="utf-8")
    result = runner.invoke(cli, ["sweep", "--config", str(config)])
    assert result.exit_code == EXIT_ERROR


def test_jobs_from_environment(monkeypatch: pytest.MonkeyPatch):
    """HOMOG_JOBS overrides the number of concurrent sweep rows."""
    monkeypatch.setenv("HOMOG_JOBS", "3")
    assert Config().jobs == 3  # type: ignore[call-arg]
