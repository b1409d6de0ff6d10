"""Access to the bundled example model, fixtures, and synthetic dataset.

The bundle contains the 24-parameter evacuation model (`evac.spec`), a
result fixture carrying its published estimates (`table4_fixture.json`,
usable by the `wtp` command without any estimation), and a synthetic
dataset simulated from those estimates (586 persons x 9 tasks x 4
alternatives).
"""

from __future__ import annotations

from pathlib import Path

from .dataset import ChoiceDataset, ColumnMapping, load_long_table
from .estimate import EstimationResult, result_from_json
from .modelspec import ModelSpec, parse_model_spec

_DATA_DIR = Path(__file__).parent / "data"

SPEC_FILE = "evac.spec"
FIXTURE_FILE = "table4_fixture.json"
DATASET_FILE = "evac_synthetic.csv.gz"

#: Column roles of the bundled dataset.
BUNDLED_MAPPING = ColumnMapping(
    peer_share_columns=("peer_share",),
    covariate_columns=("age", "luggage", "disability", "pets", "anxiety",
                       "fear", "pandemic_risk"),
)


def data_path(name: str) -> Path:
    path = _DATA_DIR / name
    if not path.exists():
        raise FileNotFoundError(path)
    return path


def bundled_spec_text() -> str:
    return data_path(SPEC_FILE).read_text(encoding="utf-8")


def bundled_spec() -> ModelSpec:
    return parse_model_spec(bundled_spec_text())


def load_table4_result() -> EstimationResult:
    return result_from_json(data_path(FIXTURE_FILE).read_text(encoding="utf-8"))


def load_bundled_dataset() -> ChoiceDataset:
    return load_long_table(data_path(DATASET_FILE), BUNDLED_MAPPING)
