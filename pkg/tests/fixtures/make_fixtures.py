"""Regenerate the CLI fixture datasets and golden results.

    python tests/fixtures/make_fixtures.py

Golden files hold the result payload without the manifest.
"""

import json
from pathlib import Path

import numpy as np

from sslinfer.cli import main
from sslinfer.core import write_dataset_csv
from sslinfer.sim import draw_covariates, mean_function

HERE = Path(__file__).parent
GOLDEN = {
    "additive": ["estimate", "--labeled", "additive_labeled.csv", "--unlabeled", "additive_unlabeled.csv",
                 "--method", "sssl", "--component", "6", "--seed", "3"],
    "linear": ["estimate", "--labeled", "linear_labeled.csv", "--method", "dlasso1", "--component", "1", "--seed", "5"],
}


def write_data():
    rng = np.random.default_rng(20240601)
    x = draw_covariates(rng, 120, 10)
    y = mean_function(2, x[:40]) + rng.standard_normal(40)
    write_dataset_csv(x[:40], y, HERE / "additive_labeled.csv", x[40:], HERE / "additive_unlabeled.csv")
    x = rng.standard_normal((50, 6))
    y = x @ np.array([1.5, 0, -1, 0, 0, 0.5]) + rng.standard_normal(50)
    write_dataset_csv(x, y, HERE / "linear_labeled.csv")


def golden_argv(name, out):
    return [a if not a.endswith(".csv") else str(HERE / a) for a in GOLDEN[name]] + ["--out", str(out)]


def write_golden():
    for name in GOLDEN:
        out = HERE / f"{name}.result.json"
        assert main(golden_argv(name, out)) == 0
        doc = json.loads(out.read_text())
        doc.pop("manifest")
        out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    write_data()
    write_golden()
