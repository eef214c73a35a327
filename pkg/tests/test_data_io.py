import csv
import json

import numpy as np
import pytest

from bsbo.campaign import CampaignConfig, run_campaign
from bsbo.constraint_space import GroundSet
from bsbo.data_io import (
    REPORT_FILES,
    Block,
    DataError,
    FitnessTable,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    load_report,
    save_dataset,
    write_report,
)
from bsbo.ds_optimize import OptimizerConfig


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_full_factorial(tmp_path):
    p = write(tmp_path / "d.csv", "sequence,fitness\nAA,1.0\nAB,2.0\nBA,0.5\nBB,4\n")
    t = load_dataset(p)
    assert t.ground.alphabets == (("A", "B"), ("A", "B"))
    assert t.values.tolist() == [1.0, 2.0, 0.5, 4.0]
    assert t.n_missing == 0
    assert t.global_max() == 4.0
    assert t.sequence(1) == "AB"


def test_missing_rows_are_imputed_and_counted(tmp_path, caplog):
    p = write(tmp_path / "d.csv", "sequence,fitness\nAA,1.0\nBB,3.0\nAB,-2.0\n")
    t = load_dataset(p, impute=0.0)
    assert t.n_missing == 1
    assert t.metadata["imputed"] == 1
    assert t.values[2] == 0.0 and t.missing[2]
    assert "missing" in caplog.text
    dropped = load_dataset(p, impute=5.0, missing_policy="drop-from-ground-truth-max")
    assert dropped.global_max() == 3.0


def test_sidecar_alphabets_and_wild_type(tmp_path):
    p = write(tmp_path / "d.csv", "sequence,fitness\nAX,1.0\n")
    write(tmp_path / "d.meta.json", json.dumps({"alphabets": [["A", "B"], ["X", "Y"]], "wild_type": "BY"}))
    t = load_dataset(p)
    assert t.ground.library_size == 4
    assert t.n_missing == 3
    assert t.wild_type() == ("B", "Y")


def test_log1p_transform(tmp_path):
    p = write(tmp_path / "d.csv", "sequence,fitness\nA,0.0\nB,1.0\n")
    assert load_dataset(p, log1p=True).values.tolist() == [0.0, np.log(2.0)]


@pytest.mark.parametrize(
    "body,fragment",
    [
        ("sequence,fitness\nAA,1\nAB,x\n", ":3:"),
        ("sequence,fitness\nAA,1\nAB,1,2\n", ":3:"),
        ("sequence,score\nAA,1\n", "header"),
        ("sequence,fitness\nAA,1\nABC,1\n", "inconsistent"),
        ("sequence,fitness\nAA,nan\n", ":2:"),
        ("", "empty"),
        ("sequence,fitness\n", "no data"),
    ],
)
def test_malformed_inputs(tmp_path, body, fragment):
    p = write(tmp_path / "bad.csv", body)
    with pytest.raises(DataError, match=fragment):
        load_dataset(p)


def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nope.csv")


def test_save_load_round_trip(tmp_path):
    t = generate_synthetic(SyntheticSpec(alphabet_size=8, blocks=(Block(1, 1, 2, 2, 1.0),)))
    paths = save_dataset(t, tmp_path / "syn.csv")
    assert [p.name for p in paths] == ["syn.csv", "syn.meta.json"]
    back = load_dataset(paths[0])
    assert back.ground == t.ground
    np.testing.assert_array_equal(back.values, t.values)
    assert back.wild_type() == t.wild_type()


def test_default_synthetic_landscape():
    t = generate_synthetic()
    assert t.ground.sizes == (26, 26)
    assert t.global_max() == 1.0
    assert sorted(set(t.values.tolist())) == [0.0, 0.5, 0.7, 1.0]
    assert (t.values > 0).sum() == 16 + 18 + 10
    assert (t.values == 1.0).sum() == 16
    grid = t.values.reshape(26, 26)
    # blocks keep a one-cell gap, so every nonzero cell's 8-neighbourhood holds one level only
    for r, c in zip(*np.nonzero(grid)):
        patch = grid[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2]
        assert set(patch[patch > 0].tolist()) == {grid[r, c]}
    assert generate_synthetic().values.tolist() == t.values.tolist()
    assert generate_synthetic(SyntheticSpec(seed=1)).values.tolist() != t.values.tolist()


def test_synthetic_rejects_bad_blocks():
    with pytest.raises(DataError, match="overlap"):
        generate_synthetic(SyntheticSpec(alphabet_size=6, blocks=(Block(0, 0, 3, 3, 1.0), Block(2, 2, 2, 2, 0.5))))
    with pytest.raises(DataError, match="outside"):
        generate_synthetic(SyntheticSpec(alphabet_size=4, blocks=(Block(2, 2, 3, 3, 1.0),)))
    with pytest.raises(DataError):
        generate_synthetic(SyntheticSpec(alphabet_size=4, blocks=(Block(0, 0, 1, 1, 0.0),)))


def test_table_validates_shape():
    g = GroundSet.uniform(2, "AB")
    with pytest.raises(DataError):
        FitnessTable(g, np.zeros(3), np.zeros(3, dtype=bool))


def test_report_files(tmp_path):
    t = generate_synthetic(SyntheticSpec(alphabet_size=6, blocks=(Block(2, 3, 2, 2, 1.0),)))
    cfg = CampaignConfig(rounds=2, batch_size=5, k_random=3, optimizer=OptimizerConfig(restarts=2))
    paths = write_report(run_campaign(t, cfg), tmp_path)
    assert [p.name for p in paths] == list(REPORT_FILES)
    report = load_report(tmp_path)
    assert [r["round"] for r in report["rounds"]] == [0, 1, 2]
    with open(tmp_path / "regret.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["round"]) for r in rows] == [1, 2]
    with open(tmp_path / "per_round_batches.csv") as fh:
        batches = list(csv.DictReader(fh))
    assert sum(int(r["round"]) > 0 for r in batches) == 10
    with open(tmp_path / "ecdf.csv") as fh:
        ecdf = [r for r in csv.DictReader(fh) if r["round"] == "1"]
    assert float(ecdf[-1]["cumulative_fraction"]) == 1.0
    with open(tmp_path / "reference_lines.csv") as fh:
        assert {r["reference"] for r in csv.DictReader(fh)} == {"wild_type", "best_single_mutant", "recombined_best"}
