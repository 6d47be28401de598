import csv
import hashlib

import numpy as np
import pytest

from conftest import load, split
from fairsynth import datasets
from fairsynth.datasets import IngestionError


def level_of(ds, name, row):
    i = ds.schema.position(name)
    return ds.schema.attributes[i].levels[ds.rows[row, i]]


@pytest.mark.parametrize("name,n", [("adult", 48842), ("compas", 5278), ("german", 1000)])
def test_row_counts(name, n):
    assert load(name).n == n


def test_manifest_hashes_match_vendored_files():
    manifest = datasets.load_manifest()
    for entry in manifest.values():
        for fname, digest in entry["files"].items():
            data = (datasets.RAW_DIR / fname).read_bytes()
            assert hashlib.sha256(data).hexdigest() == digest, fname


def adult_line(age, race, education="Bachelors", income="<=50K"):
    return (f"{age}, Private, 1000, {education}, 13, Never-married, Sales, Not-in-family, "
            f"{race}, Male, 0, 0, 40, United-States, {income}\n")


def test_adult_mapping(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text(adult_line(17, "Asian-Pac-Islander") + adult_line(27, "White", "12th", ">50K."))
    ds = datasets.ingest_adult(path)
    assert level_of(ds, "race", 0) == "Non-white" and level_of(ds, "race", 1) == "White"
    assert level_of(ds, "age", 0) == "17-26" and level_of(ds, "age", 1) == "27-36"
    assert level_of(ds, "income", 1) == ">50K"
    assert ds.schema.favorable == ">50K"


def test_adult_unknown_level_raises(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text(adult_line(30, "Martian"))
    with pytest.raises(IngestionError, match="Martian"):
        datasets.ingest_adult(path)


def compas_file(tmp_path, rows):
    path = tmp_path / "c.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(datasets.COMPAS_COLUMNS)
        for r in rows:
            w.writerow(r)
    return path


def test_compas_filters_and_bins(tmp_path):
    base = ["Male", 30, "Caucasian", "F", 2, 0, 0, 0, "Low"]
    other = list(base)
    other[2] = "Hispanic"
    far = list(base)
    far[6] = 45                               # screening too far from arrest
    young = ["Female", 22, "African-American", "M", 5, 1, 1, 1, "High"]
    ds = datasets.ingest_compas(compas_file(tmp_path, [base, other, far, young]))
    assert ds.n == 2
    assert level_of(ds, "priors", 0) == "1-3" and level_of(ds, "priors", 1) == ">3"
    assert level_of(ds, "age", 1) == "<25" and level_of(ds, "recidivism", 1) == "Yes"
    assert ds.schema.favorable == "No"


def test_compas_unknown_sex(tmp_path):
    path = compas_file(tmp_path, [["X", 30, "Caucasian", "F", 2, 0, 0, 0, "Low"]])
    with pytest.raises(IngestionError):
        datasets.ingest_compas(path)


def german_line(status="A92", amount="2000"):
    return ("A11 6 A34 A43 " + amount + " A65 A75 4 " + status
            + " A101 4 A121 67 A143 A152 2 A173 1 A192 A201 1\n")


def test_german_mapping(tmp_path):
    path = tmp_path / "g.data"
    path.write_text(german_line() + german_line("A93", "1500"))
    ds = datasets.ingest_german(path)
    assert level_of(ds, "sex", 0) == "Female" and level_of(ds, "sex", 1) == "Male"
    assert float(level_of(ds, "credit_amount", 0)) == 2.0
    assert float(level_of(ds, "credit_amount", 1)) == 1.5
    assert level_of(ds, "credit", 0) == "Good"


def test_german_unknown_code(tmp_path):
    path = tmp_path / "g.data"
    path.write_text(german_line("A99"))
    with pytest.raises(IngestionError, match="A99"):
        datasets.ingest_german(path)


def test_unknown_dataset_name():
    with pytest.raises(ValueError):
        datasets.ingest("iris")


def test_adult_income_split_matches_row_tally():
    train, _ = split("adult")
    frac = np.bincount(train.rows[:, train.schema.outcome], minlength=2) / train.n
    # independent tally straight from the raw files
    hi = lo = 0
    for fname in ("adult.data", "adult.test"):
        with open(datasets.RAW_DIR / fname) as fh:
            for line in fh:
                parts = [p.strip() for p in line.split(",")]
                if len(parts) < 15:
                    continue
                if parts[14].rstrip(".") == ">50K":
                    hi += 1
                else:
                    lo += 1
    assert hi + lo == 48842
    np.testing.assert_allclose(frac, [lo / (hi + lo), hi / (hi + lo)], atol=0.005)
    np.testing.assert_allclose(frac, [0.761, 0.239], atol=0.005)
