"""Loading and preprocessing of the Adult, COMPAS and German Credit files.

Raw column names and file names are pinned in ``data/manifest.json``; a
value outside the documented vocabulary raises :class:`IngestionError`
rather than being coerced.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .tabular import Attribute, Dataset, Schema

DATA_DIR = Path(__file__).resolve().parents[2] / "data"
RAW_DIR = DATA_DIR / "raw"
MANIFEST = DATA_DIR / "manifest.json"


class IngestionError(ValueError):
    """Raw data did not match the documented layout or vocabulary."""


def load_manifest(path=MANIFEST) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _map_levels(values: pd.Series, mapping: dict, column: str) -> pd.Series:
    out = values.map(mapping)
    bad = values[out.isna()].unique()
    if len(bad):
        raise IngestionError(f"unknown value(s) in {column!r}: {sorted(map(str, bad))[:10]}")
    return out


def _require(frame: pd.DataFrame, columns, source) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise IngestionError(f"{source}: missing column(s) {missing}")


def _to_dataset(schema: Schema, frame: pd.DataFrame) -> Dataset:
    cols = []
    for a in schema.attributes:
        lookup = {lev: i for i, lev in enumerate(a.levels)}
        col = frame[a.name].astype(str).map(lookup)
        if col.isna().any():
            bad = frame[a.name][col.isna()].unique()
            raise IngestionError(f"unknown level(s) for {a.name!r}: {list(bad)[:10]}")
        cols.append(col.to_numpy(dtype=np.int64))
    return Dataset(schema, np.stack(cols, axis=1))


# -- Adult -------------------------------------------------------------------------

ADULT_COLUMNS = ["age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
                 "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
                 "hours-per-week", "native-country", "income"]

ADULT_EDUCATION = {
    "Preschool": "<11th", "1st-4th": "<11th", "5th-6th": "<11th", "7th-8th": "<11th",
    "9th": "<11th", "10th": "<11th", "11th": "11th", "12th": "11th",
    "HS-grad": "HS", "Some-college": "Some-college", "Assoc-acdm": "Associate",
    "Assoc-voc": "Vocational", "Bachelors": "Bachelors", "Masters": "Graduate",
    "Prof-school": "Graduate", "Doctorate": "Graduate",
}
ADULT_EDU_LEVELS = ("<11th", "11th", "HS", "Some-college", "Associate", "Vocational",
                    "Bachelors", "Graduate")
ADULT_AGE_LEVELS = tuple(f"{17 + 10 * k}-{26 + 10 * k}" for k in range(8))
ADULT_RACES = {"White": "White", "Black": "Non-white", "Asian-Pac-Islander": "Non-white",
               "Amer-Indian-Eskimo": "Non-white", "Other": "Non-white"}


def adult_schema() -> Schema:
    return Schema((
        Attribute("race", ("Non-white", "White"), "protected"),
        Attribute("sex", ("Female", "Male"), "protected"),
        Attribute("age", ADULT_AGE_LEVELS),
        Attribute("education", ADULT_EDU_LEVELS),
        Attribute("income", ("<=50K", ">50K"), "outcome"),
    ), privileged={"race": "White", "sex": "Male"}, favorable=">50K")


def _read_adult(path: Path) -> pd.DataFrame:
    frame = pd.read_csv(path, header=None, names=ADULT_COLUMNS, skipinitialspace=True,
                        comment="|", dtype=str, na_values=[], keep_default_na=False)
    frame = frame.dropna(how="all")
    frame = frame[frame["age"].str.len() > 0]
    return frame


def adult_frame(raw) -> pd.DataFrame:
    """Preprocessed Adult records as level strings."""
    paths = _adult_paths(raw)
    frame = pd.concat([_read_adult(p) for p in paths], ignore_index=True)
    _require(frame, ["age", "race", "sex", "education", "income"], "adult")
    age = pd.to_numeric(frame["age"], errors="coerce")
    if age.isna().any() or (age < 17).any() or (age > 96).any():
        raise IngestionError("adult: age outside 17..96 or not numeric")
    out = pd.DataFrame({
        "race": _map_levels(frame["race"], ADULT_RACES, "race"),
        "sex": _map_levels(frame["sex"], {"Male": "Male", "Female": "Female"}, "sex"),
        "age": [ADULT_AGE_LEVELS[(int(a) - 17) // 10] for a in age],
        "education": _map_levels(frame["education"], ADULT_EDUCATION, "education"),
        "income": _map_levels(frame["income"].str.rstrip("."),
                              {"<=50K": "<=50K", ">50K": ">50K"}, "income"),
    })
    return out


def _adult_paths(raw):
    if raw is None:
        raw = RAW_DIR
    if isinstance(raw, (list, tuple)):
        return [Path(p) for p in raw]
    raw = Path(raw)
    if raw.is_dir():
        return [raw / "adult.data", raw / "adult.test"]
    return [raw]


def ingest_adult(raw=None) -> Dataset:
    """Adult census income: race, sex, age decade, education stage, income."""
    return _to_dataset(adult_schema(), adult_frame(raw))


# -- COMPAS ------------------------------------------------------------------------

COMPAS_COLUMNS = ["sex", "age", "race", "c_charge_degree", "priors_count", "two_year_recid",
                  "days_b_screening_arrest", "is_recid", "score_text"]


def compas_schema() -> Schema:
    return Schema((
        Attribute("race", ("African-American", "Caucasian"), "protected"),
        Attribute("sex", ("Male", "Female"), "protected"),
        Attribute("age", ("<25", "25-45", ">45")),
        Attribute("charge", ("F", "M")),
        Attribute("priors", ("0", "1-3", ">3")),
        Attribute("recidivism", ("Yes", "No"), "outcome"),
    ), privileged={"race": "Caucasian", "sex": "Female"}, favorable="No")


def _bin_age(age: int) -> str:
    return "<25" if age < 25 else ("25-45" if age <= 45 else ">45")


def _bin_priors(n: int) -> str:
    return "0" if n == 0 else ("1-3" if n <= 3 else ">3")


def compas_frame(raw) -> pd.DataFrame:
    path = Path(raw) if raw is not None else RAW_DIR / "compas-scores-two-years.csv"
    if path.is_dir():
        path = path / "compas-scores-two-years.csv"
    frame = pd.read_csv(path)
    _require(frame, COMPAS_COLUMNS, "compas")
    # the customary screening-date and charge filters of the two-year file
    keep = (frame["days_b_screening_arrest"].between(-30, 30)
            & (frame["is_recid"] != -1)
            & (frame["c_charge_degree"] != "O")
            & (frame["score_text"] != "N/A"))
    frame = frame[keep]
    frame = frame[frame["race"].isin(["African-American", "Caucasian"])]
    recid = _map_levels(frame["two_year_recid"], {0: "No", 1: "Yes"}, "two_year_recid")
    return pd.DataFrame({
        "race": frame["race"].to_numpy(),
        "sex": _map_levels(frame["sex"], {"Male": "Male", "Female": "Female"}, "sex").to_numpy(),
        "age": [_bin_age(int(a)) for a in frame["age"]],
        "charge": _map_levels(frame["c_charge_degree"], {"F": "F", "M": "M"},
                              "c_charge_degree").to_numpy(),
        "priors": [_bin_priors(int(p)) for p in frame["priors_count"]],
        "recidivism": recid.to_numpy(),
    })


def ingest_compas(raw=None) -> Dataset:
    """COMPAS two-year recidivism for African-American and Caucasian defendants."""
    return _to_dataset(compas_schema(), compas_frame(raw))


# -- German Credit -------------------------------------------------------------------

GERMAN_COLUMNS = ["checking", "duration", "credit_history", "purpose", "credit_amount",
                  "savings", "employment", "installment_rate", "personal_status",
                  "other_debtors", "residence_since", "property", "age",
                  "other_installment_plans", "housing", "existing_credits", "job",
                  "people_liable", "telephone", "foreign_worker", "credit"]
GERMAN_NUMERIC = {"duration", "credit_amount", "installment_rate", "residence_since", "age",
                  "existing_credits", "people_liable"}
GERMAN_CODES = {
    "checking": ["A11", "A12", "A13", "A14"],
    "credit_history": ["A30", "A31", "A32", "A33", "A34"],
    "purpose": ["A40", "A41", "A42", "A43", "A44", "A45", "A46", "A47", "A48", "A49", "A410"],
    "savings": ["A61", "A62", "A63", "A64", "A65"],
    "employment": ["A71", "A72", "A73", "A74", "A75"],
    "other_debtors": ["A101", "A102", "A103"],
    "property": ["A121", "A122", "A123", "A124"],
    "other_installment_plans": ["A141", "A142", "A143"],
    "housing": ["A151", "A152", "A153"],
    "job": ["A171", "A172", "A173", "A174"],
    "telephone": ["A191", "A192"],
    "foreign_worker": ["A201", "A202"],
}
GERMAN_SEX = {"A91": "Male", "A93": "Male", "A94": "Male", "A92": "Female", "A95": "Female"}


def _num_label(v: float) -> str:
    return repr(float(v))


def german_frame(raw) -> pd.DataFrame:
    path = Path(raw) if raw is not None else RAW_DIR / "german.data"
    if path.is_dir():
        path = path / "german.data"
    frame = pd.read_csv(path, sep=r"\s+", header=None, dtype=str)
    if frame.shape[1] != len(GERMAN_COLUMNS):
        raise IngestionError(f"german: expected {len(GERMAN_COLUMNS)} columns, got {frame.shape[1]}")
    frame.columns = GERMAN_COLUMNS
    out = {}
    for name in GERMAN_COLUMNS:
        col = frame[name]
        if name == "personal_status":
            out["sex"] = _map_levels(col, GERMAN_SEX, name)
        elif name == "credit":
            out["credit"] = _map_levels(col, {"1": "Good", "2": "Bad"}, name)
        elif name in GERMAN_NUMERIC:
            vals = pd.to_numeric(col, errors="coerce")
            if vals.isna().any():
                raise IngestionError(f"german: non-numeric value in {name!r}")
            if name == "credit_amount":
                vals = vals / 1000.0
            out[name] = vals.map(_num_label)
        else:
            out[name] = _map_levels(col, {c: c for c in GERMAN_CODES[name]}, name)
    return pd.DataFrame(out)


def german_schema(frame: pd.DataFrame | None = None) -> Schema:
    """Schema for the German file; numeric levels are the observed values."""
    if frame is None:
        frame = german_frame(None)
    attrs = []
    for name in frame.columns:
        if name == "sex":
            attrs.append(Attribute("sex", ("Female", "Male"), "protected"))
        elif name == "credit":
            attrs.append(Attribute("credit", ("Bad", "Good"), "outcome"))
        elif name in GERMAN_NUMERIC:
            levels = sorted(frame[name].unique(), key=float)
            attrs.append(Attribute(name, tuple(levels), numeric=True))
        else:
            attrs.append(Attribute(name, tuple(GERMAN_CODES[name])))
    return Schema(tuple(attrs), privileged={"sex": "Male"}, favorable="Good")


def ingest_german(raw=None) -> Dataset:
    """German Credit with sex derived from personal status and amounts in thousands."""
    frame = german_frame(raw)
    return _to_dataset(german_schema(frame), frame)


INGESTERS = {"adult": ingest_adult, "compas": ingest_compas, "german": ingest_german}


def ingest(name: str, raw=None) -> Dataset:
    try:
        fn = INGESTERS[name]
    except KeyError:
        raise ValueError(f"unknown dataset {name!r}; expected one of {sorted(INGESTERS)}") from None
    return fn(raw)
