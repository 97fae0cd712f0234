#!/usr/bin/env python3
"""Build headered CSVs for the Adult, COMPAS and Law benchmarks under data/.

The raw files are taken from PyPI distributions that bundle them:
``responsibly`` (UCI Adult train+test, ProPublica compas-scores-two-years)
and ``ethicml`` (LSAC law school sample from Kusner et al.).  Only
pip and the standard library are needed to fetch them.

COMPAS rows are filtered with ProPublica's screening rules; missing values
are left in place for the loader to drop.
"""
import argparse
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import pandas as pd

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]


def download(package, version, dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", f"{package}=={version}",
         "--no-deps", "--only-binary=:all:", "-d", str(dest), "-q"],
        check=True,
    )
    return next(Path(dest).glob(f"{package}-{version}-*.whl"))


def adult(whl, out):
    with zipfile.ZipFile(whl) as zf:
        train = zf.read("responsibly/dataset/adult/adult.data").decode()
        test = zf.read("responsibly/dataset/adult/adult.test").decode()
    # adult.test starts with a '|1x3 Cross validator' line
    test = "\n".join(test.splitlines()[1:])
    frames = [
        pd.read_csv(io.StringIO(t), header=None, names=ADULT_COLUMNS,
                    skipinitialspace=True, dtype=str)
        for t in (train, test)
    ]
    df = pd.concat(frames, ignore_index=True).dropna(how="all")
    df["income"] = df["income"].str.rstrip(".")
    df.to_csv(out, index=False)
    return len(df)


def compas(whl, out):
    with zipfile.ZipFile(whl) as zf:
        df = pd.read_csv(io.BytesIO(zf.read(
            "responsibly/dataset/compas/compas-scores-two-years.csv")))
    df = df[
        df.days_b_screening_arrest.between(-30, 30)
        & (df.is_recid != -1)
        & (df.c_charge_degree != "O")
        & (df.score_text != "N/A")
    ]
    cols = ["sex", "age", "age_cat", "race", "juv_fel_count", "juv_misd_count",
            "juv_other_count", "priors_count", "c_charge_degree", "c_charge_desc",
            "two_year_recid"]
    df[cols].to_csv(out, index=False)
    return len(df)


def law(whl, out):
    with zipfile.ZipFile(whl) as zf:
        df = pd.read_csv(io.BytesIO(zf.read("ethicml/data/csvs/law.csv.zip")),
                         compression="zip")
    race_cols = [c for c in df.columns if c.startswith("Race_")]
    res = pd.DataFrame({
        "lsat": df["LSAT"],
        "ugpa": df["UGPA"],
        "zfya": df["ZFYA"],
        "sex": df["Sex_1"].map({1: "1", 0: "2"}),
        "race": df[race_cols].idxmax(axis=1).str.removeprefix("Race_"),
        "pass": df["PF_1"],
    })
    res.to_csv(out, index=False)
    return len(res)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default=Path(__file__).resolve().parents[1] / "data", type=Path)
    args = ap.parse_args(argv)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        resp = download("responsibly", "0.1.2", tmp)
        eml = download("ethicml", "1.3.0", tmp)
        print("adult", adult(resp, args.out_dir / "adult.csv"))
        print("compas", compas(resp, args.out_dir / "compas.csv"))
        print("law", law(eml, args.out_dir / "law.csv"))


if __name__ == "__main__":
    main()
