#!/usr/bin/env python3
"""Materialize the benchmark CSV files under data/.

The repository already ships ``boston.csv`` (the StatLib Boston housing
table, 506 rows, 13 features plus the median value target) and
``wisconsin.csv`` (the UCI breast cancer diagnostic table bundled with
scikit-learn, 569 rows, 30 features plus a malignant indicator). Run this
script to regenerate them, or to pull the optional extra benchmarks
(kin8nm, wine quality, cardiotocography), which need network access to
OpenML.

Usage: python scripts/fetch_datasets.py [--all] [--out data/]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(np.format_float_positional(v, unique=True, trim="-") for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path} ({len(rows)} rows)")


def write_schema(path: Path, target: str, task: str):
    path.write_text(json.dumps({"target": target, "task": task}, indent=1), encoding="utf-8")


def fetch_wisconsin(out: Path):
    from sklearn.datasets import load_breast_cancer

    d = load_breast_cancer()
    header = [n.replace(" ", "_") for n in d.feature_names] + ["malignant"]
    rows = [list(x) + [1.0 - float(t)] for x, t in zip(d.data, d.target)]
    write_csv(out / "wisconsin.csv", header, rows)
    write_schema(out / "wisconsin.schema.json", "malignant", "classification")


def fetch_openml_table(out: Path, name: str, version: int, filename: str, target: str, task: str,
                       binarize=None):
    from sklearn.datasets import fetch_openml

    bunch = fetch_openml(name=name, version=version, as_frame=True, parser="auto")
    frame = bunch.frame.select_dtypes(include=["number"]).copy()
    y = bunch.target
    if binarize is not None:
        y = y.map(binarize).astype(float)
    frame[target] = np.asarray(y, dtype=float)
    header = list(frame.columns)
    write_csv(out / filename, header, frame.to_numpy().tolist())
    write_schema(out / f"{Path(filename).stem}.schema.json", target, task)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data", help="output directory")
    parser.add_argument("--all", action="store_true",
                        help="also pull kin8nm, wine, and cardiotocography from OpenML")
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    fetch_wisconsin(out)
    try:
        fetch_openml_table(out, "boston", 1, "boston.csv", "medv", "regression")
    except Exception as exc:
        if (out / "boston.csv").exists():
            print(f"keeping the shipped boston.csv (fetch failed: {exc})")
        else:
            print(f"boston fetch failed and no local copy exists: {exc}", file=sys.stderr)
            return 1
    if args.all:
        fetch_openml_table(out, "kin8nm", 1, "kin8nm.csv", "y", "regression")
        fetch_openml_table(out, "wine-quality-white", 1, "wine.csv", "quality", "regression")
        fetch_openml_table(out, "cardiotocography", 2, "ctg.csv", "Class", "classification",
                           binarize=lambda v: 0.0 if str(v) == "1" else 1.0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
