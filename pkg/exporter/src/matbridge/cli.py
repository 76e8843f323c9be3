"""Command line for the exporter.

    matbridge export --model est.pkl --train-csv train.csv --out model.json \
        --value-bits 8 --scale-shift 16

The training CSV holds raw (unquantized) feature columns with the label in
the last column; it is only used to recover the per-feature min/max vectors,
which must come from the same split the estimator was fitted on.
"""

import argparse
import csv
import pickle
import sys

from .export import (
    DEFAULT_ACC_BITS,
    DEFAULT_SCALE_SHIFT,
    DEFAULT_VALUE_BITS,
    ExportError,
    ExportJob,
    export_model,
    fit_ranges,
)


def _read_feature_rows(path):
    """Float feature rows from a CSV whose last column is the label."""
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, rec in enumerate(csv.reader(f)):
            if not rec:
                continue
            try:
                values = [float(x) for x in rec]
            except ValueError:
                if lineno == 0:
                    continue  # header row
                raise ExportError("non-numeric value on line %d of %s" % (lineno + 1, path))
            if len(values) < 2:
                raise ExportError("line %d of %s has no feature columns" % (lineno + 1, path))
            rows.append(values[:-1])
    if not rows:
        raise ExportError("no data rows in %s" % path)
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="matbridge",
        description="Export fitted scikit-learn classifiers to portable model files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="convert a pickled fitted estimator")
    p.add_argument("--model", required=True, help="pickle of a fitted classifier")
    p.add_argument(
        "--train-csv",
        required=True,
        help="raw training split (features..., label) for the min/max ranges",
    )
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--value-bits", type=int, default=DEFAULT_VALUE_BITS)
    p.add_argument("--scale-shift", type=int, default=DEFAULT_SCALE_SHIFT)
    p.add_argument("--acc-bits", type=int, default=DEFAULT_ACC_BITS)
    args = parser.parse_args(argv)

    try:
        with open(args.model, "rb") as f:
            estimator = pickle.load(f)
        mins, maxs = fit_ranges(_read_feature_rows(args.train_csv))
        job = ExportJob(
            estimator=estimator,
            mins=mins,
            maxs=maxs,
            value_bits=args.value_bits,
            scale_shift=args.scale_shift,
            acc_bits=args.acc_bits,
        )
        doc = export_model(job, args.out)
    except (ExportError, OSError, pickle.UnpicklingError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    print(
        "%s -> %s (%s, %d features, %d classes)"
        % (
            args.model,
            args.out,
            doc["model_type"],
            doc["quantization"]["feature_count"],
            doc["model"]["class_count"],
        )
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
