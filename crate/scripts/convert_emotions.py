#!/usr/bin/env python3
"""Convert a multi-label ARFF file (e.g. the emotions dataset) to the pacile CSV format.

Numeric attributes become feature columns. Binary nominal attributes
({0, 1} or {FALSE, TRUE}) become label columns label_0 ... label_{l-1} in
declaration order. A sidecar <name>.meta.json is written next to the CSV.

Usage:
    convert_emotions.py INPUT.arff[.gz] OUTPUT.csv [--name NAME]

Several input files (for example the train and test folds) may be given with
repeated --input; their rows are concatenated in the order given.
"""

import argparse
import csv
import gzip
import hashlib
import io
import json
import os
import re
import sys

TRUE_VALUES = {"1", "TRUE", "true", "True"}
FALSE_VALUES = {"0", "FALSE", "false", "False"}


def open_text(path):
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, encoding="utf-8")


def parse_arff(path):
    attributes = []  # (name, kind) with kind "numeric" or "label"
    rows = []
    in_data = False
    attr_re = re.compile(r"@attribute\s+('(?:[^']|\\')*'|\"[^\"]*\"|\S+)\s+(.+)$", re.IGNORECASE)
    with open_text(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if not in_data:
                low = line.lower()
                if low.startswith("@relation"):
                    continue
                if low.startswith("@attribute"):
                    m = attr_re.match(line)
                    if not m:
                        sys.exit(f"{path}:{lineno}: cannot parse attribute line")
                    name = m.group(1).strip("'\"")
                    kind = m.group(2).strip()
                    if kind.lower() in ("numeric", "real", "integer"):
                        attributes.append((name, "numeric"))
                    elif kind.startswith("{"):
                        values = {v.strip().strip("'\"") for v in kind.strip("{}").split(",")}
                        if values <= TRUE_VALUES | FALSE_VALUES and len(values) == 2:
                            attributes.append((name, "label"))
                        else:
                            sys.exit(f"{path}:{lineno}: nominal attribute {name!r} is not binary")
                    else:
                        sys.exit(f"{path}:{lineno}: unsupported attribute type {kind!r}")
                    continue
                if low.startswith("@data"):
                    in_data = True
                    continue
                sys.exit(f"{path}:{lineno}: unexpected header line")
            if line.startswith("{"):
                sys.exit(f"{path}:{lineno}: sparse ARFF rows are not supported")
            fields = [f.strip().strip("'\"") for f in line.split(",")]
            if len(fields) != len(attributes):
                sys.exit(f"{path}:{lineno}: expected {len(attributes)} fields, found {len(fields)}")
            rows.append((lineno, fields))
    return attributes, rows


def convert(inputs, output, name):
    header = None
    out_rows = []
    for path in inputs:
        attributes, rows = parse_arff(path)
        if header is None:
            header = attributes
        elif attributes != header:
            sys.exit(f"{path}: attributes differ from {inputs[0]}")
        for lineno, fields in rows:
            feats, labels = [], []
            for (attr, kind), value in zip(attributes, fields):
                if kind == "numeric":
                    try:
                        float(value)
                    except ValueError:
                        sys.exit(f"{path}:{lineno}: {attr}: {value!r} is not a number")
                    feats.append(value)
                elif value in TRUE_VALUES:
                    labels.append("1")
                elif value in FALSE_VALUES:
                    labels.append("0")
                else:
                    sys.exit(f"{path}:{lineno}: {attr}: {value!r} is not binary")
            out_rows.append(feats + labels)
    feature_names = [a for a, k in header if k == "numeric"]
    label_names = [a for a, k in header if k == "label"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(feature_names + [f"label_{k}" for k in range(len(label_names))])
    writer.writerows(out_rows)
    data = buf.getvalue().encode("utf-8")
    with open(output, "wb") as fh:
        fh.write(data)
    sidecar = {
        "name": name,
        "n_features": len(feature_names),
        "n_labels": len(label_names),
        "sha256": hashlib.sha256(data).hexdigest(),
    }
    stem = os.path.splitext(output)[0]
    with open(stem + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    print(f"wrote {len(out_rows)} rows, {len(feature_names)} features, labels:")
    for k, lab in enumerate(label_names):
        print(f"  label_{k} = {lab}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("input", nargs="?", help="ARFF file (optionally gzipped)")
    ap.add_argument("output", help="CSV file to write")
    ap.add_argument("--input", dest="extra", action="append", default=[], help="additional ARFF file to concatenate")
    ap.add_argument("--name", default="emotions")
    args = ap.parse_args()
    inputs = ([args.input] if args.input else []) + args.extra
    if not inputs:
        ap.error("no input files")
    convert(inputs, args.output, args.name)


if __name__ == "__main__":
    main()
