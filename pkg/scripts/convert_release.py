#!/usr/bin/env python3
"""Convert a tabular user-feature/edge release into homnet TSV inputs.

Writes ``features.tsv`` (user + the 12 feature columns), ``edges.tsv``,
``id_map.tsv`` (original id -> dense index) and, when profile columns are
given, ``artist_nmf_W.tsv``. Point ``HOMNET_REAL_DATA`` at the output
directory to enable the real-dataset acceptance check.

Example::

    convert_release.py --users users.csv --edges edges.csv --id-column user_id \\
        --map M_G=mainstreaminess_global --profile-prefix artist_profile_ -o real/
"""

import argparse
import csv
from pathlib import Path

from homnet.features import FEATURES


def sniff_reader(path):
    fh = open(path, newline="", encoding="utf-8")
    sample = fh.read(4096)
    fh.seek(0)
    dialect = csv.Sniffer().sniff(sample, delimiters=",\t;")
    return fh, csv.DictReader(fh, dialect=dialect)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", required=True, help="per-user feature table (csv/tsv with header)")
    ap.add_argument("--edges", required=True, help="edge table, two id columns, header optional")
    ap.add_argument("--id-column", default="user_id")
    ap.add_argument("--map", action="append", default=[], metavar="FEATURE=COLUMN",
                    help="source column for a feature when names differ")
    ap.add_argument("--profile-prefix", help="columns starting with this form the factor rows")
    ap.add_argument("-o", "--out", required=True)
    args = ap.parse_args(argv)

    source = {k: k for k in FEATURES}
    for item in args.map:
        feat, col = item.split("=", 1)
        if feat not in source:
            ap.error(f"unknown feature {feat}")
        source[feat] = col

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fh, reader = sniff_reader(args.users)
    with fh:
        rows = list(reader)
    missing = [c for c in [args.id_column, *source.values()] if c not in reader.fieldnames]
    if missing:
        ap.error(f"{args.users} lacks columns {missing}")
    index = {r[args.id_column]: i for i, r in enumerate(rows)}
    profile_cols = sorted((c for c in reader.fieldnames if args.profile_prefix and c.startswith(args.profile_prefix)),
                          key=lambda c: int("".join(ch for ch in c if ch.isdigit()) or 0))

    with open(out / "features.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write("\t".join(["user", *FEATURES]) + "\n")
        for i, r in enumerate(rows):
            f.write("\t".join([str(i), *(repr(float(r[source[k]])) for k in FEATURES)]) + "\n")
    with open(out / "id_map.tsv", "w", encoding="utf-8", newline="\n") as f:
        for key, i in index.items():
            f.write(f"{key}\t{i}\n")
    if profile_cols:
        with open(out / "artist_nmf_W.tsv", "w", encoding="utf-8", newline="\n") as f:
            for r in rows:
                f.write("\t".join(repr(float(r[c])) for c in profile_cols) + "\n")

    kept = dropped = 0
    with open(args.edges, newline="", encoding="utf-8") as src, \
            open(out / "edges.tsv", "w", encoding="utf-8", newline="\n") as dst:
        sample = src.read(4096)
        src.seek(0)
        for rec in csv.reader(src, csv.Sniffer().sniff(sample, delimiters=",\t; ")):
            if len(rec) < 2:
                continue
            a, b = index.get(rec[0].strip()), index.get(rec[1].strip())
            if a is None or b is None:
                dropped += 1  # header row or users without features
                continue
            dst.write(f"{a}\t{b}\n")
            kept += 1
    print(f"{len(rows)} users, {kept} edges written, {dropped} edge rows dropped, "
          f"{len(profile_cols)} profile columns")


if __name__ == "__main__":
    main()
