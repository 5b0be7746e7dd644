#!/usr/bin/env python3
"""Convert a Jester ratings sheet (saved as CSV) to CSV-COO for `llfmc --format csv`.

Each input row is one user: a leading count of rated jokes followed by one
column per joke, with 99 marking "not rated". Those cells are dropped rather
than kept as ratings. Output rows are `i,j,value` with 0-based user and joke
indices in file order.

    python3 scripts/jester_to_csv_coo.py jester-data-1.csv jester1.csv
"""

import argparse
import csv
import sys

UNRATED = 99.0


def convert(src, dst, has_count):
    writer = csv.writer(dst, lineterminator="\n")
    writer.writerow(["i", "j", "value"])
    kept = dropped = 0
    for i, row in enumerate(csv.reader(src)):
        cells = row[1:] if has_count else row
        for j, cell in enumerate(cells):
            cell = cell.strip()
            if not cell:
                continue
            value = float(cell)
            if value == UNRATED:
                dropped += 1
                continue
            writer.writerow([i, j, repr(value)])
            kept += 1
    return kept, dropped


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--no-count-column", action="store_true",
                   help="rows hold only ratings, without the leading count")
    a = p.parse_args()
    with open(a.input, newline="") as src, open(a.output, "w", newline="") as dst:
        kept, dropped = convert(src, dst, not a.no_count_column)
    print(f"{kept} ratings written, {dropped} unrated cells dropped", file=sys.stderr)


if __name__ == "__main__":
    main()
