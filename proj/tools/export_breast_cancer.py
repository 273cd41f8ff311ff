"""Write scikit-learn's breast cancer data as a CSV the fpml CLI can read.

    python3 tools/export_breast_cancer.py breast_cancer.csv

Columns are the 30 features followed by the integer label.
"""

import csv
import sys

from sklearn.datasets import load_breast_cancer


def main() -> None:
    out_path = sys.argv[1] if len(sys.argv) > 1 else "breast_cancer.csv"
    data = load_breast_cancer()
    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([name.replace(" ", "_") for name in data.feature_names] + ["label"])
        for row, label in zip(data.data, data.target):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
    print(f"wrote {len(data.target)} rows to {out_path}")


if __name__ == "__main__":
    main()
