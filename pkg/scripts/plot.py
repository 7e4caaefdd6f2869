"""Plot summary CSVs written by the other scripts (mean gap with error bars against the bound)."""

import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {key: [float(r[key]) for r in rows] for key in ("k", "mean_gap", "stderr", "bound")}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", nargs="+")
    ap.add_argument("--out", default="runs/gaps.png")
    ap.add_argument("--linear-y", action="store_true", help="linear instead of log y axis")
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(6, 4))
    for path in args.csv:
        d = read(path)
        line = ax.errorbar(d["k"], d["mean_gap"], yerr=d["stderr"], marker="o", ms=3, label=path)
        ax.plot(d["k"], d["bound"], ls="--", color=line[0].get_color())
    ax.set_xscale("log")
    if not args.linear_y:
        ax.set_yscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("mean gap (dashed: bound)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
