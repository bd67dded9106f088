"""Plot probability-vs-budget and support-vs-budget curves from the CSVs
written by run_student_grid.py.

Usage: python scripts/plot_sweeps.py [--indir results] [--out results/sweeps.png]
Requires matplotlib (install the `plots` extra).
"""

import argparse
import csv
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_cell(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    budgets = [float(r["budget"]) for r in rows]
    prob = [float(r["mean_validated_probability"]) for r in rows]
    eps = [float(r["mean_epsilon"]) for r in rows if r["mean_epsilon"]]
    gam = [float(r["mean_gamma"]) for r in rows if r["mean_gamma"]]
    return budgets, prob, eps, gam


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--indir", default="results")
    ap.add_argument("--out", default="results/sweeps.png")
    args = ap.parse_args()
    indir = pathlib.Path(args.indir)

    fig, axes = plt.subplots(1, 3, figsize=(15, 4))
    styles = {"logistic": "-", "svm": "--"}
    for path in sorted(indir.glob("*_hardline.csv")):
        name = path.stem.replace("_hardline", "")
        model, opt = name.split("_", 1)
        budgets, prob, eps, gam = read_cell(path)
        axes[0].plot(budgets, prob, styles[model], label=f"{model} {opt}")
        if eps:
            axes[1].plot(budgets, eps, styles[model], label=f"{model} {opt}")
        if gam:
            axes[2].plot(budgets, gam, styles[model], label=f"{model} {opt}")
    axes[0].set_xlabel("budget")
    axes[0].set_ylabel("mean validated probability")
    axes[1].set_xlabel("budget")
    axes[1].set_ylabel("mean neighborhood variance")
    axes[2].set_xlabel("budget")
    axes[2].set_ylabel("mean neighbor count")
    for ax in axes:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
