"""Plot metric curves from one or more run directories.

Usage: python scripts/plot_metrics.py RUN_DIR [RUN_DIR ...] --metric mmd2 --out curves.png

Needs matplotlib, which the package itself does not depend on.
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from asgan.metrics import read_metrics_csv  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("runs", nargs="+", help="directories holding seed_*/metrics.csv")
    ap.add_argument("--metric", default="mmd2")
    ap.add_argument("--out", default="curves.png")
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(6, 4))
    for run in args.runs:
        for i, path in enumerate(sorted(Path(run).glob("seed_*/metrics.csv"))):
            recs = read_metrics_csv(path.read_text())
            ax.plot([r.iter for r in recs], [getattr(r, args.metric) for r in recs],
                    color=f"C{args.runs.index(run)}", alpha=0.6, label=run if i == 0 else None)
    ax.set_xlabel("iteration")
    ax.set_ylabel(args.metric)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
