"""Plot the regenerated figure tables (needs matplotlib, not a package dependency).

    python3 scripts/regenerate_figures.py --out figure_data
    python3 scripts/plot_figures.py figure_data
"""

import pathlib
import sys

import numpy as np

PANELS = {
    "fig2b": ("I_nats", "W_meas_meV"),
    "fig3": ("Pi_tilde",),
    "fig4": ("Y",),
    "fig5": ("eta_erg", "eta_max"),
}


def load(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    names = lines[0].split(",")
    rows = [[np.nan if x == "NA" else float(x) for x in ln.split(",")] for ln in lines[1:]]
    return names, np.array(rows)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    src = pathlib.Path(argv[0] if argv else "figure_data")
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib is not installed", file=sys.stderr)
        return 1
    for fig, cols in PANELS.items():
        path = src / f"{fig}.csv"
        if not path.exists():
            continue
        names, data = load(path)
        fig_, ax = plt.subplots(figsize=(5, 3.5))
        for oid in np.unique(data[:, 0]):
            blk = data[data[:, 0] == oid]
            for c in cols:
                style = "--" if c == "W_meas_meV" or c == "eta_max" else "-"
                ax.plot(blk[:, 1], blk[:, names.index(c)], style, label=f"{c} [{int(oid)}]")
        ax.set_xscale("log")
        ax.set_xlabel("tau")
        ax.legend(fontsize=7)
        fig_.tight_layout()
        fig_.savefig(src / f"{fig}.png", dpi=150)
        print(f"wrote {src / f'{fig}.png'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
