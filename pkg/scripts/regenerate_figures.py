"""Regenerate the figure data tables from the configs in scripts/configs.

    python3 scripts/regenerate_figures.py [--out DIR] [--golden]

With --golden the tables are written to tests/golden (only after
``qie verify`` passes).
"""

import argparse
import pathlib
import sys

from qiengine import cli

HERE = pathlib.Path(__file__).resolve().parent
CONFIGS = HERE / "configs"
GOLDEN = HERE.parent / "tests" / "golden"
# figures whose tables are checked in as regression references
GOLDEN_FIGS = ("fig2b", "fig4", "fig5")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="figure_data")
    ap.add_argument("--golden", action="store_true", help="write the golden tables into tests/golden")
    args = ap.parse_args(argv)

    if args.golden:
        if cli.main(["verify"]) != 0:
            print("verification failed; golden files not written", file=sys.stderr)
            return 1
        out, names = GOLDEN, GOLDEN_FIGS
    else:
        out, names = pathlib.Path(args.out), sorted(p.stem for p in CONFIGS.glob("*.cfg"))
    out.mkdir(parents=True, exist_ok=True)
    for name in names:
        dest = out / f"{name}.csv"
        rc = cli.main(["sweep", "--config", str(CONFIGS / f"{name}.cfg"), "--out", str(dest)])
        if rc:
            return rc
        print(f"wrote {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
