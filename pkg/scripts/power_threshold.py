"""Scan the meter temperature for the onset of a positive power peak.

With W_meas = b tau^2 k_B Theta / 2 the bound Pi_tilde is negative at every
tau for warm meters; this prints, per T_M, the best Pi_tilde over tau and
where it sits, plus the coldest-to-warmest T_M that still gives a positive
interior peak.

    python3 scripts/power_threshold.py [--delta-E-rel 1] [--T-S 300]
"""

import argparse

import numpy as np

from qiengine.engine import EngineParams
from qiengine.metrics import NoInteriorMaximum, argmax_scan, evaluate_cycle


def peak(params, taus):
    f = lambda t: evaluate_cycle(params, t).Pi_tilde  # noqa: E731
    try:
        return (*argmax_scan(f, taus), True)
    except NoInteriorMaximum as e:
        return e.tau, e.value, False


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--delta-E-rel", type=float, default=1.0)
    ap.add_argument("--T-S", type=float, default=300.0)
    ap.add_argument("--T-M", type=float, nargs="+", default=[1, 5, 10, 20, 30, 50, 60, 70, 80, 100, 200, 300])
    args = ap.parse_args(argv)

    taus = np.geomspace(0.05, 100.0, 80)
    print("T_M_K,tau_peak,Pi_tilde_peak,interior")
    warmest = None
    for T_M in sorted(args.T_M):
        t, v, interior = peak(EngineParams.relative(args.delta_E_rel, args.T_S, T_M), taus)
        print(f"{T_M:g},{t:.6g},{v:.6g},{int(interior)}")
        if interior and v > 0:
            warmest = T_M
    print(f"# warmest meter with a positive interior power peak: {warmest}")


if __name__ == "__main__":
    main()
