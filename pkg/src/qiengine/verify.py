"""Oracle verification suite: Trotter evolution and closed-form cross-checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Iterator

import numpy as np

from . import engine, trotter
from .engine import EngineParams
from .numerics import QuadratureConfig

DIST_TOL = 1e-8
MEAN_P_TOL = 1e-8
ENERGY_RTOL = 1e-7
ENERGY_FLOOR = 1e-12
# absolute slack for meter energies: roundoff in <p^2> scales with sigma^2
ENERGY_ATOL_SIGMA2 = 1e-10
CONVERGENCE_RTOL = 1e-6
NORM_TOL = 1e-10
THERMAL_WORK_RTOL = 1e-8


@dataclass(frozen=True)
class Check:
    name: str
    label: str
    deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.deviation <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name:<22} {self.label:<40} deviation={self.deviation:.3e} tol={self.tol:.1e}"


def _rel(x: float, y: float, floor: float = ENERGY_FLOOR) -> float:
    return abs(x - y) / max(abs(x), abs(y), floor)


def _close(x: float, y: float, slack: float) -> float:
    return abs(x - y) / (max(abs(x), abs(y)) + slack)


def label(params: EngineParams, tau: float, g: float = 1.0) -> str:
    s = f"T_S={params.T_S:g} T_M={params.T_M:g} dE={params.delta_E:.6g} tau={tau:g}"
    return s if g == 1.0 else s + f" g={g:g}"


def oracle_checks(params: EngineParams, tau: float, cfg: trotter.TrotterConfig = trotter.TrotterConfig()) -> list[Check]:
    """Distribution, mean momentum, norm and the three energy routes at one tau."""
    st = trotter.run(params, tau, cfg)
    g = cfg.g
    kick = g * st.elapsed  # momentum shift g t; equals tau when g = 1
    lab = label(params, tau, g)
    b = st.weights[1]

    P0, P1, _ = trotter.joint_momentum_distribution(st)
    ana = engine.outcome_distribution(params, kick, st.p)
    sup = max(np.max(np.abs(P0 - ana.P0_joint)), np.max(np.abs(P1 - ana.P1_joint)))
    n0, n1 = trotter.norms(st)
    init = trotter.norms(trotter.initialize(params, replace(cfg, tau_max=max(cfg.tau_max, tau))))

    analytic = b * kick * kick / 2.0
    kinetic = trotter.meter_energy_change(st)
    endpoint = trotter.measurement_cost_endpoint(st)
    # isclose form |x - y| <= rtol max(|x|, |y|) + atol, reported as a relative deviation
    fl = max(ENERGY_FLOOR, ENERGY_ATOL_SIGMA2 * params.sigma2 / ENERGY_RTOL)
    energy_dev = max(_close(analytic, kinetic, fl), _close(analytic, endpoint, fl), _close(kinetic, endpoint, fl))
    closed = engine.measurement_cost(params, kick)
    return [
        Check("distribution", lab, float(sup), DIST_TOL),
        Check("mean_momentum", lab, abs(trotter.mean_momentum(st) + b * kick), MEAN_P_TOL),
        Check("unitarity", lab, max(abs(n0 - init[0]), abs(n1 - init[1])), NORM_TOL),
        Check("energy_three_way", lab, energy_dev, ENERGY_RTOL),
        Check("energy_vs_engine", lab, _close(closed, kinetic, fl), ENERGY_RTOL),
    ]


def convergence_check(params: EngineParams, tau: float, cfg: trotter.TrotterConfig = trotter.TrotterConfig()) -> Check:
    """Endpoint measurement cost at n_steps versus n_steps // 2."""
    cfg = replace(cfg, tau_max=max(cfg.tau_max, tau))
    st0 = trotter.initialize(params, cfg)
    full = trotter.measurement_cost_endpoint(trotter.evolve(st0, tau, cfg.n_steps, cfg.splitting))
    half = trotter.measurement_cost_endpoint(trotter.evolve(st0, tau, cfg.n_steps // 2, cfg.splitting))
    return Check(
        "trotter_convergence",
        label(params, tau, cfg.g) + f" N={cfg.n_steps}",
        _rel(full, half),
        CONVERGENCE_RTOL,
    )


def thermal_work_samples(params: EngineParams, taus: Iterable[float], n: int = 20, seed: int = 20240) -> list[tuple[float, float]]:
    """Deterministic (tau, p) sample points within 4 sigma of the crossing p'.

    Points closer than 1e-6 sigma to p' are redrawn (the temperature integral
    is singular there).
    """
    taus = [t for t in taus if t > 0]
    if not taus:
        return []
    rng = np.random.default_rng(seed)
    sig = params.sigma
    out = []
    while len(out) < n:
        tau = float(taus[int(rng.integers(len(taus)))])
        pp = engine.threshold_p_prime(params, tau)
        p = pp + sig * float(rng.uniform(-4.0, 4.0))
        if abs(p - pp) >= 1e-6 * sig:
            out.append((tau, p))
    return out


def thermal_work_check(params: EngineParams, taus: Iterable[float], n: int = 20) -> Check:
    worst = 0.0
    for tau, p in thermal_work_samples(params, taus, n):
        closed = engine.thermal_work_outcome(params, tau, p)
        direct = engine.thermal_work_outcome_integral(params, tau, p)
        worst = max(worst, _rel(closed, direct, floor=1e-300))
    return Check("thermal_work_closed", label(params, max(taus)) + f" n={n}", worst, THERMAL_WORK_RTOL)


def identity_check(params: EngineParams, tau: float, qcfg: QuadratureConfig = QuadratureConfig()) -> Check:
    w_tot = engine.ergotropy_avg(params, tau, qcfg) + engine.thermal_work_avg(params, tau, qcfg)
    ts_i = engine.K_B * params.T_S * engine.mutual_information(params, tau, qcfg)
    scale = max(ts_i, engine.IDENTITY_FLOOR)
    return Check("identity_W_tot_TS_I", label(params, tau), abs(w_tot - ts_i) / scale, engine.IDENTITY_RTOL)


def run_suite(
    points: Iterable[tuple[EngineParams, float]],
    tcfg: trotter.TrotterConfig = trotter.TrotterConfig(),
    qcfg: QuadratureConfig = QuadratureConfig(),
) -> Iterator[Check]:
    """All checks for (params, tau) points; convergence and W_th once per params set."""
    by_params: dict[EngineParams, list[float]] = {}
    for params, tau in points:
        by_params.setdefault(params, []).append(tau)
    for params, taus in by_params.items():
        for tau in taus:
            yield from oracle_checks(params, tau, tcfg)
            yield identity_check(params, tcfg.g * tau, qcfg)
        yield convergence_check(params, max(taus), tcfg)
        kicks = [tcfg.g * t for t in taus]
        if max(kicks) > 0:
            yield thermal_work_check(params, kicks)


def default_points() -> list[tuple[EngineParams, float]]:
    return [
        (EngineParams.relative(1.0, 300.0, T_M), tau)
        for T_M in (100.0, 300.0)
        for tau in (1.0, 5.0, 10.0)
    ]
