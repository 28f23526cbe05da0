"""Per-cycle figures of merit: yield, efficiency and the power upper bound."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import engine
from .engine import K_B, EngineParams
from .numerics import QuadratureConfig


class UndefinedEfficiency(ZeroDivisionError):
    pass


class UndefinedPower(ZeroDivisionError):
    pass


class NoInteriorMaximum(ValueError):
    """The scanned maximum sits on the grid boundary; ``tau`` and ``value`` carry it."""

    def __init__(self, tau: float, value: float):
        super().__init__(f"maximum {value!r} on grid boundary tau={tau!r}")
        self.tau = tau
        self.value = value


def yield_ratio(W_erg: float, TS_I: float) -> float:
    if TS_I < 0:
        raise ValueError(f"TS_I must be >= 0, got {TS_I}")
    if TS_I == 0:
        return 0.0
    return W_erg / TS_I


def efficiency(W_out: float, W_meas: float) -> float:
    """(W_out - W_meas) / (W_out + W_meas); the restoring heat equals W_out."""
    denom = W_out + W_meas
    if denom == 0:
        raise UndefinedEfficiency("W_out + W_meas = 0")
    return (W_out - W_meas) / denom


def power_bound(W_erg: float, W_meas: float, tau: float) -> float:
    """Dimensionless power bound (W_erg - W_meas) / (tau * 1 meV).

    The physical bound is Pi = Pi_tilde * g * sqrt(k_B Theta) for a chosen g.
    """
    if tau <= 0:
        raise UndefinedPower(f"power undefined at tau={tau}")
    return (W_erg - W_meas) / (tau * engine.K_THETA)


def eta_max_limit(params: EngineParams) -> float:
    """tau -> 0+ limit of eta_max, from I ~ a b tau^2 / (2 sigma^2) and W_meas = b tau^2 / 2."""
    r = engine.thermal_populations(params).a * params.T_S / params.T_M
    return (r - 1.0) / (r + 1.0)


def argmax_scan(f: Callable[[float], float], grid: Sequence[float], xtol: float = 1e-4) -> tuple[float, float]:
    """Grid maximum of ``f`` refined by golden-section search on its bracket.

    Raises NoInteriorMaximum when the grid maximum is an endpoint.
    """
    g = np.asarray(grid, dtype=float)
    if g.size < 3 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing with at least 3 points")
    vals = np.array([f(t) for t in g])
    i = int(np.argmax(vals))
    if i == 0 or i == g.size - 1:
        raise NoInteriorMaximum(float(g[i]), float(vals[i]))
    res = minimize_scalar(lambda t: -f(t), bracket=(g[i - 1], g[i], g[i + 1]), method="golden", tol=xtol)
    if -res.fun >= vals[i]:
        return float(res.x), float(-res.fun)
    return float(g[i]), float(vals[i])


@dataclass(frozen=True)
class CycleMetrics:
    tau: float
    I_nats: float
    W_meas: float
    W_erg: float
    W_th: float
    W_tot: float
    TS_I: float
    Y: float
    eta_erg: float | None
    eta_max: float | None
    Pi_tilde: float | None

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate_cycle(params: EngineParams, tau: float, cfg: QuadratureConfig = QuadratureConfig()) -> CycleMetrics:
    """All per-cycle metrics at one tau; undefined efficiencies/power are None."""
    I = engine.mutual_information(params, tau, cfg)
    W_meas = engine.measurement_cost(params, tau)
    W_erg = engine.ergotropy_avg(params, tau, cfg)
    W_th = engine.thermal_work_avg(params, tau, cfg)
    W_tot = W_erg + W_th
    TS_I = K_B * params.T_S * I
    engine.check_identity(W_tot, TS_I, tau)

    def maybe(fn, *args):
        try:
            return fn(*args)
        except ZeroDivisionError:
            return None

    eta_erg = maybe(efficiency, W_erg, W_meas)
    eta_max = maybe(efficiency, TS_I, W_meas)
    if tau == 0:
        # 0/0 limits; eta_max has an extrapolated value, see eta_max_limit
        eta_erg = eta_max = None
    return CycleMetrics(
        tau=tau,
        I_nats=I,
        W_meas=W_meas,
        W_erg=W_erg,
        W_th=W_th,
        W_tot=W_tot,
        TS_I=TS_I,
        Y=yield_ratio(W_erg, TS_I),
        eta_erg=eta_erg,
        eta_max=eta_max,
        Pi_tilde=maybe(power_bound, W_erg, W_meas, tau),
    )


def information_rate(params: EngineParams, tau: float, cfg: QuadratureConfig = QuadratureConfig(), rel_step: float = 1e-3) -> float:
    """Centered finite difference dI/dtau."""
    h = rel_step * max(tau, 1e-3)
    lo = max(tau - h, 0.0)
    hi = tau + h
    return (engine.mutual_information(params, hi, cfg) - engine.mutual_information(params, lo, cfg)) / (hi - lo)


def is_finite(x) -> bool:
    return x is not None and math.isfinite(x)
