"""Closed-form model of the two-level information engine.

A two-level system (gap ``delta_E``, bath temperature ``T_S``) is measured by
a free-particle meter (temperature ``T_M``) through the coupling
``g x |1><1|`` switched on for a time ``t_m``. Every quantity below depends
on ``g`` and ``t_m`` only through the dimensionless time
``tau = g t_m / sqrt(k_B Theta)``, with the reference scale
``k_B Theta = 1 meV``.

Units: energies in meV, temperatures in K, meter momentum in sqrt(meV),
information in nats (I / k_B).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (
    InvalidInput,
    QuadratureConfig,
    binary_entropy,
    integrate,
    std_normal_cdf,
)

K_B = 0.08617333262145  # meV / K
K_THETA = 1.0  # meV, reference energy scale for tau


class DegenerateThreshold(ValueError):
    pass


class DegenerateTemperature(ValueError):
    pass


class IdentityViolation(ArithmeticError):
    """W_erg + W_th differs from k_B T_S I beyond tolerance."""


@dataclass(frozen=True)
class EngineParams:
    delta_E: float  # meV
    T_S: float  # K
    T_M: float  # K

    def __post_init__(self):
        for name in ("delta_E", "T_S", "T_M"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidInput(f"{name} must be a finite positive number, got {v!r}")

    @classmethod
    def relative(cls, delta_E_rel: float, T_S: float, T_M: float) -> "EngineParams":
        """Build with the gap given as a multiple of k_B T_S."""
        return cls(delta_E=delta_E_rel * K_B * T_S, T_S=T_S, T_M=T_M)

    @property
    def beta_gap(self) -> float:
        """delta_E / (k_B T_S) = ln(a/b)."""
        return self.delta_E / (K_B * self.T_S)

    @property
    def sigma2(self) -> float:
        """Meter momentum variance k_B T_M (meV)."""
        return K_B * self.T_M

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class ThermalTLS:
    a: float
    b: float
    log_a: float
    log_b: float


def thermal_populations(params: EngineParams) -> ThermalTLS:
    x = params.beta_gap
    # b = 1/(1 + e^x) evaluated without overflow; a = 1 - b keeps a + b == 1
    if x > 0:
        e = math.exp(-x)
        b = e / (1.0 + e)
    else:
        b = 1.0 / (1.0 + math.exp(x))
    log1p_e = math.log1p(math.exp(-x))
    return ThermalTLS(a=1.0 - b, b=b, log_a=-log1p_e, log_b=-x - log1p_e)


def _shift(tau: float) -> float:
    if not (math.isfinite(tau) and tau >= 0):
        raise InvalidInput(f"tau must be finite and >= 0, got {tau!r}")
    return tau * math.sqrt(K_THETA)


@dataclass(frozen=True)
class OutcomeDistribution:
    tau: float
    p: float | np.ndarray
    P0_joint: float | np.ndarray
    P1_joint: float | np.ndarray
    Q: float | np.ndarray
    P0_cond: float | np.ndarray
    P1_cond: float | np.ndarray


class _Branches:
    """Log-space pieces of the two Gaussian branches at momenta ``p``.

    ``l0, l1`` are ln(P_i(t|p) / P_i(0)), i.e. log conditional minus log
    prior; they are exact at tau -> 0 where both vanish.
    """

    def __init__(self, params: EngineParams, tau: float, p):
        tls = thermal_populations(params)
        s = _shift(tau)
        p = np.asarray(p, dtype=float)
        s2 = params.sigma2
        self.tls = tls
        self.lognorm = -0.5 * math.log(2.0 * math.pi * s2)
        self.q0 = -p * p / (2.0 * s2)
        self.q1 = -(p + s) ** 2 / (2.0 * s2)
        # d = q1 - q0, written to avoid cancellation at small shift
        d = -s * (2.0 * p + s) / (2.0 * s2)
        with np.errstate(over="ignore", invalid="ignore"):
            small = np.log1p(tls.b * np.expm1(np.minimum(d, 1.0)))
            large = np.logaddexp(tls.log_a, tls.log_b + d)
        self.l0 = -np.where(np.abs(d) < 1.0, small, large)
        self.l1 = d + self.l0
        self.d = d

    @property
    def log_joint0(self):
        return self.tls.log_a + self.q0 + self.lognorm

    @property
    def log_joint1(self):
        return self.tls.log_b + self.q1 + self.lognorm

    @property
    def log_cond0(self):
        return self.tls.log_a + self.l0

    @property
    def log_cond1(self):
        return self.tls.log_b + self.l1


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def outcome_distribution(params: EngineParams, tau: float, p) -> OutcomeDistribution:
    """Joint, marginal and conditional outcome densities at meter momentum ``p``.

    ``p`` may be a scalar or an array.
    """
    br = _Branches(params, tau, p)
    P0j = np.exp(br.log_joint0)
    P1j = np.exp(br.log_joint1)
    lc0, lc1 = br.log_cond0, br.log_cond1
    # normalize by exponentiating the smaller conditional only
    c_small = np.exp(np.minimum(lc0, lc1))
    P0c = np.where(lc0 <= lc1, c_small, 1.0 - c_small)
    P1c = np.where(lc0 <= lc1, 1.0 - c_small, c_small)
    return OutcomeDistribution(
        tau=tau,
        p=_scalar_or_array(np.asarray(p, dtype=float), p),
        P0_joint=_scalar_or_array(P0j, p),
        P1_joint=_scalar_or_array(P1j, p),
        Q=_scalar_or_array(P0j + P1j, p),
        P0_cond=_scalar_or_array(P0c, p),
        P1_cond=_scalar_or_array(P1c, p),
    )


def integration_window(params: EngineParams, tau: float, cfg: QuadratureConfig) -> tuple[float, float]:
    s = _shift(tau)
    w = cfg.window_sigmas * params.sigma
    return -s - w, w


def _breakpoints(params: EngineParams, tau: float) -> list[float]:
    s = _shift(tau)
    pts = [0.0, -s, -0.5 * s]
    if tau > 0:
        pts.append(threshold_p_prime(params, tau))
    return pts


def mutual_information(params: EngineParams, tau: float, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Information gain I(tau)/k_B in nats.

    Integrates sum_i P_i(p) ln[P_i(t|p) / P_i(0)], which equals S(0) - S(t)
    because the prior conditionals (a, b) do not depend on p.
    """
    _shift(tau)
    if tau == 0:
        return 0.0

    def integrand(p):
        br = _Branches(params, tau, p)
        return np.exp(br.log_joint0) * br.l0 + np.exp(br.log_joint1) * br.l1

    lo, hi = integration_window(params, tau, cfg)
    val = integrate(integrand, lo, hi, cfg, points=_breakpoints(params, tau))
    tls = thermal_populations(params)
    h = binary_entropy(tls.a, tls.b)
    slack = max(cfg.abs_tol, cfg.rel_tol * abs(val))
    if -slack <= val < 0:
        val = 0.0
    elif h < val <= h + slack:
        val = h
    return val


def information_limit(params: EngineParams) -> float:
    """I(tau -> inf) = -(a ln a + b ln b) nats."""
    tls = thermal_populations(params)
    return binary_entropy(tls.a, tls.b)


def measurement_cost(params: EngineParams, tau: float) -> float:
    """Switching work b (g t_m)^2 / 2 = b tau^2 k_B Theta / 2, in meV."""
    s = _shift(tau)
    return thermal_populations(params).b * s * s / 2.0


def threshold_p_prime(params: EngineParams, tau: float) -> float:
    """Meter outcome p' at which both conditionals equal 1/2; inverted for p < p'."""
    s = _shift(tau)
    if s == 0:
        raise DegenerateThreshold("no crossing of the conditionals at tau = 0")
    return -(params.sigma2 / s) * params.beta_gap - 0.5 * s


def ergotropy_outcome(params: EngineParams, tau: float, p):
    """Ergotropy of the conditional state, Theta(0) = 0 at the crossing."""
    dist = outcome_distribution(params, tau, p)
    diff = np.asarray(dist.P1_cond - dist.P0_cond)
    out = params.delta_E * np.where(diff > 0, diff, 0.0)
    return _scalar_or_array(out, p)


def ergotropy_closed_form(params: EngineParams, tau: float) -> float:
    s = _shift(tau)
    if s == 0:
        return 0.0
    tls = thermal_populations(params)
    pp = threshold_p_prime(params, tau)
    sig = params.sigma
    val = params.delta_E * (tls.b * std_normal_cdf((pp + s) / sig) - tls.a * std_normal_cdf(pp / sig))
    return max(val, 0.0)


def ergotropy_quadrature(params: EngineParams, tau: float, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """delta_E * integral_{-inf}^{p'} (P1_joint - P0_joint) dp by quadrature."""
    s = _shift(tau)
    if s == 0:
        return 0.0
    pp = threshold_p_prime(params, tau)
    lo, _ = integration_window(params, tau, cfg)
    if pp <= lo:
        return 0.0

    def integrand(p):
        br = _Branches(params, tau, p)
        return np.exp(br.log_joint1) - np.exp(br.log_joint0)

    pts = [x for x in (-s, 0.0) if x < pp]
    return params.delta_E * integrate(integrand, lo, pp, cfg, points=pts)


def ergotropy_avg(params: EngineParams, tau: float, cfg: QuadratureConfig = QuadratureConfig(), check: bool = True) -> float:
    """Outcome-averaged ergotropy W_erg(tau) in meV (closed form via normal CDFs).

    With ``check`` the closed form is compared against direct quadrature and
    an ``IdentityViolation`` is raised if they differ by more than 1e-9
    relative (with an absolute floor set by the quadrature tolerance).
    """
    closed = ergotropy_closed_form(params, tau)
    if check and tau > 0:
        quad = ergotropy_quadrature(params, tau, cfg)
        floor = 10.0 * cfg.abs_tol * params.delta_E
        if abs(quad - closed) > max(1e-9 * abs(closed), floor):
            raise IdentityViolation(
                f"ergotropy closed form {closed!r} vs quadrature {quad!r} at tau={tau}"
            )
    return closed


def ergotropy_limit(params: EngineParams) -> float:
    """W_erg(tau -> inf) = b delta_E."""
    return thermal_populations(params).b * params.delta_E


def outcome_temperature(params: EngineParams, tau: float, p: float) -> float:
    """Temperature of the passive state left after extracting the ergotropy at outcome p."""
    dist = outcome_distribution(params, tau, float(p))
    if abs(dist.P1_cond - dist.P0_cond) < 1e-14:
        raise DegenerateTemperature(f"equal populations at p={p}: temperature is infinite")
    br = _Branches(params, tau, float(p))
    log_ratio = float(br.log_cond1 - br.log_cond0)
    return (params.delta_E / K_B) / abs(log_ratio)


def heat_capacity(delta_E: float, T):
    """Two-level heat capacity in meV/K."""
    x = delta_E / (K_B * np.asarray(T, dtype=float))
    e = np.exp(-x)
    out = K_B * x * x * e / (1.0 + e) ** 2
    return _scalar_or_array(out, T)


def _swap_shift(br: _Branches, beta_gap: float):
    """Relative entropy of the passive post-extraction state w.r.t. (a, b), per outcome.

    Passive branch (P0 >= P1): P0 ln(P0/a) + P1 ln(P1/b).
    Inverted branch: populations are swapped by the extraction pulse, giving
    P0 ln(P0/b) + P1 ln(P1/a) = P0 (l0 + ln a/b) + P1 (l1 - ln a/b).
    """
    return np.where(br.log_cond1 > br.log_cond0, beta_gap, 0.0)


def thermal_work_outcome(params: EngineParams, tau: float, p):
    """Carnot rethermalization work for outcome p, in meV (closed form, regular at p')."""
    br = _Branches(params, tau, p)
    shift0 = _swap_shift(br, params.beta_gap)
    c0 = np.exp(br.log_cond0)
    c1 = np.exp(br.log_cond1)
    val = c0 * (br.l0 + shift0) + c1 * (br.l1 - shift0)
    out = K_B * params.T_S * np.maximum(val, 0.0)
    return _scalar_or_array(out, p)


def thermal_work_outcome_integral(params: EngineParams, tau: float, p: float, cfg: QuadratureConfig | None = None) -> float:
    """Cross-check route: integral_{T_p}^{T_S} C(T) (T_S/T - 1) dT by quadrature.

    Singular at p = p' (T_p infinite); callers must stay away from it.
    """
    if cfg is None:
        cfg = QuadratureConfig(abs_tol=1e-16, rel_tol=1e-12, max_subdivisions=2000)
    T_p = outcome_temperature(params, tau, p)
    T_S = params.T_S
    if T_p == T_S:
        return 0.0
    lo, hi = sorted((T_p, T_S))
    # geometric breakpoints: the integrand varies on a log-temperature scale
    n = max(1, int(math.ceil(math.log2(hi / lo))))
    pts = np.geomspace(lo, hi, n + 1)[1:-1]

    def integrand(T):
        return heat_capacity(params.delta_E, T) * (T_S / T - 1.0)

    val = integrate(integrand, lo, hi, cfg, points=pts)
    return val if T_p < T_S else -val


def thermal_work_avg(params: EngineParams, tau: float, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Outcome-averaged rethermalization work W_th(tau) in meV."""
    _shift(tau)
    if tau == 0:
        return 0.0
    beta_gap = params.beta_gap

    def integrand(p):
        br = _Branches(params, tau, p)
        shift0 = _swap_shift(br, beta_gap)
        return np.exp(br.log_joint0) * (br.l0 + shift0) + np.exp(br.log_joint1) * (br.l1 - shift0)

    lo, hi = integration_window(params, tau, cfg)
    val = integrate(integrand, lo, hi, cfg, points=_breakpoints(params, tau))
    return K_B * params.T_S * max(val, 0.0)


def thermal_work_limit(params: EngineParams) -> float:
    """W_th(tau -> inf) = k_B T_S H(a, b) - b delta_E."""
    return K_B * params.T_S * information_limit(params) - ergotropy_limit(params)


IDENTITY_RTOL = 1e-6
IDENTITY_FLOOR = 1e-12  # meV


def total_work(params: EngineParams, tau: float, cfg: QuadratureConfig = QuadratureConfig()) -> tuple[float, float]:
    """Return (W_erg + W_th, k_B T_S I); raise IdentityViolation if they disagree."""
    w_tot = ergotropy_avg(params, tau, cfg) + thermal_work_avg(params, tau, cfg)
    ts_i = K_B * params.T_S * mutual_information(params, tau, cfg)
    check_identity(w_tot, ts_i, tau)
    return w_tot, ts_i


def check_identity(w_tot: float, ts_i: float, tau: float = float("nan")) -> None:
    if abs(w_tot - ts_i) > IDENTITY_RTOL * max(ts_i, IDENTITY_FLOOR):
        raise IdentityViolation(f"W_tot={w_tot!r} != T_S I={ts_i!r} at tau={tau}")
