"""Split-operator evolution of the joint system-meter state on a momentum grid.

Independent check of the closed forms in :mod:`qiengine.engine`: the meter
wavepacket |D> is evolved under p^2/2 on both system branches and under the
extra linear potential g x on the excited branch. Natural units hbar = 1,
k_B Theta = 1 meV, so with g = 1 the elapsed time equals tau numerically.

The linear-potential factor exp(-i g x dt) is applied in the position
representation (FFT), which translates the momentum amplitudes by -g dt
with band-limited interpolation when the shift is not a whole number of
grid cells. Nothing here calls into the engine closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .engine import K_B, EngineParams, thermal_populations
from .numerics import InvalidInput


class GridTooNarrow(ValueError):
    pass


class AliasingDetected(RuntimeError):
    pass


ALIAS_MASS = 1e-10
ALIAS_CELLS = 3
_TAIL_SIGMAS = 8.0


@dataclass(frozen=True)
class TrotterConfig:
    n_steps: int = 2000
    # None: smallest power of two (>= 1024) resolving both momentum and position extent
    n_grid: int | None = None
    # None: 8 sigma + tau_max + 5 sigma
    p_halfwidth: float | None = None
    tau_max: float = 10.0
    g: float = 1.0
    # "strang": half kinetic / potential / half kinetic; "lie": kinetic then potential
    splitting: str = "strang"

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 100:
            raise InvalidInput(f"n_steps must be an integer >= 100, got {self.n_steps}")
        if self.n_grid is not None:
            n = int(self.n_grid)
            if n != self.n_grid or n < 1024 or n & (n - 1):
                raise InvalidInput(f"n_grid must be a power of two >= 1024, got {self.n_grid}")
        if self.p_halfwidth is not None and not self.p_halfwidth > 0:
            raise InvalidInput(f"p_halfwidth must be > 0, got {self.p_halfwidth}")
        if not (math.isfinite(self.tau_max) and self.tau_max >= 0):
            raise InvalidInput(f"tau_max must be >= 0, got {self.tau_max}")
        if not (math.isfinite(self.g) and self.g >= 0):
            raise InvalidInput(f"g must be >= 0, got {self.g}")
        if self.splitting not in ("strang", "lie"):
            raise InvalidInput(f"splitting must be 'strang' or 'lie', got {self.splitting!r}")

    def halfwidth(self, sigma: float) -> float:
        if self.p_halfwidth is not None:
            return self.p_halfwidth
        return 13.0 * sigma + self.g * self.tau_max

    def grid_size(self, sigma: float) -> int:
        if self.n_grid is not None:
            return int(self.n_grid)
        L = self.halfwidth(sigma)
        t = self.tau_max
        # position extent of the excited branch: x0 + p0 t - g t^2 / 2, x0 ~ 1/(2 sigma)
        x_half = _TAIL_SIGMAS * (sigma * t + 0.5 / sigma) + 0.5 * self.g * t * t
        n = 1024
        while math.pi * n / (2.0 * L) < 1.05 * x_half:
            n *= 2
        return n


@dataclass(frozen=True)
class TrotterState:
    branch0: np.ndarray  # meter amplitude given system in |0>
    branch1: np.ndarray  # meter amplitude given system in |1>
    weights: tuple[float, float]
    p: np.ndarray
    elapsed: float
    g: float
    p2_initial: float

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    @property
    def x(self) -> np.ndarray:
        """Position samples matching ``np.fft.ifft`` ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.p.size, d=self.dp)


def meter_amplitude(p: np.ndarray, sigma2: float) -> np.ndarray:
    """<p|D> = (2 pi k_B T_M)^(-1/4) exp(-p^2 / 4 k_B T_M)."""
    return (2.0 * np.pi * sigma2) ** -0.25 * np.exp(-p * p / (4.0 * sigma2))


def initialize(params: EngineParams, cfg: TrotterConfig = TrotterConfig()) -> TrotterState:
    sigma2 = K_B * params.T_M
    sigma = math.sqrt(sigma2)
    L = cfg.halfwidth(sigma)
    n = cfg.grid_size(sigma)
    # |D(p)|^2 is N(0, sigma2): tail mass beyond |p| > L
    outside = math.erfc(L / (sigma * math.sqrt(2.0)))
    if outside > 1e-12:
        raise GridTooNarrow(f"initial meter mass {outside:.2e} lies outside |p| < {L}")
    p = -L + (2.0 * L / n) * np.arange(n)
    psi = meter_amplitude(p, sigma2).astype(complex)
    tls = thermal_populations(params)
    dp = 2.0 * L / n
    p2 = float(np.sum(p * p * np.abs(psi) ** 2) * dp)
    return TrotterState(
        branch0=psi,
        branch1=psi.copy(),
        weights=(tls.a, tls.b),
        p=p,
        elapsed=0.0,
        g=cfg.g,
        p2_initial=p2,
    )


class _Propagator:
    """Precomputed phase factors for a fixed dt."""

    def __init__(self, state: TrotterState, dt: float, splitting: str):
        if not dt > 0:
            raise InvalidInput(f"dt must be > 0, got {dt}")
        self.splitting = splitting
        frac = 0.5 if splitting == "strang" else 1.0
        self.kin = np.exp(-0.5j * state.p ** 2 * dt * frac)
        self.pot = np.exp(-1j * state.g * state.x * dt)
        self.dt = dt

    def _kick(self, psi: np.ndarray) -> np.ndarray:
        c = np.fft.ifft(psi)
        _check_edges(c, "position")
        return np.fft.fft(c * self.pot)

    def __call__(self, state: TrotterState) -> TrotterState:
        b0 = state.branch0 * self.kin
        b1 = state.branch1 * self.kin
        if state.g != 0:
            b1 = self._kick(b1)
        if self.splitting == "strang":
            b0 = b0 * self.kin
            b1 = b1 * self.kin
        _check_edges(b1, "momentum")
        return replace(state, branch0=b0, branch1=b1, elapsed=state.elapsed + self.dt)


def _check_edges(amp: np.ndarray, where: str) -> None:
    w = np.abs(amp) ** 2
    total = w.sum()
    k = ALIAS_CELLS
    edge = w[:k].sum() + w[-k:].sum()
    if where == "position":
        # ifft ordering puts the position-grid edges around index n/2
        m = amp.size // 2
        edge = w[m - k : m + k].sum()
    if edge > ALIAS_MASS * total:
        raise AliasingDetected(f"{edge / total:.2e} of the probability reached the {where}-grid boundary")


def step(state: TrotterState, dt: float, splitting: str = "strang") -> TrotterState:
    """Advance one Trotter step of length ``dt``.

    Branch 0 only acquires the free kinetic phase; branch 1 additionally
    receives the momentum translation -g dt.
    """
    return _Propagator(state, dt, splitting)(state)


def evolve(state: TrotterState, t: float, n_steps: int, splitting: str = "strang") -> TrotterState:
    """Advance ``state`` by total time ``t`` in ``n_steps`` equal steps."""
    if t == 0:
        return state
    prop = _Propagator(state, t / n_steps, splitting)
    for _ in range(n_steps):
        state = prop(state)
    return state


def run(params: EngineParams, tau: float, cfg: TrotterConfig = TrotterConfig()) -> TrotterState:
    """Initialize and evolve to t = tau (natural units, g t = g tau)."""
    if tau > cfg.tau_max:
        cfg = replace(cfg, tau_max=tau)
    return evolve(initialize(params, cfg), tau, cfg.n_steps, cfg.splitting)


def norms(state: TrotterState) -> tuple[float, float]:
    dp = state.dp
    return (
        float(np.sum(np.abs(state.branch0) ** 2) * dp),
        float(np.sum(np.abs(state.branch1) ** 2) * dp),
    )


def joint_momentum_distribution(state: TrotterState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a, b = state.weights
    P0 = a * np.abs(state.branch0) ** 2
    P1 = b * np.abs(state.branch1) ** 2
    return P0, P1, P0 + P1


def mean_momentum(state: TrotterState) -> float:
    _, _, Q = joint_momentum_distribution(state)
    return float(np.sum(state.p * Q) * state.dp)


def meter_energy_change(state: TrotterState) -> float:
    """(<p^2>_t - <p^2>_0) / 2 over both branches."""
    _, _, Q = joint_momentum_distribution(state)
    return 0.5 * (float(np.sum(state.p ** 2 * Q) * state.dp) - state.p2_initial)


def position_mean(amp: np.ndarray, x: np.ndarray) -> float:
    w = np.abs(np.fft.ifft(amp)) ** 2
    return float(np.sum(x * w) / np.sum(w))


def measurement_cost_endpoint(state: TrotterState) -> float:
    """tr[rho(0) V] - tr[rho(t) V] = -g b <x>_1(t), <x> read off the position representation."""
    _, b = state.weights
    return -state.g * b * position_mean(state.branch1, state.x)
