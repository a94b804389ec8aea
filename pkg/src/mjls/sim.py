"""Closed-loop simulation of the coupled jump systems and stability estimation.

The simulator advances both continuous states with fixed-step RK4 while the
two mode chains jump with per-step probability rate*dt, the rate matrix in
force being selected each step by the partner state's region.  Observations
are re-sampled per the configured policy, and the feedback in force is
frozen across each step.  Everything is driven by one seeded generator, so
a (model, bank, config, seed) tuple reproduces its trace bit for bit.

``estimate_stability`` runs independent seeded simulations and reports the
sample mean and standard error of the truncated energy functional
integral of |x(t)|^2, whose saturation across horizons is the practical
stand-in for the infinite-horizon stochastic stability criterion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, InvalidGenerator, NonFinite, NotStochastic
from .model import InterdependentModel, region_index
from .synthesis import ControllerBank, Scheme

__all__ = [
    "OnChange",
    "Periodic",
    "Zero",
    "DecayingSine",
    "SimConfig",
    "Trace",
    "MonteCarloReport",
    "step_mode",
    "sample_observation",
    "control_input",
    "simulate",
    "estimate_stability",
]

# Largest admissible dt * max diagonal jump rate; keeps the per-step jump
# probabilities in the small-increment regime the rate definition assumes.
JUMP_PROBABILITY_CAP = 0.1


@dataclass(frozen=True)
class OnChange:
    """Re-sample an observation whenever its mode or the region pair changes."""


@dataclass(frozen=True)
class Periodic:
    """Re-sample observations every ``period`` seconds (and at t = 0)."""

    period: float

    def __post_init__(self):
        if self.period <= 0.0:
            raise ValueError("observation period must be positive")


@dataclass(frozen=True)
class Zero:
    """No disturbance."""

    def value(self, t: float, system: int) -> float:
        return 0.0


@dataclass(frozen=True)
class DecayingSine:
    """w_k(t) = amplitude_k * exp(-decay t) * sin(frequency t); square-integrable."""

    amplitude1: tuple[float, ...]
    amplitude2: tuple[float, ...]
    decay: float
    frequency: float

    def __post_init__(self):
        object.__setattr__(self, "amplitude1", tuple(float(a) for a in self.amplitude1))
        object.__setattr__(self, "amplitude2", tuple(float(a) for a in self.amplitude2))
        if self.decay <= 0.0:
            raise ValueError("disturbance decay rate must be positive for square integrability")


@dataclass(frozen=True)
class SimConfig:
    """Fixed-step simulation settings."""

    dt: float
    horizon: float
    seed: int = 0
    obs_policy: OnChange | Periodic = OnChange()
    disturbance: Zero | DecayingSine = Zero()
    init_modes: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.horizon < 0.0:
            raise ValueError("horizon must be nonnegative")


@dataclass(frozen=True)
class Trace:
    """Per-step record of the closed loop; row n is the state of play at t[n]."""

    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    mode1: np.ndarray
    mode2: np.ndarray
    obs1: np.ndarray
    obs2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    region1: np.ndarray
    region2: np.ndarray

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class MonteCarloReport:
    """Sample statistics of the truncated energy functional over N runs."""

    runs: int
    horizon: float
    functional_per_run: tuple[float, ...]
    half_functional_per_run: tuple[float, ...]
    terminal_norms: tuple[float, ...]

    @property
    def mean(self) -> float:
        return math.fsum(self.functional_per_run) / self.runs

    @property
    def half_mean(self) -> float:
        return math.fsum(self.half_functional_per_run) / self.runs

    @property
    def stderr(self) -> float:
        if self.runs < 2:
            return 0.0
        mu = self.mean
        var = math.fsum((f - mu) ** 2 for f in self.functional_per_run) / (self.runs - 1)
        return math.sqrt(var / self.runs)

    @property
    def saturation(self) -> float:
        """Relative gap between the full- and half-horizon means."""
        mu = self.mean
        if mu == 0.0:
            return 0.0
        return abs(mu - self.half_mean) / mu


def step_mode(rng, i: int, rate_row, dt: float) -> int:
    """One jump-chain step: leave mode i with probability rate * dt per target.

    A single uniform draw is compared against the cumulative per-target jump
    probabilities; the leftover mass keeps the current mode.
    """
    row = np.asarray(rate_row, dtype=float)
    u = rng.random()
    acc = 0.0
    for j in range(len(row)):
        if j == i - 1:
            continue
        p = row[j] * dt
        if p < 0.0:
            raise InvalidGenerator(f"negative jump probability from rate {row[j]} at target {j + 1}")
        acc += p
        if u < acc:
            return j + 1
    if acc > 1.0:
        raise InvalidGenerator(f"per-step jump probability {acc:.3g} exceeds 1; reduce dt")
    return i


def sample_observation(rng, row) -> int:
    """Sample a 1-based observation index from one emission-matrix row."""
    r = np.asarray(row, dtype=float)
    u = rng.random()
    acc = 0.0
    for j in range(len(r)):
        if r[j] < 0.0:
            raise NotStochastic(f"negative emission probability {r[j]}")
        acc += r[j]
        if u < acc:
            return j + 1
    if acc < 1.0 - 1e-9:
        raise NotStochastic(f"emission row sums to {acc:.12g}, expected 1")
    return len(r)


def control_input(bank: ControllerBank, k: int, i_hat: int, m1: int, m2: int, x_k) -> np.ndarray:
    """Feedback u_k = G x_k for subsystem k under observation i_hat."""
    gain = bank.gain(k, i_hat, (m1, m2))
    return gain @ np.asarray(x_k, dtype=float)


def max_diagonal_rate(model: InterdependentModel) -> float:
    """Worst-case joint diagonal rate over all regions and mode pairs."""
    worst1 = max(float(np.max(np.abs(np.diag(g)))) for g in model.rates1.matrices)
    worst2 = max(float(np.max(np.abs(np.diag(g)))) for g in model.rates2.matrices)
    return worst1 + worst2


def check_dt(model: InterdependentModel, dt: float) -> None:
    worst = max_diagonal_rate(model)
    if dt * worst > JUMP_PROBABILITY_CAP:
        bound = JUMP_PROBABILITY_CAP / worst if worst > 0.0 else math.inf
        raise ValueError(
            f"dt={dt:g} violates the jump-probability cap: dt * {worst:g} > "
            f"{JUMP_PROBABILITY_CAP}; need dt <= {bound:g}"
        )


class _Feedback:
    """Caches closed-loop matrices keyed by (mode, observation, region pair)."""

    def __init__(self, model: InterdependentModel, bank: ControllerBank):
        self.model = model
        self.bank = bank
        self.scheme = bank.scheme
        self._cache: dict = {}
        self.n2 = model.sys2.mode_count

    def joint_obs(self, i1: int, i2: int) -> int:
        return (i1 - 1) * self.n2 + i2

    def gains(self, th1, th2, ob1, ob2, m1, m2):
        """(G1, G2) in force for the step; observation use depends on scheme."""
        if self.scheme is Scheme.DISTRIBUTED:
            key = (ob1, ob2, m1, m2)
            if key not in self._cache:
                g1 = self.bank.gain(1, ob1, (m1, m2))
                g2 = self.bank.gain(2, ob2, (m1, m2))
                self._cache[key] = (g1, g2)
            return self._cache[key]
        if self.scheme is Scheme.FULL_INFORMATION:
            idx = self.joint_obs(th1, th2)
        else:
            idx = self.joint_obs(ob1, ob2)
        key = ("joint", idx, m1, m2)
        if key not in self._cache:
            nu1 = self.model.sys1.input_dim
            nx1 = self.model.sys1.state_dim
            g = self.bank.gain(0, idx, (m1, m2))
            self._cache[key] = (g[:nu1, :nx1], g[nu1:, nx1:])
        return self._cache[key]

    def closed_loop(self, k: int, mode: int, gain) -> np.ndarray:
        key = ("cl", k, mode, id(gain))
        if key not in self._cache:
            sys = self.model.sys1 if k == 1 else self.model.sys2
            dyn = sys.dynamics(mode)
            self._cache[key] = dyn.a + dyn.b @ gain
        return self._cache[key]


def _rk4(a_cl: np.ndarray, c: np.ndarray | None, x: np.ndarray, h: float) -> np.ndarray:
    if c is None:
        k1 = a_cl @ x
        k2 = a_cl @ (x + (0.5 * h) * k1)
        k3 = a_cl @ (x + (0.5 * h) * k2)
        k4 = a_cl @ (x + h * k3)
    else:
        k1 = a_cl @ x + c
        k2 = a_cl @ (x + (0.5 * h) * k1) + c
        k3 = a_cl @ (x + (0.5 * h) * k2) + c
        k4 = a_cl @ (x + h * k3) + c
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(
    model: InterdependentModel,
    bank: ControllerBank,
    config: SimConfig,
    x1_0,
    x2_0,
) -> Trace:
    """Run one seeded closed-loop trajectory and record every step.

    Each iteration freezes the rates, gains and disturbance at the current
    step's values, advances both states one RK4 step, then samples the mode
    jumps (using the regions the step started from) and refreshes the
    observations per policy.  Bit-identical for identical inputs.
    """
    check_dt(model, config.dt)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    n_steps = int(round(config.horizon / config.dt)) if config.horizon > 0 else 0

    x1 = np.asarray(x1_0, dtype=float).copy()
    x2 = np.asarray(x2_0, dtype=float).copy()
    if x1.shape != (model.sys1.state_dim,) or x2.shape != (model.sys2.state_dim,):
        raise DimensionMismatch(
            f"initial states must have dimensions {model.sys1.state_dim} and {model.sys2.state_dim}"
        )

    th1, th2 = config.init_modes
    fb = _Feedback(model, bank)
    dt = config.dt
    dist = config.disturbance
    zero_w = isinstance(dist, Zero)
    periodic = isinstance(config.obs_policy, Periodic)
    period_steps = max(1, int(round(config.obs_policy.period / dt))) if periodic else 0

    t_arr = np.arange(n_steps + 1) * dt
    x1_arr = np.empty((n_steps + 1, len(x1)))
    x2_arr = np.empty((n_steps + 1, len(x2)))
    u1_arr = np.empty((n_steps + 1, model.sys1.input_dim))
    u2_arr = np.empty((n_steps + 1, model.sys2.input_dim))
    i1_arr = np.empty(n_steps + 1, dtype=np.int64)
    i2_arr = np.empty(n_steps + 1, dtype=np.int64)
    o1_arr = np.empty(n_steps + 1, dtype=np.int64)
    o2_arr = np.empty(n_steps + 1, dtype=np.int64)
    m1_arr = np.empty(n_steps + 1, dtype=np.int64)
    m2_arr = np.empty(n_steps + 1, dtype=np.int64)

    m1 = region_index(model.part1, x1)
    m2 = region_index(model.part2, x2)
    ob1 = sample_observation(rng, model.obs1.alpha(m1)[th1 - 1])
    ob2 = sample_observation(rng, model.obs2.alpha(m2)[th2 - 1])
    g1, g2 = fb.gains(th1, th2, ob1, ob2, m1, m2)

    def record(n, u1, u2):
        x1_arr[n] = x1
        x2_arr[n] = x2
        u1_arr[n] = u1
        u2_arr[n] = u2
        i1_arr[n] = th1
        i2_arr[n] = th2
        o1_arr[n] = ob1
        o2_arr[n] = ob2
        m1_arr[n] = m1
        m2_arr[n] = m2

    record(0, g1 @ x1, g2 @ x2)

    for n in range(1, n_steps + 1):
        t_prev = t_arr[n - 1]
        if zero_w:
            c1 = c2 = None
        else:
            envelope = math.exp(-dist.decay * t_prev) * math.sin(dist.frequency * t_prev)
            w1 = envelope * np.asarray(dist.amplitude1)
            w2 = envelope * np.asarray(dist.amplitude2)
            c1 = model.sys1.dynamics(th1).d @ w1
            c2 = model.sys2.dynamics(th2).d @ w2

        a1 = fb.closed_loop(1, th1, g1)
        a2 = fb.closed_loop(2, th2, g2)
        x1 = _rk4(a1, c1, x1, dt)
        x2 = _rk4(a2, c2, x2, dt)

        # Jumps sample against the regions the step started from.
        new_th1 = step_mode(rng, th1, model.rates1.matrix(m2)[th1 - 1], dt)
        new_th2 = step_mode(rng, th2, model.rates2.matrix(m1)[th2 - 1], dt)
        new_m1 = region_index(model.part1, x1)
        new_m2 = region_index(model.part2, x2)

        region_changed = (new_m1, new_m2) != (m1, m2)
        if periodic:
            refresh1 = refresh2 = n % period_steps == 0
        else:
            refresh1 = new_th1 != th1 or region_changed
            refresh2 = new_th2 != th2 or region_changed
        th1, th2, m1, m2 = new_th1, new_th2, new_m1, new_m2
        if refresh1:
            ob1 = sample_observation(rng, model.obs1.alpha(m1)[th1 - 1])
        if refresh2:
            ob2 = sample_observation(rng, model.obs2.alpha(m2)[th2 - 1])

        g1, g2 = fb.gains(th1, th2, ob1, ob2, m1, m2)
        record(n, g1 @ x1, g2 @ x2)

    if not (np.all(np.isfinite(x1_arr)) and np.all(np.isfinite(x2_arr))):
        raise NonFinite("state diverged to non-finite values during simulation")

    return Trace(
        t=t_arr,
        x1=x1_arr,
        x2=x2_arr,
        mode1=i1_arr,
        mode2=i2_arr,
        obs1=o1_arr,
        obs2=o2_arr,
        u1=u1_arr,
        u2=u2_arr,
        region1=m1_arr,
        region2=m2_arr,
    )


def energy_functional(trace: Trace, horizon: float | None = None) -> float:
    """Trapezoidal integral of |x(t)|^2, optionally truncated."""
    sq = np.sum(trace.x1 * trace.x1, axis=1) + np.sum(trace.x2 * trace.x2, axis=1)
    t = trace.t
    if horizon is not None:
        keep = t <= horizon + 1e-12
        sq = sq[keep]
        t = t[keep]
    if len(t) < 2:
        return 0.0
    return float(np.trapezoid(sq, t))


def estimate_stability(
    model: InterdependentModel,
    bank: ControllerBank,
    config: SimConfig,
    n_runs: int,
    x1_0,
    x2_0,
) -> MonteCarloReport:
    """Monte Carlo estimate of the truncated energy functional.

    Each run gets its own generator seeded from (config.seed, run index),
    so the report is reproducible and order-independent.
    """
    if n_runs < 1:
        raise ValueError("need at least one run")
    functionals = []
    halves = []
    terminals = []
    half = config.horizon / 2.0
    for run in range(n_runs):
        # Composite entropy (master seed, run index) gives independent,
        # reproducible streams; SeedSequence accepts the tuple directly.
        run_config = replace(config, seed=(config.seed, run))
        trace = simulate(model, bank, run_config, x1_0, x2_0)
        functionals.append(energy_functional(trace))
        halves.append(energy_functional(trace, half))
        terminals.append(float(np.sqrt(trace.x1[-1] @ trace.x1[-1] + trace.x2[-1] @ trace.x2[-1])))
    return MonteCarloReport(
        runs=n_runs,
        horizon=config.horizon,
        functional_per_run=tuple(functionals),
        half_functional_per_run=tuple(halves),
        terminal_norms=tuple(terminals),
    )
