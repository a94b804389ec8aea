"""Gain synthesis, recovery, and Lyapunov certification for jump systems.

Three synthesis routes produce stabilizing state-feedback gain banks:

* ``build_centralized``: one feasibility problem over the integrated
  product-mode system; gains are recovered per joint observation by
  unmixing with the emission matrix's (pseudo-)inverse.
* ``build_fullinfo``: the same problem; recovery assumes the mode is
  directly observable, so no unmixing happens.
* ``build_distributed``: two independent problems, one per subsystem,
  with gains indexed by the subsystem's own observation and both region
  indices.

Certification is separate from synthesis: ``build_psi`` evaluates the
closed-loop generator quadratic form for fixed gains and Lyapunov
matrices, ``certify_gains`` searches for Lyapunov matrices proving a
fixed bank stable, and ``check_corollary`` verifies that two subsystem
banks stabilize the integrated system via a block-diagonal candidate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidModel,
    MissingGain,
    NotFeasible,
    SingularX,
)
from .lmi import (
    AffineMatrixMap,
    LmiProblem,
    LmiSolution,
    MapBuilder,
    SolveStatus,
    VariableLayout,
    schur_expand,
    solve_feasibility,
)
from .linalg import sym_eig
from .model import (
    IntegratedModel,
    InterdependentModel,
    JumpLinearSystem,
    ObservationModel,
    check_generator,
    compose_integrated,
    validate,
)

__all__ = [
    "Scheme",
    "ControllerBank",
    "Certificate",
    "build_psi",
    "build_centralized",
    "build_fullinfo",
    "build_distributed",
    "recover_gains",
    "certify_gains",
    "check_corollary",
    "synthesize",
    "SynthesisOutcome",
    "PSI_MARGIN",
]

# Margin (on the Lyapunov quadratic form scale) below which a closed loop
# counts as certified.  Synthesis margins live on the X = P^{-1} scale and
# shrink quadratically with ||X|| when mapped back, hence the small value.
PSI_MARGIN = 1e-8

_SINGULAR_EIG = 1e-12
_CERT_SLACK = 1e-9


class Scheme(str, enum.Enum):
    CENTRALIZED = "centralized"
    FULL_INFORMATION = "fullinfo"
    DISTRIBUTED = "distributed"


@dataclass(frozen=True)
class Certificate:
    """Lyapunov matrices plus the closed-loop forms they certify.

    ``psi`` maps (mode, region-key) to the evaluated quadratic form and
    ``psi_max`` to its largest eigenvalue; ``certified`` means every one of
    those eigenvalues sits below ``-delta`` (within solver slack).
    """

    p_matrices: tuple[np.ndarray, ...]
    psi: dict
    psi_max: dict
    delta: float
    certified: bool
    s_values: tuple[float, ...]

    @property
    def worst(self) -> float:
        return max(self.psi_max.values())


@dataclass(frozen=True)
class ControllerBank:
    """Gain table keyed (system, observation, (region1, region2)).

    System id 0 carries gains for the integrated system (centralized and
    full-information schemes); ids 1 and 2 carry per-subsystem gains
    (distributed scheme).  ``certificates`` holds one Certificate per
    system id present.
    """

    scheme: Scheme
    gains: dict
    certificates: dict

    def gain(self, system: int, observation: int, cell: tuple[int, int]) -> np.ndarray:
        key = (system, observation, tuple(cell))
        if key not in self.gains:
            raise MissingGain(f"no gain for system {system}, observation {observation}, regions {cell}")
        return self.gains[key]

    def gains_for_cell(self, system: int, cell: tuple[int, int]) -> dict[int, np.ndarray]:
        out = {}
        for (k, obs, c), g in self.gains.items():
            if k == system and c == tuple(cell):
                out[obs] = g
        return out

    @property
    def size(self) -> int:
        return len(self.gains)


def _with_identity_obs(model: IntegratedModel) -> IntegratedModel:
    """Copy of an integrated model whose emissions reveal the mode exactly."""
    eye = np.eye(model.mode_count)
    return IntegratedModel(
        system=model.system,
        partition=model.partition,
        rates=model.rates,
        obs=ObservationModel(tuple(eye.copy() for _ in model.obs.alphas)),
        mode_counts=model.mode_counts,
    )


def _validate_integrated(model: IntegratedModel) -> None:
    violations: list = []
    n = model.mode_count
    if len(model.rates.matrices) != model.cell_count:
        violations.append(f"expected {model.cell_count} joint rate matrices, got {len(model.rates.matrices)}")
    for m_idx, g in enumerate(model.rates.matrices, start=1):
        check_generator(g, f"rates[{m_idx}]", violations, n)
    for m_idx, a in enumerate(model.obs.alphas, start=1):
        if a.shape != (n, n):
            violations.append(f"obs[{m_idx}]: expected shape {(n, n)}, got {a.shape}")
        elif np.max(np.abs(a.sum(axis=1) - 1.0)) > 1e-9 or np.any(a < 0.0):
            violations.append(f"obs[{m_idx}]: not row-stochastic")
    if len(model.system.modes) != n:
        violations.append(f"expected {n} joint modes, got {len(model.system.modes)}")
    if violations:
        raise InvalidModel(violations)


def build_psi(
    p_matrices: Sequence[np.ndarray],
    gains: Mapping[int, np.ndarray],
    model: IntegratedModel,
    i: int,
    m: int,
    s: float = 1.0,
) -> np.ndarray:
    """Closed-loop generator quadratic form for mode i in region cell m.

    Returns P_i Abar + Abar' P_i + sum_j rate_ij P_j + s P_i D D' P_i with
    Abar the observation-averaged closed loop; exactly symmetric output.
    """
    nx = model.system.state_dim
    n_modes = model.mode_count
    if len(p_matrices) != n_modes:
        raise DimensionMismatch(f"expected {n_modes} Lyapunov matrices, got {len(p_matrices)}")
    dyn = model.system.dynamics(i)
    alpha = model.obs.alpha(m)
    p_i = np.asarray(p_matrices[i - 1], dtype=float)
    if p_i.shape != (nx, nx):
        raise DimensionMismatch(f"P_{i} must be {nx}x{nx}, got {p_i.shape}")

    a_bar = np.zeros((nx, nx))
    for i_hat in range(1, n_modes + 1):
        weight = alpha[i - 1, i_hat - 1]
        if i_hat not in gains:
            raise MissingGain(f"no gain for observation {i_hat} in region cell {m}")
        g = np.asarray(gains[i_hat], dtype=float)
        if g.shape != (model.system.input_dim, nx):
            raise DimensionMismatch(
                f"gain for observation {i_hat} must be {(model.system.input_dim, nx)}, got {g.shape}"
            )
        a_bar += weight * (dyn.a + dyn.b @ g)

    rates = model.rates.matrix(m)
    psi = p_i @ a_bar + a_bar.T @ p_i
    for j in range(1, n_modes + 1):
        psi += rates[i - 1, j - 1] * np.asarray(p_matrices[j - 1], dtype=float)
    if np.any(dyn.d):
        if s <= 0.0:
            raise ValueError("disturbance scaling s must be positive when D is nonzero")
        pd = p_i @ dyn.d
        psi += s * (pd @ pd.T)
    return 0.5 * (psi + psi.T)


def _jump_system_blocks(
    layout: VariableLayout,
    sys: JumpLinearSystem,
    rates: np.ndarray,
    i: int,
    y_key,
    s_key,
    decay: float = 0.0,
) -> AffineMatrixMap:
    """One Schur-expanded synthesis block for mode i under one rate matrix.

    The leading block carries A X_i + X_i A' + B Y + Y' B' + rate_ii X_i
    (+ s D D' when disturbances exist); the companions encode the coupling
    sum over the other modes' X_j through the complement structure.  A
    positive ``decay`` shifts A by decay*I, which forces the certified
    closed loop to contract at least that fast.
    """
    nx = sys.state_dim
    dyn = sys.dynamics(i)
    a_shifted = dyn.a + decay * np.eye(nx) if decay else dyn.a
    e = MapBuilder(nx, layout)
    e.linear(("X", i), left=a_shifted, mirror=True)
    e.linear(y_key, left=dyn.b, mirror=True)
    diag_rate = float(rates[i - 1, i - 1])
    if diag_rate != 0.0:
        e.linear(("X", i), coeff=diag_rate)
    if s_key is not None:
        e.scalar(s_key, dyn.d @ dyn.d.T)
    e_map = e.build()

    lam_maps = []
    x_maps = []
    for j in range(1, sys.mode_count + 1):
        if j == i:
            continue
        rate = float(rates[i - 1, j - 1])
        lam = MapBuilder(nx, layout)
        if rate > 0.0:
            lam.linear(("X", i), coeff=math.sqrt(rate))
        lam_maps.append(lam.build())
        x_maps.append(MapBuilder(nx, layout).linear(("X", j)).build())
    return schur_expand(e_map, lam_maps, x_maps)


def build_centralized(
    model: IntegratedModel, delta: float = 1e-6, decay: float = 0.0
) -> LmiProblem:
    """Synthesis feasibility problem for the integrated system.

    One Schur-expanded block per (mode, region cell), plus positivity of
    every X_i and of the disturbance scalings when disturbances exist.
    """
    _validate_integrated(model)
    sys = model.system
    n_modes = model.mode_count
    n_cells = model.cell_count
    nx, nu = sys.state_dim, sys.input_dim

    layout = VariableLayout()
    for i in range(1, n_modes + 1):
        layout.add_sym(("X", i), nx)
    for i in range(1, n_modes + 1):
        for m in range(1, n_cells + 1):
            layout.add_rect(("Y", i, m), nu, nx)
    s_modes = [i for i in range(1, n_modes + 1) if np.any(sys.dynamics(i).d)]
    for i in s_modes:
        layout.add_scalar(("s", i))

    neg = []
    neg_labels = []
    for i in range(1, n_modes + 1):
        for m in range(1, n_cells + 1):
            block = _jump_system_blocks(
                layout,
                sys,
                model.rates.matrix(m),
                i,
                ("Y", i, m),
                ("s", i) if i in s_modes else None,
                decay,
            )
            neg.append(block)
            neg_labels.append(f"mode {i}, cell {m}")

    pos = []
    pos_labels = []
    for i in range(1, n_modes + 1):
        pos.append(MapBuilder(nx, layout).linear(("X", i)).build())
        pos_labels.append(f"X{i} > 0")
    for i in s_modes:
        pos.append(MapBuilder(1, layout).scalar(("s", i), [[1.0]]).build())
        pos_labels.append(f"s{i} > 0")

    z0 = np.zeros(layout.size)
    for i in range(1, n_modes + 1):
        layout.pack_into(z0, ("X", i), np.eye(nx))
    for i in s_modes:
        layout.pack_into(z0, ("s", i), 1.0)

    return LmiProblem(layout, neg, pos, delta, z0, neg_labels, pos_labels)


def build_fullinfo(
    model: IntegratedModel, delta: float = 1e-6, decay: float = 0.0
) -> LmiProblem:
    """Full-information variant: identical blocks, since the constraints
    never reference the emission matrices; only gain recovery differs."""
    return build_centralized(model, delta, decay)


def build_distributed(
    model: InterdependentModel, delta: float = 1e-6, decay: float = 0.0
) -> tuple[LmiProblem, LmiProblem]:
    """Independent per-subsystem synthesis problems.

    System 1 gets one block per (own mode, region1, region2) under the rate
    matrix selected by region2; system 2 symmetrically under region1's.
    Gains carry both region indices; the two problems share no variables.
    """
    violations = validate(model)
    if violations:
        raise InvalidModel(violations)

    m1_count = model.part1.region_count
    m2_count = model.part2.region_count

    def one_system(sys: JumpLinearSystem, rate_of_cell) -> LmiProblem:
        nx, nu = sys.state_dim, sys.input_dim
        layout = VariableLayout()
        for i in range(1, sys.mode_count + 1):
            layout.add_sym(("X", i), nx)
        for i in range(1, sys.mode_count + 1):
            for m1 in range(1, m1_count + 1):
                for m2 in range(1, m2_count + 1):
                    layout.add_rect(("Y", i, m1, m2), nu, nx)
        s_modes = [i for i in range(1, sys.mode_count + 1) if np.any(sys.dynamics(i).d)]
        for i in s_modes:
            layout.add_scalar(("s", i))

        neg, neg_labels = [], []
        for i in range(1, sys.mode_count + 1):
            for m1 in range(1, m1_count + 1):
                for m2 in range(1, m2_count + 1):
                    block = _jump_system_blocks(
                        layout,
                        sys,
                        rate_of_cell(m1, m2),
                        i,
                        ("Y", i, m1, m2),
                        ("s", i) if i in s_modes else None,
                        decay,
                    )
                    neg.append(block)
                    neg_labels.append(f"mode {i}, regions ({m1},{m2})")

        pos, pos_labels = [], []
        for i in range(1, sys.mode_count + 1):
            pos.append(MapBuilder(nx, layout).linear(("X", i)).build())
            pos_labels.append(f"X{i} > 0")
        for i in s_modes:
            pos.append(MapBuilder(1, layout).scalar(("s", i), [[1.0]]).build())
            pos_labels.append(f"s{i} > 0")

        z0 = np.zeros(layout.size)
        for i in range(1, sys.mode_count + 1):
            layout.pack_into(z0, ("X", i), np.eye(nx))
        for i in s_modes:
            layout.pack_into(z0, ("s", i), 1.0)
        return LmiProblem(layout, neg, pos, delta, z0, neg_labels, pos_labels)

    prob1 = one_system(model.sys1, lambda m1, m2: model.rates1.matrix(m2))
    prob2 = one_system(model.sys2, lambda m1, m2: model.rates2.matrix(m1))
    return prob1, prob2


def _invert_x(x: np.ndarray, label: str) -> np.ndarray:
    eig = sym_eig(x)
    if eig.min < _SINGULAR_EIG:
        raise SingularX(f"{label} has minimum eigenvalue {eig.min:.3e} < {_SINGULAR_EIG:g}")
    v = eig.eigenvectors
    return (v / eig.eigenvalues) @ v.T


def recover_gains(
    solution,
    model,
    scheme: Scheme,
    psi_margin: float = PSI_MARGIN,
) -> ControllerBank:
    """Turn a feasible solver result into an observation-indexed gain bank.

    Centralized recovery unmixes through the joint emission inverse; full
    information uses the solver variables directly; distributed recovery
    (``solution`` is the pair of per-system results) unmixes through each
    subsystem's own-region emission inverse.  The returned bank carries the
    Lyapunov matrices P = X^{-1} and freshly evaluated closed-loop forms.
    """
    if scheme is Scheme.DISTRIBUTED:
        return _recover_distributed(solution, model, psi_margin)
    return _recover_integrated(solution, model, scheme, psi_margin)


def _require_feasible(solution: LmiSolution) -> None:
    if solution.status is not SolveStatus.FEASIBLE:
        raise NotFeasible(f"solver status is {solution.status.value}, cannot recover gains")


def _recover_integrated(
    solution: LmiSolution, model: IntegratedModel, scheme: Scheme, psi_margin: float
) -> ControllerBank:
    _require_feasible(solution)
    n_modes = model.mode_count
    n_cells = model.cell_count

    x_inv = [_invert_x(solution.variable(("X", i)), f"X{i}") for i in range(1, n_modes + 1)]
    y = {
        (i, m): solution.variable(("Y", i, m))
        for i in range(1, n_modes + 1)
        for m in range(1, n_cells + 1)
    }
    s_values = tuple(
        solution.variable(("s", i)) if ("s", i) in solution.layout.keys else 1.0
        for i in range(1, n_modes + 1)
    )

    gains = {}
    for m in range(1, n_cells + 1):
        beta = np.eye(n_modes) if scheme is Scheme.FULL_INFORMATION else model.obs.beta(m)
        cell = model.partition.cell_pair(m)
        for i_hat in range(1, n_modes + 1):
            g = np.zeros((model.system.input_dim, model.system.state_dim))
            for i in range(1, n_modes + 1):
                weight = beta[i_hat - 1, i - 1]
                if weight != 0.0:
                    g = g + weight * (y[(i, m)] @ x_inv[i - 1])
            gains[(0, i_hat, cell)] = g

    expected = n_cells * n_modes
    assert len(gains) == expected, f"gain count {len(gains)} != {expected}"

    p_matrices = tuple(x_inv)
    bank = ControllerBank(scheme=scheme, gains=gains, certificates={})
    # A full-information controller reads the true mode, so its closed loop
    # averages over identity emissions, not the model's.
    cert_model = _with_identity_obs(model) if scheme is Scheme.FULL_INFORMATION else model
    cert = _integrated_certificate(cert_model, bank, p_matrices, s_values, psi_margin)
    return ControllerBank(scheme=scheme, gains=gains, certificates={0: cert})


def _recover_distributed(
    solutions, model: InterdependentModel, psi_margin: float
) -> ControllerBank:
    sol1, sol2 = solutions
    _require_feasible(sol1)
    _require_feasible(sol2)
    m1_count = model.part1.region_count
    m2_count = model.part2.region_count

    gains = {}
    certificates = {}
    for k, sys, obs, sol in ((1, model.sys1, model.obs1, sol1), (2, model.sys2, model.obs2, sol2)):
        n_modes = sys.mode_count
        x_inv = [_invert_x(sol.variable(("X", i)), f"system {k} X{i}") for i in range(1, n_modes + 1)]
        s_values = tuple(
            sol.variable(("s", i)) if ("s", i) in sol.layout.keys else 1.0
            for i in range(1, n_modes + 1)
        )
        for m1 in range(1, m1_count + 1):
            for m2 in range(1, m2_count + 1):
                own_region = m1 if k == 1 else m2
                beta = obs.beta(own_region)
                for i_hat in range(1, n_modes + 1):
                    g = np.zeros((sys.input_dim, sys.state_dim))
                    for i in range(1, n_modes + 1):
                        weight = beta[i_hat - 1, i - 1]
                        if weight != 0.0:
                            g = g + weight * (sol.variable(("Y", i, m1, m2)) @ x_inv[i - 1])
                    gains[(k, i_hat, (m1, m2))] = g
        p_matrices = tuple(x_inv)
        certificates[k] = _subsystem_certificate(model, k, gains, p_matrices, s_values, psi_margin)

    expected = m1_count * m2_count * (model.sys1.mode_count + model.sys2.mode_count)
    assert len(gains) == expected, f"gain count {len(gains)} != {expected}"
    return ControllerBank(scheme=Scheme.DISTRIBUTED, gains=gains, certificates=certificates)


def _subsystem_psi(
    model: InterdependentModel,
    k: int,
    gains: Mapping,
    p_matrices: Sequence[np.ndarray],
    i: int,
    m1: int,
    m2: int,
    s: float,
) -> np.ndarray:
    """Closed-loop form for one subsystem at one region pair."""
    sys = model.sys1 if k == 1 else model.sys2
    obs = model.obs1 if k == 1 else model.obs2
    rates = model.rates1.matrix(m2) if k == 1 else model.rates2.matrix(m1)
    alpha = obs.alpha(m1 if k == 1 else m2)
    dyn = sys.dynamics(i)
    nx = sys.state_dim

    a_bar = np.zeros((nx, nx))
    for i_hat in range(1, sys.mode_count + 1):
        key = (k, i_hat, (m1, m2))
        if key not in gains:
            raise MissingGain(f"no gain for system {k}, observation {i_hat}, regions ({m1},{m2})")
        a_bar += alpha[i - 1, i_hat - 1] * (dyn.a + dyn.b @ np.asarray(gains[key], dtype=float))

    p_i = np.asarray(p_matrices[i - 1], dtype=float)
    psi = p_i @ a_bar + a_bar.T @ p_i
    for j in range(1, sys.mode_count + 1):
        psi += rates[i - 1, j - 1] * np.asarray(p_matrices[j - 1], dtype=float)
    if np.any(dyn.d):
        pd = p_i @ dyn.d
        psi += s * (pd @ pd.T)
    return 0.5 * (psi + psi.T)


def _subsystem_certificate(
    model: InterdependentModel,
    k: int,
    gains: Mapping,
    p_matrices: tuple[np.ndarray, ...],
    s_values: tuple[float, ...],
    delta: float,
) -> Certificate:
    sys = model.sys1 if k == 1 else model.sys2
    psi = {}
    psi_max = {}
    for i in range(1, sys.mode_count + 1):
        for m1 in range(1, model.part1.region_count + 1):
            for m2 in range(1, model.part2.region_count + 1):
                mat = _subsystem_psi(model, k, gains, p_matrices, i, m1, m2, s_values[i - 1])
                psi[(i, (m1, m2))] = mat
                psi_max[(i, (m1, m2))] = sym_eig(mat).max
    certified = all(v <= -delta + _CERT_SLACK for v in psi_max.values()) and all(
        sym_eig(p).min > 0.0 for p in p_matrices
    )
    return Certificate(
        p_matrices=p_matrices,
        psi=psi,
        psi_max=psi_max,
        delta=delta,
        certified=certified,
        s_values=s_values,
    )


def _integrated_certificate(
    model: IntegratedModel,
    bank: ControllerBank,
    p_matrices: tuple[np.ndarray, ...],
    s_values: tuple[float, ...],
    delta: float,
) -> Certificate:
    psi = {}
    psi_max = {}
    for i in range(1, model.mode_count + 1):
        for m in range(1, model.cell_count + 1):
            cell = model.partition.cell_pair(m)
            gains = bank.gains_for_cell(0, cell)
            mat = build_psi(p_matrices, gains, model, i, m, s_values[i - 1])
            psi[(i, m)] = mat
            psi_max[(i, m)] = sym_eig(mat).max
    certified = all(v <= -delta + _CERT_SLACK for v in psi_max.values()) and all(
        sym_eig(p).min > 0.0 for p in p_matrices
    )
    return Certificate(
        p_matrices=p_matrices,
        psi=psi,
        psi_max=psi_max,
        delta=delta,
        certified=certified,
        s_values=s_values,
    )


def certify_gains(
    model: IntegratedModel,
    bank: ControllerBank,
    delta: float = PSI_MARGIN,
    max_iter: int = 20000,
) -> Certificate:
    """Search for Lyapunov matrices proving a fixed gain bank stable.

    With the gains fixed, the closed-loop forms are affine in the P_i (the
    disturbance term enters through a Schur companion block), so this is
    itself a feasibility problem.  Infeasibility is reported through
    ``certified=False``, never raised.  Full-information banks are checked
    against identity emissions, since that controller reads the true mode.
    """
    if bank.scheme is Scheme.FULL_INFORMATION:
        model = _with_identity_obs(model)
    _validate_integrated(model)
    sys = model.system
    n_modes = model.mode_count
    n_cells = model.cell_count
    nx = sys.state_dim

    # Observation-averaged closed-loop matrices per (mode, cell).
    a_bars: dict[tuple[int, int], np.ndarray] = {}
    for i in range(1, n_modes + 1):
        dyn = sys.dynamics(i)
        for m in range(1, n_cells + 1):
            alpha = model.obs.alpha(m)
            cell = model.partition.cell_pair(m)
            a_bar = np.zeros((nx, nx))
            for i_hat in range(1, n_modes + 1):
                g = bank.gain(0, i_hat, cell)
                a_bar += alpha[i - 1, i_hat - 1] * (dyn.a + dyn.b @ g)
            a_bars[(i, m)] = a_bar

    layout = VariableLayout()
    for i in range(1, n_modes + 1):
        layout.add_sym(("P", i), nx)
    s_modes = [i for i in range(1, n_modes + 1) if np.any(sys.dynamics(i).d)]
    for i in s_modes:
        layout.add_scalar(("r", i))  # r = 1/s, the disturbance Schur companion

    neg, neg_labels = [], []
    for i in range(1, n_modes + 1):
        dyn = sys.dynamics(i)
        has_d = i in s_modes
        nw = dyn.d.shape[1] if has_d else 0
        dim = nx + nw
        for m in range(1, n_cells + 1):
            b = MapBuilder(dim, layout)
            b.linear(("P", i), right=a_bars[(i, m)], mirror=True, at=(0, 0))
            rates = model.rates.matrix(m)
            for j in range(1, n_modes + 1):
                rate = float(rates[i - 1, j - 1])
                if rate != 0.0:
                    b.linear(("P", j), coeff=rate, at=(0, 0))
            if has_d:
                b.linear(("P", i), right=dyn.d, at=(0, nx), mirror=True)
                b.scalar(("r", i), -np.eye(nw), at=(nx, nx))
            neg.append(b.build())
            neg_labels.append(f"mode {i}, cell {m}")

    pos, pos_labels = [], []
    for i in range(1, n_modes + 1):
        pos.append(MapBuilder(nx, layout).linear(("P", i)).build())
        pos_labels.append(f"P{i} > 0")
    for i in s_modes:
        pos.append(MapBuilder(1, layout).scalar(("r", i), [[1.0]]).build())
        pos_labels.append(f"r{i} > 0")

    z0 = np.zeros(layout.size)
    for i in range(1, n_modes + 1):
        layout.pack_into(z0, ("P", i), np.eye(nx))
    for i in s_modes:
        layout.pack_into(z0, ("r", i), 1.0)

    problem = LmiProblem(layout, neg, pos, delta, z0, neg_labels, pos_labels)
    solution = solve_feasibility(problem, max_iter)

    p_matrices = tuple(solution.layout.unpack(solution.z, ("P", i)) for i in range(1, n_modes + 1))
    s_values = tuple(
        1.0 / solution.layout.unpack(solution.z, ("r", i)) if i in s_modes else 1.0
        for i in range(1, n_modes + 1)
    )
    # The direct evaluation of the closed-loop forms is authoritative for
    # the certified flag, whatever the solver claimed.
    return _integrated_certificate(model, bank, p_matrices, s_values, delta)


def check_corollary(
    model: InterdependentModel,
    bank1: ControllerBank,
    bank2: ControllerBank,
    delta: float = PSI_MARGIN,
    max_iter: int = 20000,
) -> Certificate:
    """Verify that per-subsystem banks stabilize the integrated system.

    Builds the block-diagonal Lyapunov candidate from the two subsystem
    certificates and evaluates every joint closed-loop form; falls back to
    a fresh ``certify_gains`` search when the candidate misses the margin
    or either certificate is absent.
    """
    integ = compose_integrated(model)
    joint_bank = _joint_bank(integ, model, bank1, bank2)

    cert1 = bank1.certificates.get(1)
    cert2 = bank2.certificates.get(2)
    if cert1 is not None and cert2 is not None:
        p_joint = []
        s_joint = []
        for i in range(1, integ.mode_count + 1):
            i1, i2 = integ.mode_pair(i)
            p1 = cert1.p_matrices[i1 - 1]
            p2 = cert2.p_matrices[i2 - 1]
            block = np.zeros((integ.system.state_dim, integ.system.state_dim))
            n1 = p1.shape[0]
            block[:n1, :n1] = p1
            block[n1:, n1:] = p2
            p_joint.append(block)
            s_joint.append(min(cert1.s_values[i1 - 1], cert2.s_values[i2 - 1]))
        candidate = _integrated_certificate(
            integ, joint_bank, tuple(p_joint), tuple(s_joint), delta
        )
        if candidate.certified:
            return candidate

    return certify_gains(integ, joint_bank, delta, max_iter)


def _joint_bank(
    integ: IntegratedModel,
    model: InterdependentModel,
    bank1: ControllerBank,
    bank2: ControllerBank,
) -> ControllerBank:
    nu1, nx1 = model.sys1.input_dim, model.sys1.state_dim
    nu2, nx2 = model.sys2.input_dim, model.sys2.state_dim
    gains = {}
    for m1 in range(1, model.part1.region_count + 1):
        for m2 in range(1, model.part2.region_count + 1):
            for i_hat in range(1, integ.mode_count + 1):
                i1, i2 = integ.mode_pair(i_hat)
                g1 = bank1.gain(1, i1, (m1, m2))
                g2 = bank2.gain(2, i2, (m1, m2))
                g = np.zeros((nu1 + nu2, nx1 + nx2))
                g[:nu1, :nx1] = g1
                g[nu1:, nx1:] = g2
                gains[(0, i_hat, (m1, m2))] = g
    return ControllerBank(scheme=Scheme.CENTRALIZED, gains=gains, certificates={})


@dataclass(frozen=True)
class SynthesisOutcome:
    """Bundle of everything a synthesis run produced."""

    bank: ControllerBank | None
    solutions: tuple[LmiSolution, ...]
    problems: tuple[LmiProblem, ...]

    @property
    def feasible(self) -> bool:
        return all(s.status is SolveStatus.FEASIBLE for s in self.solutions)

    @property
    def worst_status(self) -> SolveStatus:
        for status in (SolveStatus.ITERATION_LIMIT, SolveStatus.INFEASIBLE):
            if any(s.status is status for s in self.solutions):
                return status
        return SolveStatus.FEASIBLE


def synthesize(
    model: InterdependentModel,
    scheme: Scheme,
    delta: float = 1e-6,
    max_iter: int = 20000,
    decay: float = 0.0,
) -> SynthesisOutcome:
    """End-to-end synthesis: build, solve, and recover for any scheme.

    ``decay`` > 0 synthesizes against rate-shifted dynamics A + decay*I, a
    standard way to demand a guaranteed contraction rate; the recovered
    bank's certificate is always evaluated against the unshifted model.
    """
    if scheme is Scheme.DISTRIBUTED:
        prob1, prob2 = build_distributed(model, delta, decay)
        sol1 = solve_feasibility(prob1, max_iter)
        sol2 = solve_feasibility(prob2, max_iter)
        bank = None
        if sol1.status is SolveStatus.FEASIBLE and sol2.status is SolveStatus.FEASIBLE:
            bank = recover_gains((sol1, sol2), model, Scheme.DISTRIBUTED)
        return SynthesisOutcome(bank, (sol1, sol2), (prob1, prob2))

    integ = compose_integrated(model)
    builder = build_fullinfo if scheme is Scheme.FULL_INFORMATION else build_centralized
    prob = builder(integ, delta, decay)
    sol = solve_feasibility(prob, max_iter)
    bank = None
    if sol.status is SolveStatus.FEASIBLE:
        bank = recover_gains(sol, integ, scheme)
    return SynthesisOutcome(bank, (sol,), (prob,))
