"""Core mean-field model of the driven atom-cavity system.

Three atomic levels (cavity-coupled ground state g, excited state e, shelved
ground state f) interact with a single driven cavity mode.  All rates are in
units of the atomic linewidth gamma (HWHM), times in units of 1/gamma.

State layout used throughout the numerics:

    y = [Re(alpha), Im(alpha), Re(M), Im(M), N_e, N_g, N_f]

with the reduced 6-component variant dropping N_f (recovered from the
conserved total population).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDriveError

__all__ = [
    "ModelParams",
    "Controls",
    "LossOptions",
    "MeanFieldState",
    "DerivedParams",
    "derive",
    "rhs",
    "rhs_full",
    "rhs_reduced",
    "jacobian_reduced",
    "jacobian_full",
    "transmittance",
    "DEFAULT_PARAMS",
]


@dataclass(frozen=True)
class ModelParams:
    """Fixed physical rates and detunings, all in units of gamma (= 1)."""

    Gamma: float = 0.93e-3      # e -> f decay rate
    kappa: float = 3.92 / 3.03  # cavity HWHM
    g: float = 0.33 / 3.03      # single-photon Rabi frequency
    delta_A: float = -29.0 / 3.03  # drive - atom detuning
    delta_C: float = 0.0        # drive - cavity detuning
    n_atoms: float = 1.0e4      # total atom number (real-valued)
    gamma: float = 1.0          # unit of all rates; kept explicit for clarity

    def __post_init__(self):
        if self.gamma != 1.0:
            raise ValueError("gamma must be exactly 1 (units contract)")
        if not (self.Gamma > 0 and self.kappa > 0 and self.g > 0):
            raise ValueError("Gamma, kappa and g must be positive")
        if self.n_atoms < 0:
            raise ValueError("n_atoms must be non-negative")


@dataclass(frozen=True)
class Controls:
    """The two drive control parameters."""

    eta: float = 0.0   # cavity drive amplitude (real, >= 0)
    lam: float = 0.0   # repump rate

    def __post_init__(self):
        if self.eta < 0 or self.lam < 0:
            raise ValueError("eta and lam must be non-negative")


@dataclass(frozen=True)
class LossOptions:
    """Optional phenomenological per-level trap-loss rates (model extension)."""

    enabled: bool = False
    rate_g: float = 0.0
    rate_e: float = 0.0
    rate_f: float = 0.0

    def __post_init__(self):
        if self.enabled and min(self.rate_g, self.rate_e, self.rate_f) < 0:
            raise ValueError("loss rates must be non-negative")


NO_LOSS = LossOptions()


@dataclass(frozen=True)
class MeanFieldState:
    """Dynamical variables: cavity amplitude, collective polarization, populations."""

    alpha: complex = 0.0
    m_pol: complex = 0.0
    n_e: float = 0.0
    n_g: float = 0.0
    n_f: float = 0.0

    @property
    def intensity(self) -> float:
        return abs(self.alpha) ** 2

    @property
    def total_population(self) -> float:
        return self.n_e + self.n_g + self.n_f

    def to_vector(self) -> np.ndarray:
        return np.array(
            [self.alpha.real, self.alpha.imag, self.m_pol.real, self.m_pol.imag,
             self.n_e, self.n_g, self.n_f]
        )

    @staticmethod
    def from_vector(y) -> "MeanFieldState":
        return MeanFieldState(
            alpha=complex(y[0], y[1]),
            m_pol=complex(y[2], y[3]),
            n_e=float(y[4]),
            n_g=float(y[5]),
            n_f=float(y[6]),
        )


def ground_state(params: ModelParams, seed_alpha: float = 0.0) -> MeanFieldState:
    """All atoms in g, empty cavity; optional tiny field seed to break the
    exact fixed point at lam = 0."""
    return MeanFieldState(alpha=complex(seed_alpha, 0.0), n_g=params.n_atoms)


@dataclass(frozen=True)
class DerivedParams:
    """Quantities derived from the fixed parameters and controls."""

    delta_shift: float    # per-atom dispersive cavity shift
    big_g: float          # rescaled repump drive in [0, 1]
    beta: float           # saturation-denominator slope (inf at lam = 0)
    d_lorentz: float      # polarization Lorentzian denominator
    cooperativity: float
    empty_intensity: float


def derive(params: ModelParams, controls: Controls) -> DerivedParams:
    """Compute the derived quantities; lam = 0 yields big_g = 0, beta = inf."""
    p, c = params, controls
    delta_shift = p.g**2 * p.delta_A / (p.delta_A**2 + p.gamma**2)
    if c.lam > 0:
        big_g = 1.0 / (1.0 + 2.0 * p.Gamma / c.lam)
        beta = 2.0 + 2.0 * p.Gamma / c.lam
    else:
        big_g = 0.0
        beta = math.inf
    d_lorentz = (p.gamma + p.Gamma) ** 2 + p.delta_A**2
    cooperativity = p.n_atoms * p.g**2 / (abs(p.delta_A) * p.kappa)
    empty_intensity = c.eta**2 / (p.kappa**2 + p.delta_C**2)
    return DerivedParams(delta_shift, big_g, beta, d_lorentz, cooperativity,
                         empty_intensity)


def big_g_of_lambda(lam: float, Gamma: float) -> float:
    if lam <= 0:
        return 0.0
    return 1.0 / (1.0 + 2.0 * Gamma / lam)


def lambda_of_big_g(big_g: float, Gamma: float) -> float:
    if not 0.0 < big_g < 1.0:
        raise ValueError("big_g must lie strictly inside (0, 1)")
    return 2.0 * Gamma * big_g / (1.0 - big_g)


def rhs_full(y, params: ModelParams, eta: float, lam: float,
             loss: LossOptions = NO_LOSS) -> np.ndarray:
    """Time derivative of the full 7-component real state vector."""
    p = params
    x1, x2, x3, x4, ne, ng, nf = y
    gt = p.gamma + p.Gamma
    exch = 2.0 * p.g * (x1 * x3 + x2 * x4)   # g (alpha* M + M* alpha)
    pop_diff = ne - ng
    out = np.empty(7)
    out[0] = -p.kappa * x1 - p.delta_C * x2 + p.g * x3 + eta
    out[1] = p.delta_C * x1 - p.kappa * x2 + p.g * x4
    out[2] = -gt * x3 - p.delta_A * x4 + p.g * pop_diff * x1
    out[3] = p.delta_A * x3 - gt * x4 + p.g * pop_diff * x2
    out[4] = -exch - 2.0 * gt * ne
    out[5] = exch + 2.0 * p.gamma * ne + lam * nf
    out[6] = 2.0 * p.Gamma * ne - lam * nf
    if loss.enabled:
        out[4] -= loss.rate_e * ne
        out[5] -= loss.rate_g * ng
        out[6] -= loss.rate_f * nf
    return out


def rhs(state: MeanFieldState, params: ModelParams, controls: Controls,
        loss: LossOptions = NO_LOSS) -> MeanFieldState:
    """Vector field of the mean-field equations, returned in state shape."""
    d = rhs_full(state.to_vector(), params, controls.eta, controls.lam, loss)
    return MeanFieldState.from_vector(d)


def rhs_reduced(y, params: ModelParams, eta: float, lam: float,
                n_total: float) -> np.ndarray:
    """Derivative of the 6-component state with N_f eliminated by conservation.

    Only valid with loss disabled; conserves total population exactly.
    """
    p = params
    x1, x2, x3, x4, ne, ng = y
    gt = p.gamma + p.Gamma
    exch = 2.0 * p.g * (x1 * x3 + x2 * x4)
    pop_diff = ne - ng
    nf = n_total - ne - ng
    out = np.empty(6)
    out[0] = -p.kappa * x1 - p.delta_C * x2 + p.g * x3 + eta
    out[1] = p.delta_C * x1 - p.kappa * x2 + p.g * x4
    out[2] = -gt * x3 - p.delta_A * x4 + p.g * pop_diff * x1
    out[3] = p.delta_A * x3 - gt * x4 + p.g * pop_diff * x2
    out[4] = -exch - 2.0 * gt * ne
    out[5] = exch + 2.0 * p.gamma * ne + lam * nf
    return out


def jacobian_reduced(state: MeanFieldState, params: ModelParams,
                     controls: Controls) -> np.ndarray:
    """Analytic 6x6 Jacobian of the reduced system at the given state.

    The repump term lam*N_f turns into -lam*(N_e + N_g) after eliminating
    N_f, hence the -lam entries in the last row.
    """
    p = params
    y = state.to_vector()
    return _jac_reduced_vec(y[:6], p, controls.lam)


def _jac_reduced_vec(y, p: ModelParams, lam: float) -> np.ndarray:
    x1, x2, x3, x4, ne, ng = y[:6]
    g = p.g
    gt = p.gamma + p.Gamma
    pop_diff = ne - ng
    J = np.zeros((6, 6))
    J[0] = [-p.kappa, -p.delta_C, g, 0.0, 0.0, 0.0]
    J[1] = [p.delta_C, -p.kappa, 0.0, g, 0.0, 0.0]
    J[2] = [g * pop_diff, 0.0, -gt, -p.delta_A, g * x1, -g * x1]
    J[3] = [0.0, g * pop_diff, p.delta_A, -gt, g * x2, -g * x2]
    J[4] = [-2 * g * x3, -2 * g * x4, -2 * g * x1, -2 * g * x2, -2 * gt, 0.0]
    J[5] = [2 * g * x3, 2 * g * x4, 2 * g * x1, 2 * g * x2,
            2 * p.gamma - lam, -lam]
    return J


def jacobian_full(y, params: ModelParams, lam: float,
                  loss: LossOptions = NO_LOSS) -> np.ndarray:
    """Analytic 7x7 Jacobian of the full system (used by the stiff integrator)."""
    p = params
    x1, x2, x3, x4, ne, ng, nf = y
    g = p.g
    gt = p.gamma + p.Gamma
    pop_diff = ne - ng
    J = np.zeros((7, 7))
    J[0, :4] = [-p.kappa, -p.delta_C, g, 0.0]
    J[1, :4] = [p.delta_C, -p.kappa, 0.0, g]
    J[2] = [g * pop_diff, 0.0, -gt, -p.delta_A, g * x1, -g * x1, 0.0]
    J[3] = [0.0, g * pop_diff, p.delta_A, -gt, g * x2, -g * x2, 0.0]
    J[4] = [-2 * g * x3, -2 * g * x4, -2 * g * x1, -2 * g * x2, -2 * gt, 0.0, 0.0]
    J[5] = [2 * g * x3, 2 * g * x4, 2 * g * x1, 2 * g * x2, 2 * p.gamma, 0.0, lam]
    J[6, 4] = 2 * p.Gamma
    J[6, 6] = -lam
    if loss.enabled:
        J[4, 4] -= loss.rate_e
        J[5, 5] -= loss.rate_g
        J[6, 6] -= loss.rate_f
    return J


def transmittance(intensity: float, params: ModelParams,
                  controls: Controls) -> float:
    """Intracavity intensity normalized to the empty-cavity value at equal drive."""
    if controls.eta <= 0:
        raise EmptyDriveError("transmittance undefined at eta = 0")
    return intensity * (params.kappa**2 + params.delta_C**2) / controls.eta**2


DEFAULT_PARAMS = ModelParams()
