"""Exact steady states via reduction to a cubic in the saturation parameter.

Setting the time derivatives to zero and eliminating the atomic variables
leaves a single scalar equation for s = g^2 |alpha|^2 / D (with
D = (gamma+Gamma)^2 + delta_A^2):

    (s D / g^2) [ (kappa u + a)^2 + (delta_C u - b)^2 ] = eta^2 u^2,

where u = 1 + beta s, beta = 2 + 2 Gamma / lam, a = N g^2 (gamma+Gamma) / D
and b = N g^2 delta_A / D.  Expanding gives a cubic P(s); roots are found by
the companion matrix and polished by Newton on the un-expanded residual,
which keeps the near-fold roots accurate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import LambdaZeroError, ReconstructionError
from .model import (Controls, MeanFieldState, ModelParams, jacobian_reduced,
                    rhs_full, transmittance)

__all__ = [
    "Stability",
    "SaturationRoot",
    "SteadyBranch",
    "cubic_coefficients",
    "scalar_residual",
    "solve_intensities",
    "reconstruct_state",
    "classify_stability",
    "steady_states",
]

MERGE_RTOL = 1e-9
DEFAULT_MARGINAL_TOL = 1e-7


class Stability(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class SaturationRoot:
    s: float          # saturation parameter
    intensity: float  # |alpha|^2 = s D / g^2
    residual: float   # |scalar equation| at s


@dataclass(frozen=True)
class SteadyBranch:
    state: MeanFieldState
    root: SaturationRoot
    transmittance: float
    stability: Stability
    eigenvalues: np.ndarray  # 6 complex eigenvalues of the reduced Jacobian

    @property
    def max_re_eigenvalue(self) -> float:
        return float(np.max(self.eigenvalues.real))


def _aux(params: ModelParams, controls: Controls):
    p = params
    if controls.lam <= 0:
        raise LambdaZeroError("steady-state solver requires lam > 0")
    gt = p.gamma + p.Gamma
    d_lor = gt**2 + p.delta_A**2
    beta = 2.0 + 2.0 * p.Gamma / controls.lam
    a = p.n_atoms * p.g**2 * gt / d_lor
    b = p.n_atoms * p.g**2 * p.delta_A / d_lor
    return gt, d_lor, beta, a, b


def cubic_coefficients(params: ModelParams, controls: Controls):
    """Coefficients (c3, c2, c1, c0) of the expanded steady-state cubic P(s)."""
    p, c = params, controls
    gt, d_lor, beta, a, b = _aux(p, c)
    E = d_lor / p.g**2
    A = p.kappa**2 + p.delta_C**2
    B = 2.0 * (p.kappa * a - p.delta_C * b)
    C = a * a + b * b
    eta2 = c.eta**2
    c3 = E * A * beta**2
    c2 = E * (2.0 * A * beta + B * beta) - eta2 * beta**2
    c1 = E * (A + B + C) - 2.0 * eta2 * beta
    c0 = -eta2
    return c3, c2, c1, c0


def scalar_residual(s, params: ModelParams, controls: Controls):
    """Un-expanded scalar steady-state equation; vanishes at true roots."""
    p, c = params, controls
    gt, d_lor, beta, a, b = _aux(p, c)
    s = np.asarray(s, dtype=float)
    u = 1.0 + beta * s
    lhs = (s * d_lor / p.g**2) * ((p.kappa * u + a) ** 2
                                  + (p.delta_C * u - b) ** 2)
    return lhs - c.eta**2 * u**2


def _residual_derivative(s, params: ModelParams, controls: Controls):
    p, c = params, controls
    gt, d_lor, beta, a, b = _aux(p, c)
    u = 1.0 + beta * s
    ku, du = p.kappa * u + a, p.delta_C * u - b
    quad = ku**2 + du**2
    E = d_lor / p.g**2
    return (E * quad + s * E * 2.0 * beta * (ku * p.kappa + du * p.delta_C)
            - 2.0 * c.eta**2 * beta * u)


def _polish(s, params, controls, max_iter=50):
    for _ in range(max_iter):
        f = float(scalar_residual(s, params, controls))
        fp = _residual_derivative(s, params, controls)
        if fp == 0.0:
            break
        step = f / fp
        s_new = s - step
        if s_new < 0.0:
            s_new = 0.5 * s
        if abs(s_new - s) <= 1e-16 * max(abs(s), 1e-300):
            s = s_new
            break
        s = s_new
    return s


def solve_intensities(params: ModelParams, controls: Controls):
    """All real roots s >= 0, sorted ascending; length 1, 2 or 3."""
    p, c = params, controls
    gt, d_lor, beta, a, b = _aux(p, c)
    if c.eta == 0.0:
        return [SaturationRoot(0.0, 0.0, 0.0)]
    c3, c2, c1, c0 = cubic_coefficients(p, c)
    raw = np.roots([c3, c2, c1, c0])  # companion-matrix solve
    candidates = []
    for r in raw:
        if abs(r.imag) > 1e-7 * max(1.0, abs(r.real)):
            continue
        s = max(r.real, 0.0)
        candidates.append(_polish(s, p, c))
    # keep polished roots with acceptable residual, merge near-duplicates;
    # the tolerance floor tracks the rounding magnitude of the two sides of
    # the scalar equation, which exceeds 1e-9*eta^2 at very strong drive
    roots = []
    for s in sorted(candidates):
        if s < 0:
            continue
        res = abs(float(scalar_residual(s, p, c)))
        u = 1.0 + beta * s
        magnitude = (s * d_lor / p.g**2) * ((p.kappa * u + a) ** 2
                                            + (p.delta_C * u) ** 2 + b * b) \
            + c.eta**2 * u**2
        tol = max(1e-9 * max(1.0, c.eta**2), 64 * np.finfo(float).eps * magnitude)
        if res > tol:
            continue
        if roots and abs(s - roots[-1]) <= MERGE_RTOL * max(abs(s), 1e-300):
            continue
        roots.append(s)
    if not roots:
        raise ReconstructionError(
            f"no admissible steady-state root found (eta={c.eta}, lam={c.lam})")
    return [SaturationRoot(s, s * d_lor / p.g**2,
                           abs(float(scalar_residual(s, p, c))))
            for s in roots]


def reconstruct_state(root: SaturationRoot, params: ModelParams,
                      controls: Controls) -> MeanFieldState:
    """Rebuild the full fixed point from a saturation root."""
    p, c = params, controls
    gt, d_lor, beta, a, b = _aux(p, c)
    s = root.s
    N = p.n_atoms
    n_g = N * (1.0 + s) / (1.0 + beta * s)
    n_e = s * n_g / (1.0 + s)
    n_f = (2.0 * p.Gamma / c.lam) * n_e
    denom = (p.kappa - 1j * p.delta_C
             + p.g**2 * n_g / ((1.0 + s) * (gt - 1j * p.delta_A)))
    alpha = c.eta / denom
    m_pol = p.g * (n_e - n_g) * alpha / (gt - 1j * p.delta_A)
    state = MeanFieldState(alpha=alpha, m_pol=m_pol, n_e=n_e, n_g=n_g, n_f=n_f)
    if c.eta > 0 and root.intensity > 0:
        rel = abs(abs(alpha) ** 2 - root.intensity) / root.intensity
        if rel > 1e-6:
            raise ReconstructionError(
                f"intensity mismatch {rel:.3e} at s={s!r}")
    return state


def classify_stability(state: MeanFieldState, params: ModelParams,
                       controls: Controls,
                       marginal_tol: float = DEFAULT_MARGINAL_TOL):
    """Eigenvalues of the reduced Jacobian and the resulting stability label."""
    J = jacobian_reduced(state, params, controls)
    eigs = np.linalg.eigvals(J)
    max_re = float(np.max(eigs.real))
    if max_re < -marginal_tol:
        label = Stability.STABLE
    elif max_re > marginal_tol:
        label = Stability.UNSTABLE
    else:
        label = Stability.MARGINAL
    return label, eigs


def steady_states(params: ModelParams, controls: Controls,
                  marginal_tol: float = DEFAULT_MARGINAL_TOL):
    """All steady branches, sorted by intensity ascending."""
    branches = []
    for root in solve_intensities(params, controls):
        state = reconstruct_state(root, params, controls)
        label, eigs = classify_stability(state, params, controls, marginal_tol)
        if controls.eta > 0:
            trans = transmittance(root.intensity, params, controls)
        else:
            trans = 0.0  # undefined; reported as 0 by convention
        branches.append(SteadyBranch(state, root, trans, label, eigs))
    branches.sort(key=lambda br: br.root.intensity)
    return branches


def branch_residual_norm(branch: SteadyBranch, params: ModelParams,
                         controls: Controls) -> float:
    """Euclidean norm of the vector field at the branch fixed point."""
    d = rhs_full(branch.state.to_vector(), params, controls.eta, controls.lam)
    return float(np.linalg.norm(d))
