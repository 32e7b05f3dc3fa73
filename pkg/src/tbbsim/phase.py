"""Two-parameter phase diagram over the drive and repump controls.

Every grid cell is solved independently and exactly (no continuation), so
cells can be distributed over workers while keeping the output deterministic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import Controls, ModelParams, big_g_of_lambda, lambda_of_big_g
from .steady import Stability, steady_states

__all__ = [
    "AxisScale",
    "RepumpParam",
    "GridSpec",
    "Phase",
    "PhaseCell",
    "PhaseMap",
    "sweep_grid",
    "classify_cell",
    "extract_boundary",
]

BRIGHT_THRESHOLD = 0.5  # monostable blockaded/bright split, declared in output


class AxisScale(enum.Enum):
    LINEAR = "linear"
    LOG = "log"


class RepumpParam(enum.Enum):
    LAMBDA = "lambda"
    G = "G"


@dataclass(frozen=True)
class GridSpec:
    eta_min: float
    eta_max: float
    eta_points: int
    eta_scale: AxisScale = AxisScale.LINEAR
    repump_min: float = 0.05
    repump_max: float = 0.95
    repump_points: int = 2
    repump_scale: AxisScale = AxisScale.LINEAR
    repump_param: RepumpParam = RepumpParam.G

    def __post_init__(self):
        if self.eta_points < 2 or self.repump_points < 2:
            raise ValueError("need at least 2 points per axis")
        if not (self.eta_min < self.eta_max
                and self.repump_min < self.repump_max):
            raise ValueError("axis min must be below max")
        if self.eta_scale is AxisScale.LOG and self.eta_min <= 0:
            raise ValueError("log eta axis requires eta_min > 0")
        if self.repump_scale is AxisScale.LOG and self.repump_min <= 0:
            raise ValueError("log repump axis requires repump_min > 0")
        if self.repump_param is RepumpParam.G and not (
                0.0 < self.repump_min and self.repump_max < 1.0):
            raise ValueError("G parameterization requires values in (0, 1)")

    def eta_values(self):
        return _axis(self.eta_min, self.eta_max, self.eta_points,
                     self.eta_scale)

    def repump_values(self):
        return _axis(self.repump_min, self.repump_max, self.repump_points,
                     self.repump_scale)


def _axis(lo, hi, n, scale):
    if scale is AxisScale.LOG:
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


class Phase(enum.Enum):
    BLOCKADED = "blockaded"
    BRIGHT = "bright"
    BISTABLE = "bistable"


@dataclass(frozen=True)
class PhaseCell:
    eta: float
    lam: float
    big_g: float
    n_stable: int
    transmittances: tuple    # stable-branch transmittances, ascending
    phase: Phase
    error: str = ""


@dataclass
class PhaseMap:
    spec: GridSpec
    params: ModelParams
    cells: list = field(default_factory=list)  # row-major, repump outer
    boundary: list = field(default_factory=list)

    def cell(self, i_repump, j_eta) -> PhaseCell:
        return self.cells[i_repump * self.spec.eta_points + j_eta]

    @property
    def shape(self):
        return (self.spec.repump_points, self.spec.eta_points)


def classify_cell(branches) -> Phase:
    """Phase label from the steady branches; marginal counts as stable."""
    stable = [b for b in branches
              if b.stability in (Stability.STABLE, Stability.MARGINAL)]
    if len(stable) >= 2:
        return Phase.BISTABLE
    t = stable[0].transmittance if stable else branches[0].transmittance
    return Phase.BRIGHT if t >= BRIGHT_THRESHOLD else Phase.BLOCKADED


def solve_cell(params: ModelParams, eta: float, lam: float) -> PhaseCell:
    big_g = big_g_of_lambda(lam, params.Gamma)
    try:
        branches = steady_states(params, Controls(eta=eta, lam=lam))
    except Exception as exc:  # per-cell failures never abort the sweep
        return PhaseCell(eta, lam, big_g, 0, (), Phase.BLOCKADED,
                         error=f"{type(exc).__name__}: {exc}")
    stable = sorted(b.transmittance for b in branches
                    if b.stability in (Stability.STABLE, Stability.MARGINAL))
    return PhaseCell(eta, lam, big_g, len(stable), tuple(stable),
                     classify_cell(branches))


def _solve_row(args):
    params, lam, etas = args
    return [solve_cell(params, eta, lam) for eta in etas]


def sweep_grid(params: ModelParams, spec: GridSpec,
               n_workers: int = 1) -> PhaseMap:
    """Solve every grid point; deterministic ordering at any worker count."""
    etas = spec.eta_values()
    reps = spec.repump_values()
    if spec.repump_param is RepumpParam.G:
        lams = [lambda_of_big_g(g, params.Gamma) for g in reps]
    else:
        lams = list(reps)

    jobs = [(params, lam, etas) for lam in lams]
    if n_workers > 1:
        import multiprocessing as mp
        with mp.Pool(n_workers) as pool:
            rows = pool.map(_solve_row, jobs)  # ordered map: deterministic
    else:
        rows = [_solve_row(j) for j in jobs]

    pmap = PhaseMap(spec=spec, params=params,
                    cells=[c for row in rows for c in row])
    pmap.boundary = extract_boundary(pmap)
    return pmap


def extract_boundary(pmap: PhaseMap):
    """All 4-neighbor adjacent cell-index pairs with differing phase,
    row-major order."""
    n_rep, n_eta = pmap.shape
    pairs = []
    for i in range(n_rep):
        for j in range(n_eta):
            k = i * n_eta + j
            if j + 1 < n_eta and pmap.cells[k].phase != pmap.cells[k + 1].phase:
                pairs.append((k, k + 1))
            if i + 1 < n_rep:
                k2 = k + n_eta
                if pmap.cells[k].phase != pmap.cells[k2].phase:
                    pairs.append((k, k2))
    return pairs
