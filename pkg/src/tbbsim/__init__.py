"""Mean-field simulator for collective atom-cavity ground-state bistability."""

from .errors import (ConfigError, EmptyDriveError, InsufficientPopulationError,
                     LambdaZeroError, ReconstructionError, StiffnessError,
                     TbbError)
from .model import (Controls, DerivedParams, LossOptions, MeanFieldState,
                    ModelParams, DEFAULT_PARAMS, derive, ground_state,
                    jacobian_reduced, rhs, transmittance)
from .steady import (SaturationRoot, Stability, SteadyBranch,
                     classify_stability, cubic_coefficients,
                     reconstruct_state, solve_intensities, steady_states)
from .dynamics import (ControlTarget, HysteresisRecord, IntegratorOptions,
                       Schedule, ScheduleKind, Trajectory, TransitionEvent,
                       detect_transitions, estimate_lambda, hysteresis_run,
                       integrate, schedule_eval)
from .phase import (AxisScale, GridSpec, Phase, PhaseCell, PhaseMap,
                    RepumpParam, classify_cell, extract_boundary, sweep_grid)

__version__ = "0.1.0"
