"""Quantum neural network solvers for power-system transient DAEs.

Exact statevector simulation with forward-mode tangents, SFQ/PFQ circuit
families, physics-informed windowed training with BFGS, and an RK4
reference solver for the SMIB and WSCC 3-machine benchmarks.
"""

from .bfgs import OptimizeResult, bfgs_minimize
from .models import Embedding, ModelOutput, PfqModel, SfqModel, evaluate
from .oracle import Trajectory, mse, mse_table, rk4_solve, solve_oracle
from .quantum import ArcsinDomainError
from .systems import SmibSystem, WsccSystem, load_wscc, make_system
from .training import ModelSpec, TrainingConfig, assemble_loss, solve_trajectory, solve_window

__version__ = "0.1.0"

__all__ = [
    "ArcsinDomainError",
    "Embedding",
    "ModelOutput",
    "ModelSpec",
    "OptimizeResult",
    "PfqModel",
    "SfqModel",
    "SmibSystem",
    "Trajectory",
    "TrainingConfig",
    "WsccSystem",
    "assemble_loss",
    "bfgs_minimize",
    "evaluate",
    "load_wscc",
    "make_system",
    "mse",
    "mse_table",
    "rk4_solve",
    "solve_oracle",
    "solve_trajectory",
    "solve_window",
]
