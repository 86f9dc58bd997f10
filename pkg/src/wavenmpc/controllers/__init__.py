from .nmpc import (NMPC, ControlSolution, NlpProblem, NmpcConfig, SqpSolver, solve_nlp, stage_data,
                   transcribe, vehicle_step)
from .pd import CascadedPD, FeedForwardPD, PdConfig, cpd_control, ff_control
from .qp import QPInfeasibleError, QPIterationLimitError, QPResult, solve_qp

__all__ = [
    "NMPC", "ControlSolution", "NlpProblem", "NmpcConfig", "SqpSolver", "solve_nlp", "stage_data", "transcribe",
    "vehicle_step", "CascadedPD", "FeedForwardPD", "PdConfig", "cpd_control", "ff_control",
    "QPInfeasibleError", "QPIterationLimitError", "QPResult", "solve_qp",
]
