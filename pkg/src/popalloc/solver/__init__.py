from .lp import LE, GE, EQ, LinearProgramForm, SolverSolution, solve_lp
from .milp import MilpForm, solve_milp
from .frank_wolfe import maximize_concave_separable

__all__ = [
    "LE",
    "GE",
    "EQ",
    "LinearProgramForm",
    "SolverSolution",
    "solve_lp",
    "MilpForm",
    "solve_milp",
    "maximize_concave_separable",
]
