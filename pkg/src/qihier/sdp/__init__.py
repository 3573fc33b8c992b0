"""Dense block SDP modeling, solving and certificate checking."""
from .certificate import CertificateReport, verify_certificate
from .embed import ComplexEmbedding, embed_hermitian
from .model import Expr, SdpModel
from .problem import Block, SdpProblem
from .solver import (
    INFEASIBLE,
    MAX_ITERATIONS,
    NUMERICAL_FAILURE,
    OPTIMAL,
    SdpSolution,
    SolverOptions,
    presolve,
    solve,
)
from .textio import ProblemFormatError, dump_problem, dumps_problem, load_problem, loads_problem

__all__ = [
    "Block", "CertificateReport", "ComplexEmbedding", "Expr", "INFEASIBLE", "MAX_ITERATIONS",
    "NUMERICAL_FAILURE", "OPTIMAL", "ProblemFormatError", "SdpModel", "SdpProblem", "SdpSolution",
    "SolverOptions", "dump_problem", "dumps_problem", "embed_hermitian", "load_problem",
    "loads_problem", "presolve", "solve", "verify_certificate",
]
