"""Voter model dynamics: simulation, consensus-time bounds, correlation
matrices and penalised maximum-likelihood inference of the interaction
matrix."""
from .errors import (BipartiteOrReducible, CapExceeded, DomainError,
                     InsufficientData, NonConvergence, SelfLoopViolation,
                     SingularSystem, TooLargeForExact, UnsupportedMu,
                     VoterlabError)
from .model import (Graph, InteractionMatrix, build_matrix, complete_graph,
                    conductance, cycle_graph, graph_family, path_graph,
                    phi_A, psi_tilde, spectral_report, star_graph,
                    stationary_distribution)
from .simulate import (ExtendedTrace, InitialDistribution, NoisyModel,
                       Trajectory, read_trace, run_extended, run_to_consensus,
                       step, write_trace)

__version__ = "0.1.0"
