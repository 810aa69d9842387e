"""Simulation and analysis of epsilon-consensus under unknown-but-bounded
measurement disturbances, with the lazy deadband protocol."""
from .topology import SwitchingSignal, Topology, active_edgeset, chain, neighbors, ring, star, validate
from .disturbance import Box, Disturbance, mu, mu_switched
from .protocol import control, lazy_sum
from .polyhedra import (PolyhedronSpec, distance_to_polyhedron, epsilon_bar, intersection_membership,
                        membership, tube_radius_L, witness_disturbance)
from .simulator import Scenario, Trajectory, integrate, two_agent_reference
from .analysis import consensus_report, envelope_bounds, estimate_q, lyapunov, spread, switched_tube_check

__version__ = "0.1.0"
