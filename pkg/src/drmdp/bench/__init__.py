"""Benchmarks, ground-truth simulation and independent oracles."""
from .gmm import GaussianMixture1D, em_fit, estimate
from .machine import BenchmarkInstance, MachineReplacementConfig, generate_machine_problem
from .maze import MazeConfig, generate_maze_problem
from .simulate import GroundTruth, SimulationReport, mean_reduction_check, simulate
