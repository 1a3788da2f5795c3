"""File I/O, experiment runner, identity suites and the command line."""

from .experiment import METHODS, ExperimentConfig, load_matrix, run_experiment
from .mmio import MatrixMarketError, read_matrix_market
from .traces import TraceFile, export_trace, read_trace
from .verify import INVARIANTS, SUITES, Report, verify

__all__ = [
    "METHODS", "ExperimentConfig", "load_matrix", "run_experiment",
    "MatrixMarketError", "read_matrix_market",
    "TraceFile", "export_trace", "read_trace",
    "INVARIANTS", "SUITES", "Report", "verify",
]
