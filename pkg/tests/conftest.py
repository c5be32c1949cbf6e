import numpy as np
import pytest

from slipgait.library import build_library
from slipgait.model import ModelParams
from slipgait.solver import SolverOptions, solve
from slipgait.transcription import build_gait_nlp


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def gait_solution(params):
    """Converged gait NLP at 0.4 m/s (problem object and solve report)."""
    nlp = build_gait_nlp(params, 0.4)
    report = solve(nlp.as_problem(), nlp.initial_guess(), SolverOptions(max_outer=40))
    assert report.converged, report.status
    return nlp, report


@pytest.fixture(scope="session")
def mini_library(params):
    """Two-entry library (0.3 and 0.4 m/s) for sampler and environment tests."""
    return build_library(params, speeds=[0.3, 0.4])
