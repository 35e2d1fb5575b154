"""Volterra-series models fitted by l_q-constrained least squares."""

from .data import DataError, Dataset, ingest_csv, write_csv
from .dictionary import (MultiIndex, VolterraStructure, build_regressors, count_params,
                         enumerate_terms, predict)
from .solver import (CoefficientVector, FitReport, QuadraticObjective, SolverOptions, fit,
                     lmo, lq_norm, project_l1)
from .tuning import TuningResult, tune_R

__version__ = "0.1.0"
