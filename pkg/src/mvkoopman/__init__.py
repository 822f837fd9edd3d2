"""Mean-field SDE simulation and data-driven transfer operators."""

from .core import (EmpiricalMeasure, MeasurePath, ModelSpec, PairDataSet, ParticleEnsemble,
                   TimeGrid, measure_expect, measure_lookup)
from .dictionary import Dictionary, indicator_1d, monomial, voronoi_sphere
from .edmd import (gram_matrix, koopman_matrix, perron_matrix, run_edmd, spectrum,
                   structure_matrix)
from .simulate import RngPlan, euler_step, simulate_decoupled, simulate_ips

__version__ = "0.1.0"
