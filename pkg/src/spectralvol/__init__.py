"""Spectral estimation of integrated volatility and covolatility from noisy, non-synchronous data."""

from .asymptotics import (AsymptoticTarget, NumericDomainError, acov_lmm, avar_icv, avar_icv_closed_form,
                          avar_icv_riemann, avar_iv, realized_covariance_baseline)
from .basis import BinGrid, SpectralArray, noise_norms, phi_norms, signal_loadings, spectral_statistics
from .linalg import (MatrixOpsContext, SingularMatrixError, commutation_matrix, kronecker,
                     symmetric_matrix_power, symmetrizer, unvec, vec)
from .montecarlo import McReport, coverage_analysis, relative_efficiency, run_monte_carlo, run_table1
from .multivariate import (adaptive_icv, adaptive_lmm, estimate_local_noise_levels, lmm_estimate,
                           lmm_weight_matrices, oracle_icv, oracle_lmm, pilot_covolatility, spectral_icv)
from .observations import ObservationSet
from .report import EstimateReport, InvalidReportError
from .simulation import ScenarioConfig, simulate
from .univariate import adaptive_iv, confidence_interval, oracle_iv, optimal_weights_1d, spectral_iv

__version__ = "0.1.0"
