"""Durbin-Watson serial correlation test for ARX(p,1) processes under excited adaptive tracking."""

from arxdw.asymptotics import LimitMatrix, dw_limit, lambda_matrix, schur_det, tau2_theoretical
from arxdw.controller import (
    NoiseConfig,
    SimulationOverflow,
    SimulationTrace,
    control_step,
    reference_bounded,
    reference_constant,
    reference_zero,
    run_closed_loop,
    simulate_arrays,
)
from arxdw.dwtest import (
    TestReport,
    chi2_quantile_1df,
    chi2_sf_1df,
    dw_statistic,
    residuals,
    rho_bar,
    run_test,
    sigma2_hat,
    tau2_hat,
)
from arxdw.estimator import RlsState, delta_hat, rho_hat, rls_update, theta_hat
from arxdw.model import LiftedParameter, LoopState, SystemSpec, lift_parameter, noise_step, plant_step, recover_theta_rho
from arxdw.montecarlo import ExperimentConfig, RateTable, ks_distance, render_table, run_grid

__version__ = "0.1.0"
