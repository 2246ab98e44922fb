//! Fredholm determinants, partition functions and generating functionals.

mod genfun;
mod nystrom;
mod partition;
mod testfn;
mod trapgrid;

pub use genfun::{
    build_kf, condensed_rate_functional, eigengap_check, expectation_from_genfun, flat_green_kernel,
    genfun_finite, genfun_normal_limit, log_genfun_contour, linear_statistic_mean_exact, log_genfun_finite, log_genfun_finite_detailed,
    log_genfun_normal_limit, log_xi_tilde_saddle_condensed, solve_fixed_point_modified, EigengapCheck, GenfunEvaluation, GenfunMethod,
    DEFAULT_EXPECTATION_STEP,
};
pub use nystrom::{
    complete_homogeneous, fredholm_det, log_complete_homogeneous, log_fredholm_det, phase_det_modulus, sym_trace_hn, vere_jones_check, vere_jones_circle,
    DiscretizedOperator, OperatorInput, PowerSums,
};
pub use partition::{
    default_n_max, log_xi_bruteforce, log_xi_contour_integral, log_xi_residue, log_xi_saddle_condensed,
    log_xi_saddle_normal, modified_power_sums, xi_bruteforce, xi_contour_integral, xi_saddle_condensed,
    xi_saddle_normal, TAIL_RTOL,
};
pub use testfn::{TestFunction, DEFAULT_GRID_NODES};
pub(crate) use partition::number_log_weights;
