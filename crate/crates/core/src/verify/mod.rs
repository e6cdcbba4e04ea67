//! Evaluators and randomized verifiers for the curvature inequality, helper
//! inequalities, ball beta numbers, flat/non-flat classification, and the
//! diameter-mass martingale.

mod beta_ball;
mod classify;
mod curvature;
mod martingale;

pub use beta_ball::{beta_ball, beta_ball_grid_oracle};
pub use classify::{
    check_flat_excess, check_lemma8, classify_g_balls, cover_points_greedy, ClassifyParams,
    FamilyData, Flatness, GBallEntry, GClassification,
};
pub use curvature::{
    check_concave_power, check_power_curvature, curvature_lhs, curvature_rhs, verify_prop4,
    CurvatureConfig, Prop4Report, Prop4Witness,
};
pub use martingale::{
    build_martingale, jm_param, verify_martingale, MartingaleReport, MartingaleTree,
};
