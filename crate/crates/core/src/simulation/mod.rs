//! The Gaussian simulation design, Monte Carlo studies and exact
//! identification checks.

mod dgp;
mod identification;
mod seeds;
mod study;

pub use dgp::{simulate_dgp, DgpSpec, SimulatedData, Truth, DGP_DIM};
pub use identification::{identification_oracle, DiscreteCell, DiscreteLaw, IdentificationCheck};
pub use seeds::cell_seed;
pub use study::{
    parse_estimators, quadratic_compare, rmse_study, EstimatorTag, QrCompareConfig, QrCompareRow,
    QrCompareTable, RmseRow, RmseTable, StudyConfig,
};
