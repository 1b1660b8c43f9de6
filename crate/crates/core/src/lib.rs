//! Covariance operators of Gaussian processes and fields written in a small
//! operator algebra, evaluated on midpoint grids, and compared by spectrum.

pub mod catalog;
pub mod equiv;
pub mod error;
pub mod gof;
pub mod grid;
pub mod mc;
pub mod opeval;
pub mod opexpr;
pub mod quad;
pub mod spectral;

pub use catalog::{covariance_expr, process, theorem_pairs, ProcessSpec, TheoremPair};
pub use equiv::{check_pair, run_suite, EquivVerdict, Mode, SuiteConfig};
pub use error::{Error, Result};
pub use gof::{gof_test, omega2, pvalue_imhof, rosenblatt_product, GofResult, Margin, Sample};
pub use grid::{make_grid, Grid};
pub use mc::{sample_sqnorm, two_sample_compare, McConfig};
pub use opeval::{atom_matrix, eval, DiscreteOp};
pub use opexpr::{format, lift, parse, Atom, OperatorExpr, Weight};
pub use spectral::{
    compare_spectra, nystrom_spectrum, pinned_sheet_spectrum, secular_rankone, sym_eig,
    RankOneProblem, Spectrum,
};
