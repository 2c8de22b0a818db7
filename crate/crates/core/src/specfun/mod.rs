//! Special functions and adaptive quadrature shared by every analytic expression.

mod gamma;
mod hermite;
mod hypergeometric;
mod quadrature;

pub use gamma::{gamma, log_gamma, pochhammer, recip_gamma};
pub use hermite::{hermite, hermite_table, HermiteConvention, MAX_HERMITE_ORDER};
pub use hypergeometric::gauss_2f1;
pub use quadrature::{integrate, integrate_with_breaks, Integral, QuadratureSpec};
