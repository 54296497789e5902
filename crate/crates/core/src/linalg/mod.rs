//! Small linear-algebra kernels: tridiagonal Toeplitz operators, general
//! banded matrices, tridiagonal factorizations and matrix exponentials.

mod banded;
mod expm;
mod tridiag;

pub use banded::BandedMatrix;
pub use expm::{expm_action, expm_action_batch, expm_dense, ExpmActionStats};
pub use tridiag::{TridiagLu, TridiagOperator};
