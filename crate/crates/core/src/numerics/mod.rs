//! Numerical building blocks shared by the analysis modules.

pub mod fit;
pub mod fourier;
pub mod ode;
pub mod quad;
pub mod root;

pub use fit::{linear_fit, polynomial_fit, LinearFit};
pub use fourier::PeriodicGrid;
pub use ode::{Dopri5, OdeSystem, StepControl, Tolerances};
pub use quad::{integrate, QuadResult};
pub use root::bisect;
