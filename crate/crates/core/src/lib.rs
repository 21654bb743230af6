//! Competition of `n` microbial species for one growth-limiting substrate in
//! a chemostat, with species-specific removal rates and substrate-dependent
//! growth yields.
//!
//! * [`model`] defines growth laws, yield laws, species and scenarios.
//! * [`analysis`] finds break-even concentrations and catalogs equilibria.
//! * [`conditions`] checks the sufficient conditions for global convergence
//!   to the single-survivor equilibrium and computes witnesses for them.
//! * [`lyapunov`] evaluates the Lyapunov functions behind those conditions.
//! * [`sim`] integrates the equations and inspects trajectories.
//! * [`cli`] implements the `chemostat` command-line tool.

pub mod analysis;
pub mod cli;
pub mod conditions;
pub(crate) mod extended;
pub mod lyapunov;
pub mod model;
pub mod numerics;
pub mod presets;
pub mod sim;

pub use analysis::{BreakEven, EquilibriumCatalog, Stability};
pub use model::{GrowthLaw, Scenario, Species, YieldLaw};
