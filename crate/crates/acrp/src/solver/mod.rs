pub mod bnb;
pub mod partition;
pub mod qp;
pub mod twod;

pub use bnb::{branch_and_bound, BnbParams, BnbResult, BnbStatus, Event};
pub use partition::PiecewisePartition;
pub use twod::{check_speed_violations, local_nlp_fixed_z, solve_2d, SeparationKind, SolveOutcome, SolveParams, SolveStatus};
