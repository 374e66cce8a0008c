//! Reference algorithms: greedy without a plan, exhaustive search, and
//! per-slot offline re-planning.

mod fullg;
mod slotoff;

pub use crate::engine::run_quickg;
pub use fullg::{full_embed, run_fullg, FullSearchOutcome, DEFAULT_BUDGET};
pub use slotoff::run_slotoff;
