//! Skip-connection fusion as an initial value problem.
//!
//! Each encoder stage `X_i` is a node of the integration. The memory flow
//! `Y` (`mem_channels × H × W`, zero at the first node) evolves under
//!
//! ```text
//! F(X_i, Y) = -Y + f(Y + g(X_i))
//! ```
//!
//! where `g` resizes `X_i` to full resolution and projects it to the memory
//! channels, and `f` is a per-pixel channel mixer followed by an activation.
//! The scheduler advances from node `i` to `i+1` with PC(AB_i, AM_i) while
//! `i < 4`, then PC(AB4, AM3), and finishes with one explicit step from the
//! last node. The step size is `1/L`.

mod checkpoint;
mod params;
mod schedule;
mod trace;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, MANIFEST_FILE};
pub use params::{FuseConfig, FuseParams, Projection};
pub use schedule::{
    fuse_forward, fuse_forward_order_capped, g_align, head, plan_schedule, rhs_eval, StageInput,
    MAX_ORDER,
};
pub use trace::{ScheduleTrace, TraceStep};
