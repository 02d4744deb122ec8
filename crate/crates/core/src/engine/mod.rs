//! Event-driven preemptive simulator and its trace format.

pub mod machine;
pub mod replay;
pub mod sim;
pub mod trace;

pub use machine::{MachineBank, MachineState, Member, Queue, QueueKey};
pub use replay::{replay_check, Divergence};
pub use sim::{next_crossing, run, simulate, Admission, Decision, Effect, Policy, ReleaseOutcome, Simulation};
pub use trace::{Event, RejectReason, Trace};
