//! Parameters, layers, initialization, optimization and checkpoints.

mod adam;
mod checkpoint;
mod init;
mod layers;
mod params;
mod schedule;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use init::orthogonal_init;
pub use layers::{BatchNorm, Conv2d, Linear, BN_MOMENTUM};
pub use params::{Ctx, ParamStore};
pub use schedule::LrSchedule;
