pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod algebra;
pub mod error;
pub mod hvz;
pub mod lattice;
pub mod limits;
pub mod linalg;
pub mod density;
pub mod energy;
pub mod quad;
pub mod scf;
pub mod state;
pub mod structure;
pub mod vacuum;
