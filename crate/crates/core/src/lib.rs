pub mod error;
pub mod experiments;
pub mod families;
pub mod hamilton_jacobi;
pub mod models;
pub mod quadrature;
pub mod quantization;
pub mod series;
pub mod symbol;
pub mod transport;
pub mod wkb;

pub use error::{Error, Result};
pub use series::{invert_map, MultiIndex, PowerSeries};
