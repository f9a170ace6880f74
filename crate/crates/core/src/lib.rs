//! Distribution locational marginal costs for feeders with EVs and PV inverters.

pub mod conic;
pub mod coordinator;
pub mod der;
pub mod error;
pub mod exactness;
pub mod feeder;
pub mod gen;
pub mod io;
pub mod opf;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod thermal;
pub mod units;

pub use error::{Error, Result};
