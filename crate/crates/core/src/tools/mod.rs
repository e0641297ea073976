//! Lab-side tool implementations, rosters and shared helpers.

pub mod fuzzy;
pub mod lab_server;
pub mod lookup;
pub mod molecule_server;
pub mod pdf;
pub mod roster;
