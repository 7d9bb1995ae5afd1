//! Planning for a master dual-arm robot manipulating a tethered tool while an
//! assistant dual-arm robot repositions a cable slider to keep the taut cable
//! clear of robots and environment.

pub mod ams;
pub mod bench;
pub mod cable;
pub mod export;
pub mod geometry;
pub mod kinematics;
pub mod rrt;
pub mod scenario;
pub mod svg;
pub mod tms;
pub mod util;
pub mod world;
