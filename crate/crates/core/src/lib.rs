pub mod cli;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod mapping;
pub mod numerics;
pub mod planner;
pub mod scenario;
