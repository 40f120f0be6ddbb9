//! Kinodynamic temporal plan graphs with windowed replanning for executing
//! grid MAPF plans on robots with speed, acceleration and turning limits.

pub mod grid;
pub mod kinodynamics;
pub mod plan;
pub mod scenario;
pub mod ktpg;
pub mod tpg;
pub mod sim;
pub mod window;
pub mod instance;
pub mod experiment;
