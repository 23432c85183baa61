//! Experience memory for grounding a vision-language planner in a simulated
//! tabletop robot.

pub mod embedding;
pub mod geometry;
pub mod memory;
pub mod remote;
pub mod action;
pub mod stm;
pub mod vlm;
pub mod world;
pub mod orchestrator;
