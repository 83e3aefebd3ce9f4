//! Reverse-curriculum actor-critic training on a wadi-crossing combat
//! microworld.
//!
//! A single demonstration recorded in [`sim`] seeds a [`curriculum`] of
//! episode start points; [`training`] runs asynchronous actor-learners
//! against it and [`eval`] reproduces the casualty, distance and health
//! tables.

pub mod curriculum;
pub mod eval;
pub mod io;
pub mod policy;
pub mod sim;
pub mod trajectory;
pub mod training;
