//! Kitchen scheduling as an MDP, plus the machinery to turn an expert's
//! Q-function into short, countable tips for human crews.

pub mod eval;
pub mod humans;
pub mod kitchen;
pub mod mdp;
pub mod solvers;
pub mod tips;
pub mod trace;
