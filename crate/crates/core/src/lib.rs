pub mod ndcore;
pub mod nets;
pub mod envs;
pub mod metrics;
pub mod seeding;
pub mod cli;
pub mod config;
pub mod trainers;
pub mod eval;
