//! A self-hostable issue-tracker bot that labels issues containing
//! self-admitted technical debt, mails the people who care, and nags about
//! issues that have been open too long.

pub mod cli;
pub mod clock;
pub mod commands;
pub mod config;
pub mod detection;
pub mod forge;
pub mod gateway;
pub mod lingering;
pub mod notifier;
pub mod orchestrator;
pub mod server;
