//! HTTP gateway and command-line front end over the careflow system.

pub mod api;
pub mod cli;
pub mod config;
pub mod driver;
