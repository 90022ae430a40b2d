pub mod annotations;
pub mod commands;
pub mod display;
pub mod files;
pub mod service;
