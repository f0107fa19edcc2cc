pub mod apps;
pub mod bench;
pub mod cli;
pub mod cluster;
pub mod comm;
pub mod framework;
pub mod overlay;
pub mod runtime;
pub mod simnet;
