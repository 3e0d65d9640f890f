pub mod builder;
pub mod apk;
pub mod blacklist;
pub mod bytecode;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod merger;
pub mod model;
pub mod patcher;
pub mod pool;
pub mod resolver;
pub mod stubgen;
