//! Compiled package images: typed IR, binary format, and the per-host store.

pub mod image;
pub mod ir;
pub mod store;

pub use image::{compile, RunpackError, RunpackImage, FORMAT_VERSION, MAGIC};
pub use store::{Origin, PackStore, StoreError};
