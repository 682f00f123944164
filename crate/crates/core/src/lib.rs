//! Translator and distributed runtime for the mini-hello language.
//!
//! Source packages are checked by [`frontend`], lowered into content-hashed
//! [`runpack`] images, and executed by [`engine::Engine`] instances that talk to
//! each other over [`net`]. [`sim`] runs many engines in one process on a
//! virtual clock.

pub mod bytes;
pub mod config;
pub mod engine;
pub mod error;
pub mod frontend;
pub mod groups;
pub mod net;
pub mod rt;
pub mod runpack;
pub mod security;
pub mod sim;
pub mod stdlib;
pub mod value;

pub use config::EngineConfig;
pub use engine::Engine;
pub use error::{EngineError, FaultCode};
pub use frontend::{translate, Diagnostic, FrontendError, SourceUnit};
pub use runpack::{compile, PackStore, RunpackImage};
pub use security::{check_access, Access, CredentialSet, Privilege, PrivilegeMask, Sid};
pub use value::{ObjectRef, Value};
