pub mod conformal;
pub mod error;
pub mod field;
pub mod function_spaces;
pub mod geometry;
pub mod grid;
pub mod jet;
pub mod linalg;
pub mod models;
pub mod stencil;
pub mod webster;
pub mod yamabe;

pub use error::{CrError, Result};
pub use jet::{Jet, JetSpace, C64};
