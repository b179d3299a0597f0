#![no_std]
// `num_traits::Float` supplies float math without std; whenever std is in
// the build graph the inherent methods take over and the import looks unused.
#![allow(unused_imports)]

extern crate alloc;

pub mod born_markov;
pub mod error;
pub mod exact;
pub mod langevin;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod special;

pub use error::{Error, Result};
pub use num_complex::Complex64;
