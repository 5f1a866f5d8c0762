//! Sequence files, format conversion, and synthetic motion.

pub mod convert;
pub mod seqfile;
pub mod synthetic;

pub use seqfile::{read_dir, read_sequence, write_sequence};
pub use synthetic::{apply_random_rigid, generate_synthetic, Mode, SyntheticSpec};
