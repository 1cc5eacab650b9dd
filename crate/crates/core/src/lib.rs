pub mod algo;
pub mod circuit;
pub mod corrsamp;
pub mod crypto;
pub mod dist;
pub mod harness;
pub mod hashing;
pub mod learners;
pub mod parallel;
pub mod tape;
pub mod transforms;
