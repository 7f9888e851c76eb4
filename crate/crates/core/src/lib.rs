pub mod cogspace;
pub mod neural;
pub mod partition;
pub mod pipeline;
pub mod tree;
