pub mod average;
pub mod decode;
pub mod evaluate;
pub mod prepare;
pub mod train;
