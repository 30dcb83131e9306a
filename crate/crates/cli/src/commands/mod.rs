pub mod benchmark;
pub mod gen_data;
pub mod register;
pub mod selftest;
pub mod train;
