pub mod ahe;
pub mod bus;
pub mod codec;
pub mod fkg;
pub mod flsim;
pub mod group;
pub mod quant;
pub mod seeds;
pub mod sharing;
pub mod tensor;
pub mod wire;
