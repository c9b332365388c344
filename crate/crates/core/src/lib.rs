pub mod costmodel;
pub mod dolevyao;
pub mod primitives;
pub mod protocol;
pub mod simnet;
