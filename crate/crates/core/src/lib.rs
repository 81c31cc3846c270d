pub mod model;
pub mod mpc;
pub mod prices;
pub mod qp;
pub mod rl;
pub mod train;
