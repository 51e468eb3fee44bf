#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod expr;
pub mod systems;
pub mod hamiltonian;
pub mod ode;
pub mod manifold;
pub mod synthesis;
pub mod simulate;
pub mod observer;
