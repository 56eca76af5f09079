pub mod elliptic;
pub mod exec;
pub mod moebius;
pub mod poincare;
pub mod polylog;
pub mod psmeasure;
pub mod schottky;
pub mod sum;
