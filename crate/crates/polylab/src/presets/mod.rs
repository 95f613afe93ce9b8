pub mod crossover;
pub mod doob;
pub mod exponents;
pub mod localization;
pub mod scan;
pub mod verify;
