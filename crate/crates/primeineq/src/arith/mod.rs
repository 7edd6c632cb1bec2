//! Primes and the arithmetic functions around them.

pub mod bump;
pub mod sieve;
pub mod weights;

pub use bump::{
    bump_chi, c_rho_2, convolve_chi, lipschitz_box_approx, partition_of_unity, rho, smooth_majorant_minorant, Profile,
    SmoothBump, Window,
};
pub use sieve::{euler_phi, mobius, PrimeTable};
pub use weights::{
    big_w_of, local_von_mangoldt, local_von_mangoldt_plus, nu_weight, sieve_weight_lambda_rho, w_of,
    w_tricked_lambda, ArithError, SeqFn, SieveParams,
};
