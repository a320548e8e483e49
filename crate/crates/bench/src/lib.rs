//! Seeded inputs shared by the benchmarks.

use lensdyn_core::det::{DetLens, DetSystem};
use lensdyn_core::gen;
use lensdyn_core::ode::{compose_lens_ode, tensor_ode};
use lensdyn_core::{OdeLens, OdeSystem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A random system with at most `max` states, inputs and outputs, and a lens out of it.
pub fn wired_pair(seed: u64, max: usize) -> (DetSystem, DetLens) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = gen::random_det_system(&mut rng, max);
    let lens = gen::random_lens_from(&mut rng, sys.interface(), "w", max);
    (sys, lens)
}

pub fn lotka_volterra() -> OdeSystem {
    let rabbit =
        OdeSystem::parse(&["r"], &["rabbit"], &["alpha", "beta"], &["r"], &["alpha*r - beta*r"]).expect("valid");
    let fox = OdeSystem::parse(&["f"], &["fox"], &["gamma", "delta"], &["f"], &["gamma*f - delta*f"]).expect("valid");
    let lens = OdeLens::parse(
        &["rabbit", "fox"],
        &["alpha", "beta", "gamma", "delta"],
        &["rabbit", "fox"],
        &["alpha", "c", "d", "delta"],
        &["rabbit", "fox"],
        &["alpha", "c*fox", "d*rabbit", "delta"],
    )
    .expect("valid");
    compose_lens_ode(&lens, &tensor_ode(&rabbit, &fox).expect("disjoint")).expect("matching names")
}
