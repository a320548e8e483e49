//! The monadic doctrine for the finite probability monad.
//!
//! Transition probabilities are exact rationals, so normalisation and the
//! embedding of deterministic systems hold as equalities.
//!
//! Sampling uses ChaCha8 (`rand_chacha`), seeded with `seed_from_u64`. Each
//! transition draws one `u64` `x`, sets `u = x / 2^64` exactly, and picks the
//! first state (in canonical order) whose cumulative weight exceeds `u`.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::det::{DetError, DetInterface, DetLens, DetSystem};
use crate::finset::{tuple_label, Family, FinMap, FinSet, SetError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StochError {
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Det(#[from] DetError),
    #[error("negative weight {weight} for `{label}`")]
    NegativeWeight { label: String, weight: String },
    #[error("weights sum to {0}, not 1")]
    NotNormalised(String),
    #[error("distribution has {found} weights for a support of {expected}")]
    WrongLength { expected: usize, found: usize },
    #[error("expected {expected} transition distributions, found {found}")]
    WrongUpdateCount { expected: usize, found: usize },
}

/// A probability distribution on a finite set.
#[derive(Clone, PartialEq, Eq)]
pub struct Dist {
    support: FinSet,
    weights: Vec<BigRational>,
}

impl Dist {
    pub fn new(support: FinSet, weights: Vec<BigRational>) -> Result<Self, StochError> {
        if weights.len() != support.len() {
            return Err(StochError::WrongLength {
                expected: support.len(),
                found: weights.len(),
            });
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| w.is_negative()) {
            return Err(StochError::NegativeWeight {
                label: support.label(i).to_string(),
                weight: w.to_string(),
            });
        }
        let total: BigRational = weights.iter().sum();
        if !total.is_one() {
            return Err(StochError::NotNormalised(total.to_string()));
        }
        Ok(Dist { support, weights })
    }

    /// Builds a distribution from `(label, weight)` pairs; omitted labels get weight 0.
    pub fn from_pairs<'a, I>(support: FinSet, pairs: I) -> Result<Self, StochError>
    where
        I: IntoIterator<Item = (&'a str, BigRational)>,
    {
        let mut weights = vec![BigRational::zero(); support.len()];
        for (label, w) in pairs {
            let i = support.lookup(label)?;
            if !weights[i].is_zero() {
                return Err(SetError::DuplicateLabel(label.to_string()).into());
            }
            weights[i] = w;
        }
        Dist::new(support, weights)
    }

    pub fn dirac(support: &FinSet, at: usize) -> Self {
        let mut weights = vec![BigRational::zero(); support.len()];
        weights[at] = BigRational::one();
        Dist {
            support: support.clone(),
            weights,
        }
    }

    pub fn support(&self) -> &FinSet {
        &self.support
    }

    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    pub fn weight(&self, label: &str) -> Result<&BigRational, SetError> {
        Ok(&self.weights[self.support.lookup(label)?])
    }

    pub fn is_dirac_at(&self, at: usize) -> bool {
        self.weights[at].is_one()
    }

    pub fn total(&self) -> BigRational {
        self.weights.iter().sum()
    }

    /// Recomputes the total mass and compares it with one exactly.
    pub fn is_normalised(&self) -> bool {
        self.total().is_one()
    }

    /// Index sampled by inverse CDF at `u ∈ [0, 1)`.
    pub fn quantile(&self, u: &BigRational) -> usize {
        let mut acc = BigRational::zero();
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if &acc > u {
                return i;
            }
        }
        unreachable!("weights sum to one and u < 1")
    }

    fn product(&self, other: &Dist) -> Dist {
        let support = self.support.product(&other.support);
        let weights = self
            .weights
            .iter()
            .flat_map(|a| other.weights.iter().map(move |b| a * b))
            .collect();
        Dist { support, weights }
    }
}

impl fmt::Debug for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(
                self.weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| !w.is_zero())
                    .map(|(i, w)| (self.support.label(i), w.to_string())),
            )
            .finish()
    }
}

/// A Markov system: readout `S -> O` and update `S x I -> D(S)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StochSystem {
    states: FinSet,
    interface: DetInterface,
    readout: FinMap,
    update: Vec<Dist>,
}

impl StochSystem {
    /// `update` is row-major: entry `s * |I| + i` is the distribution of the
    /// next state from `s` on input `i`.
    pub fn new(
        states: FinSet,
        interface: DetInterface,
        readout: FinMap,
        update: Vec<Dist>,
    ) -> Result<Self, StochError> {
        if readout.dom() != &states || readout.cod() != &interface.outputs {
            return Err(SetError::BoundaryMismatch {
                left: format!("readout {} -> {}", readout.dom(), readout.cod()),
                right: format!("states {} and outputs {}", states, interface.outputs),
            }
            .into());
        }
        let expected = states.len() * interface.inputs.len();
        if update.len() != expected {
            return Err(StochError::WrongUpdateCount {
                expected,
                found: update.len(),
            });
        }
        if let Some(d) = update.iter().find(|d| d.support != states) {
            return Err(SetError::BoundaryMismatch {
                left: d.support.to_string(),
                right: states.to_string(),
            }
            .into());
        }
        Ok(StochSystem {
            states,
            interface,
            readout,
            update,
        })
    }

    pub fn states(&self) -> &FinSet {
        &self.states
    }

    pub fn interface(&self) -> &DetInterface {
        &self.interface
    }

    pub fn inputs(&self) -> &FinSet {
        &self.interface.inputs
    }

    pub fn outputs(&self) -> &FinSet {
        &self.interface.outputs
    }

    pub fn readout(&self) -> &FinMap {
        &self.readout
    }

    pub fn transition(&self, state: usize, input: usize) -> &Dist {
        &self.update[state * self.inputs().len() + input]
    }

    pub fn transitions(&self) -> &[Dist] {
        &self.update
    }
}

/// `update'(s, i') = update(s, bwd(readout(s), i'))`, `readout' = fwd ∘ readout`.
pub fn compose_lens_stoch(lens: &DetLens, sys: &StochSystem) -> Result<StochSystem, StochError> {
    if lens.source() != &sys.interface {
        return Err(DetError::InterfaceMismatch {
            expected: lens.source().to_string(),
            found: sys.interface.to_string(),
        }
        .into());
    }
    let readout = sys.readout.then(lens.fwd())?;
    let ni = lens.target().inputs.len();
    let mut update = Vec::with_capacity(sys.states.len() * ni);
    for s in 0..sys.states.len() {
        let o = sys.readout.apply(s);
        for i in 0..ni {
            update.push(sys.transition(s, lens.bwd().get(o, i)).clone());
        }
    }
    Ok(StochSystem {
        states: sys.states.clone(),
        interface: lens.target().clone(),
        readout,
        update,
    })
}

/// One step of the chain: `d'(t) = Σ_s d(s) · update(s, input)(t)`.
pub fn step_dist(sys: &StochSystem, d: &Dist, input: &str) -> Result<Dist, StochError> {
    let i = sys.inputs().lookup(input)?;
    if d.support != sys.states {
        return Err(SetError::BoundaryMismatch {
            left: d.support.to_string(),
            right: sys.states.to_string(),
        }
        .into());
    }
    let mut out = vec![BigRational::zero(); sys.states.len()];
    for (s, ws) in d.weights.iter().enumerate() {
        if ws.is_zero() {
            continue;
        }
        for (t, wt) in sys.transition(s, i).weights.iter().enumerate() {
            if !wt.is_zero() {
                out[t] += ws * wt;
            }
        }
    }
    Ok(Dist {
        support: sys.states.clone(),
        weights: out,
    })
}

/// Samples a path with a caller-owned generator.
pub fn sample_path(
    sys: &StochSystem,
    start: &str,
    word: &[&str],
    rng: &mut impl RngCore,
) -> Result<Vec<String>, StochError> {
    let inputs: Vec<usize> = word
        .iter()
        .map(|w| sys.inputs().lookup(w))
        .collect::<Result<_, _>>()?;
    let mut s = sys.states.lookup(start)?;
    let scale: BigInt = BigInt::one() << 64u32;
    let mut path = vec![sys.states.label(s).to_string()];
    for i in inputs {
        let u = BigRational::new(BigInt::from(rng.next_u64()), scale.clone());
        s = sys.transition(s, i).quantile(&u);
        path.push(sys.states.label(s).to_string());
    }
    Ok(path)
}

/// Samples a path from `start` reading `word`, reproducibly from `seed`.
pub fn simulate_stoch(
    sys: &StochSystem,
    start: &str,
    word: &[&str],
    seed: u64,
) -> Result<Vec<String>, StochError> {
    sample_path(sys, start, word, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Views a deterministic system as a Markov system with Dirac transitions.
pub fn embed_det(sys: &DetSystem) -> StochSystem {
    let ni = sys.inputs().len();
    let update = (0..sys.states().len() * ni)
        .map(|k| Dist::dirac(sys.states(), sys.step(k / ni, k % ni)))
        .collect();
    StochSystem {
        states: sys.states().clone(),
        interface: sys.interface().clone(),
        readout: sys.readout().clone(),
        update,
    }
}

/// Parallel product with independent transitions.
pub fn tensor_stoch(a: &StochSystem, b: &StochSystem) -> StochSystem {
    let states = a.states.product(&b.states);
    let inputs = a.inputs().product(b.inputs());
    let outputs = a.outputs().product(b.outputs());
    let (nsb, nib, nob) = (b.states.len(), b.inputs().len(), b.outputs().len());
    let table: Vec<usize> = (0..states.len())
        .map(|s| a.readout.apply(s / nsb) * nob + b.readout.apply(s % nsb))
        .collect();
    let readout = FinMap::new(states.clone(), outputs.clone(), table).expect("in range");
    let mut update = Vec::with_capacity(states.len() * inputs.len());
    for s in 0..states.len() {
        for i in 0..inputs.len() {
            let mut d = a
                .transition(s / nsb, i / nib)
                .product(b.transition(s % nsb, i % nib));
            d.support = states.clone();
            update.push(d);
        }
    }
    StochSystem {
        states,
        interface: DetInterface::new(inputs, outputs),
        readout,
        update,
    }
}

/// States fixed with probability one: `{(s, i) : update(s, i) = δ_s}` over `O x I`.
pub fn dirac_steady_span(sys: &StochSystem) -> Family {
    let base = sys.outputs().product(sys.inputs());
    let ni = sys.inputs().len();
    let mut labels = Vec::new();
    let mut proj = Vec::new();
    for s in 0..sys.states.len() {
        for i in 0..ni {
            if sys.transition(s, i).is_dirac_at(s) {
                labels.push(tuple_label(&[sys.states.label(s), sys.inputs().label(i)]));
                proj.push(sys.readout.apply(s) * ni + i);
            }
        }
    }
    let total = FinSet::from_generated(labels);
    Family::new(FinMap::new(total, base, proj).expect("in range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::det::{compose_lens_system, run_word, steady_span};

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn flipflop() -> DetSystem {
        DetSystem::from_tables(
            &["s0", "s1"],
            &["set", "reset", "hold"],
            &["lo", "hi"],
            &[("s0", "lo"), ("s1", "hi")],
            &[
                ("s0", "set", "s1"),
                ("s0", "reset", "s0"),
                ("s0", "hold", "s0"),
                ("s1", "set", "s1"),
                ("s1", "reset", "s0"),
                ("s1", "hold", "s1"),
            ],
        )
        .unwrap()
    }

    /// Two states; on `go` stay with probability `p`, otherwise switch.
    fn lazy_chain(p: BigRational) -> StochSystem {
        let states = FinSet::new(["a", "b"]).unwrap();
        let go = FinSet::new(["go"]).unwrap();
        let rest = BigRational::one() - &p;
        StochSystem::new(
            states.clone(),
            DetInterface::new(go, states.clone()),
            FinMap::identity(&states),
            vec![
                Dist::new(states.clone(), vec![p.clone(), rest.clone()]).unwrap(),
                Dist::new(states.clone(), vec![rest, p]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn distributions_must_normalise() {
        let s = FinSet::new(["a", "b"]).unwrap();
        assert!(matches!(
            Dist::new(s.clone(), vec![q(1, 2), q(1, 3)]),
            Err(StochError::NotNormalised(_))
        ));
        assert!(matches!(
            Dist::new(s.clone(), vec![q(3, 2), q(-1, 2)]),
            Err(StochError::NegativeWeight { .. })
        ));
        let d = Dist::from_pairs(s, [("b", q(1, 1))]).unwrap();
        assert!(d.is_dirac_at(1));
    }

    #[test]
    fn dirac_steps_to_its_transition() {
        let sys = lazy_chain(q(1, 3));
        let d = Dist::dirac(sys.states(), 0);
        assert_eq!(&step_dist(&sys, &d, "go").unwrap(), sys.transition(0, 0));
        assert!(step_dist(&sys, &d, "stop").is_err());
    }

    #[test]
    fn uniform_is_invariant_under_a_swap() {
        let sys = lazy_chain(BigRational::zero());
        let uniform = Dist::new(sys.states().clone(), vec![q(1, 2), q(1, 2)]).unwrap();
        assert_eq!(step_dist(&sys, &uniform, "go").unwrap(), uniform);
    }

    #[test]
    fn half_split_is_not_a_dirac_steady_state() {
        let sys = lazy_chain(q(1, 2));
        assert!(dirac_steady_span(&sys).total().is_empty());
        let sticky = lazy_chain(BigRational::one());
        assert_eq!(dirac_steady_span(&sticky).total().len(), 2);
    }

    #[test]
    fn embedding_matches_deterministic_constructions() {
        let ff = flipflop();
        let e = embed_det(&ff);
        assert_eq!(dirac_steady_span(&e), steady_span(&ff));
        let id = DetLens::identity(ff.interface());
        assert_eq!(compose_lens_stoch(&id, &e).unwrap(), e);

        let outer = DetInterface::new(FinSet::new(["tick"]).unwrap(), FinSet::new(["star"]).unwrap());
        let fb = DetLens::from_tables(
            ff.interface(),
            &outer,
            &[("lo", "star"), ("hi", "star")],
            &[("lo", "tick", "set"), ("hi", "tick", "reset")],
        )
        .unwrap();
        assert_eq!(
            compose_lens_stoch(&fb, &e).unwrap(),
            embed_det(&compose_lens_system(&fb, &ff).unwrap())
        );
        assert_eq!(embed_det(&DetSystem::unit()).states().len(), 1);
    }

    #[test]
    fn dirac_paths_follow_the_table() {
        let ff = flipflop();
        let word = ["set", "hold", "reset", "reset", "set"];
        let det: Vec<String> = run_word(&ff, "s0", &word).unwrap().into_iter().map(|(s, _)| s).collect();
        for seed in [0, 1, 99] {
            assert_eq!(simulate_stoch(&embed_det(&ff), "s0", &word, seed).unwrap(), det);
        }
        let mut d = Dist::dirac(ff.states(), 0);
        for w in word {
            d = step_dist(&embed_det(&ff), &d, w).unwrap();
        }
        assert!(d.is_dirac_at(ff.states().lookup(det.last().unwrap()).unwrap()));
    }

    #[test]
    fn seeded_paths_repeat() {
        let sys = lazy_chain(q(2, 3));
        let word = vec!["go"; 50];
        let a = simulate_stoch(&sys, "a", &word, 5).unwrap();
        assert_eq!(a, simulate_stoch(&sys, "a", &word, 5).unwrap());
        assert_ne!(a, simulate_stoch(&sys, "a", &word, 6).unwrap());
    }

    #[test]
    fn empirical_frequencies_match() {
        let p = q(7, 10);
        let sys = lazy_chain(p);
        let word = vec!["go"; 100_000];
        let path = simulate_stoch(&sys, "a", &word, 0).unwrap();
        let stays = path.windows(2).filter(|w| w[0] == w[1]).count();
        let freq = stays as f64 / word.len() as f64;
        assert!((freq - 0.7).abs() < 0.01, "{freq}");
    }

    #[test]
    fn quantile_boundaries() {
        let s = FinSet::new(["a", "b", "c"]).unwrap();
        let d = Dist::new(s, vec![q(1, 4), BigRational::zero(), q(3, 4)]).unwrap();
        assert_eq!(d.quantile(&BigRational::zero()), 0);
        assert_eq!(d.quantile(&q(1, 4)), 2);
        assert_eq!(d.quantile(&q(99, 100)), 2);
    }
}
