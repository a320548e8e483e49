//! Seeded random instances for the law and theorem suites.
//!
//! Everything here is deterministic given the generator state. Commuting
//! squares are produced constructively: the top chart, left lens and bottom
//! chart are drawn first and the right lens is solved for.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

use crate::det::{DetChart, DetInterface, DetLens, DetSquare, DetSystem};
use crate::finset::{FinMap, FinSet, PairMap};
use crate::stoch::{Dist, StochSystem};

/// A set `{p0, .., p(n-1)}`.
pub fn labelled_set(prefix: &str, n: usize) -> FinSet {
    FinSet::from_generated((0..n).map(|i| format!("{prefix}{i}")).collect())
}

fn random_map(rng: &mut impl Rng, dom: &FinSet, cod: &FinSet) -> FinMap {
    let table: Vec<usize> = (0..dom.len()).map(|_| rng.random_range(0..cod.len())).collect();
    FinMap::new(dom.clone(), cod.clone(), table).expect("in range")
}

fn random_pair_map(rng: &mut impl Rng, rows: &FinSet, cols: &FinSet, cod: &FinSet) -> PairMap {
    let table: Vec<usize> = (0..rows.len() * cols.len())
        .map(|_| rng.random_range(0..cod.len()))
        .collect();
    PairMap::new(rows.clone(), cols.clone(), cod.clone(), table).expect("in range")
}

/// Injective map when `|cod| >= |dom|`.
fn random_injection(rng: &mut impl Rng, n: usize, cod: usize) -> Vec<usize> {
    debug_assert!(cod >= n);
    let mut pool: Vec<usize> = (0..cod).collect();
    for i in 0..n {
        let j = rng.random_range(i..cod);
        pool.swap(i, j);
    }
    pool.truncate(n);
    pool
}

pub fn random_interface(rng: &mut impl Rng, tag: &str, max: usize) -> DetInterface {
    DetInterface::new(
        labelled_set(&format!("{tag}i"), rng.random_range(1..=max)),
        labelled_set(&format!("{tag}o"), rng.random_range(1..=max)),
    )
}

/// A system with at most `max` states, inputs and outputs (each at least one).
pub fn random_det_system(rng: &mut impl Rng, max: usize) -> DetSystem {
    let iface = random_interface(rng, "", max);
    random_system_on(rng, &iface, max)
}

pub fn random_system_on(rng: &mut impl Rng, iface: &DetInterface, max_states: usize) -> DetSystem {
    let states = labelled_set("s", rng.random_range(1..=max_states));
    let readout = random_map(rng, &states, &iface.outputs);
    let update = random_pair_map(rng, &states, &iface.inputs, &states);
    DetSystem::new(states, iface.clone(), readout, update).expect("consistent")
}

pub fn random_lens(rng: &mut impl Rng, source: &DetInterface, target: &DetInterface) -> DetLens {
    let fwd = random_map(rng, &source.outputs, &target.outputs);
    let bwd = random_pair_map(rng, &source.outputs, &target.inputs, &source.inputs);
    DetLens::new(source.clone(), target.clone(), fwd, bwd).expect("consistent")
}

/// A lens out of `source` into a fresh interface of size at most `max`.
pub fn random_lens_from(rng: &mut impl Rng, source: &DetInterface, tag: &str, max: usize) -> DetLens {
    let target = random_interface(rng, tag, max);
    random_lens(rng, source, &target)
}

pub fn random_chart(rng: &mut impl Rng, source: &DetInterface, target: &DetInterface) -> DetChart {
    let fwd = random_map(rng, &source.outputs, &target.outputs);
    let push = random_pair_map(rng, &source.outputs, &source.inputs, &target.inputs);
    DetChart::new(source.clone(), target.clone(), fwd, push).expect("consistent")
}

/// A chart whose forward map and every row of whose pushforward are
/// injective. Needs `target` at least as large as `source` in both parts.
pub fn random_injective_chart(rng: &mut impl Rng, source: &DetInterface, target: &DetInterface) -> DetChart {
    let (no, ni) = (source.outputs.len(), source.inputs.len());
    let fwd = random_injection(rng, no, target.outputs.len());
    let mut push = Vec::with_capacity(no * ni);
    for _ in 0..no {
        push.extend(random_injection(rng, ni, target.inputs.len()));
    }
    DetChart::new(
        source.clone(),
        target.clone(),
        FinMap::new(source.outputs.clone(), target.outputs.clone(), fwd).expect("in range"),
        PairMap::new(source.outputs.clone(), source.inputs.clone(), target.inputs.clone(), push)
            .expect("in range"),
    )
    .expect("consistent")
}

/// Solves for a right lens making the square commute, filling unconstrained
/// entries at random. Returns `None` when the constraints conflict.
pub fn solve_right_lens(
    rng: &mut impl Rng,
    top: &DetChart,
    bottom: &DetChart,
    left: &DetLens,
) -> Option<DetLens> {
    let src = top.target();
    let tgt = bottom.target();
    let unset = usize::MAX;
    let mut fwd = vec![unset; src.outputs.len()];
    for o in 0..top.source().outputs.len() {
        let want = bottom.fwd().apply(left.fwd().apply(o));
        let slot = &mut fwd[top.fwd().apply(o)];
        if *slot != unset && *slot != want {
            return None;
        }
        *slot = want;
    }
    let width = tgt.inputs.len();
    let mut bwd = vec![unset; src.outputs.len() * width];
    for o in 0..top.source().outputs.len() {
        for a in 0..left.target().inputs.len() {
            let want = top.push().get(o, left.bwd().get(o, a));
            let row = top.fwd().apply(o);
            let col = bottom.push().get(left.fwd().apply(o), a);
            let slot = &mut bwd[row * width + col];
            if *slot != unset && *slot != want {
                return None;
            }
            *slot = want;
        }
    }
    for v in fwd.iter_mut().filter(|v| **v == unset) {
        if tgt.outputs.is_empty() {
            return None;
        }
        *v = rng.random_range(0..tgt.outputs.len());
    }
    for v in bwd.iter_mut().filter(|v| **v == unset) {
        if src.inputs.is_empty() {
            return None;
        }
        *v = rng.random_range(0..src.inputs.len());
    }
    let fwd = FinMap::new(src.outputs.clone(), tgt.outputs.clone(), fwd).ok()?;
    let bwd = PairMap::new(src.outputs.clone(), tgt.inputs.clone(), src.inputs.clone(), bwd).ok()?;
    DetLens::new(src.clone(), tgt.clone(), fwd, bwd).ok()
}

/// An interface at least as large as `iface` (up to one extra element in each part).
fn grown(rng: &mut impl Rng, iface: &DetInterface, tag: &str) -> DetInterface {
    DetInterface::new(
        labelled_set(&format!("{tag}i"), iface.inputs.len() + rng.random_range(0..=1)),
        labelled_set(&format!("{tag}o"), iface.outputs.len() + rng.random_range(0..=1)),
    )
}

/// Completes a commuting square from an optional top chart and optional left
/// lens, drawing whatever is missing.
///
/// With `injective` set, every fresh chart is drawn injective, which makes
/// the right lens always solvable provided a given top chart is injective
/// as well.
pub fn complete_square<R: Rng>(
    rng: &mut R,
    top: Option<&DetChart>,
    left: Option<&DetLens>,
    injective: bool,
    max: usize,
) -> Option<DetSquare> {
    let corner = match (top, left) {
        (Some(t), _) => t.source().clone(),
        (None, Some(l)) => l.source().clone(),
        (None, None) => random_interface(rng, "a", max),
    };
    let chart = |rng: &mut R, s: &DetInterface, tag: &str| {
        if injective {
            let t = grown(rng, s, tag);
            random_injective_chart(rng, s, &t)
        } else {
            let t = random_interface(rng, tag, max);
            random_chart(rng, s, &t)
        }
    };
    let top = match top {
        Some(t) => t.clone(),
        None => chart(rng, &corner, "b"),
    };
    let left = match left {
        Some(l) => l.clone(),
        None => random_lens_from(rng, &corner, "c", max),
    };
    let bottom = chart(rng, left.target(), "d");
    let right = solve_right_lens(rng, &top, &bottom, &left)?;
    DetSquare::new(top, bottom, left, right).ok()
}

const ATTEMPTS: usize = 40;

/// Two commuting squares with `upper.bottom == lower.top`.
pub fn random_vertical_pair(rng: &mut impl Rng, max: usize) -> (DetSquare, DetSquare) {
    for attempt in 0.. {
        let injective = attempt >= ATTEMPTS / 2;
        let Some(upper) = complete_square(rng, None, None, injective, max) else {
            continue;
        };
        if let Some(lower) = complete_square(rng, Some(&upper.bottom), None, injective, max) {
            return (upper, lower);
        }
    }
    unreachable!()
}

/// Two commuting squares with `west.right == east.left`.
pub fn random_horizontal_pair(rng: &mut impl Rng, max: usize) -> (DetSquare, DetSquare) {
    for attempt in 0.. {
        let injective = attempt >= ATTEMPTS / 2;
        let Some(west) = complete_square(rng, None, None, injective, max) else {
            continue;
        };
        if let Some(east) = complete_square(rng, None, Some(&west.right), injective, max) {
            return (west, east);
        }
    }
    unreachable!()
}

pub fn random_square(rng: &mut impl Rng, max: usize) -> DetSquare {
    random_vertical_pair(rng, max).0
}

/// Breaks a commuting square by changing one entry of the top chart's
/// pushforward. Returns the broken square with the `(output, input)` pair
/// that [`crate::det::check_square`] must report, or `None` if no entry can
/// be changed (`|I2| < 2` or an empty boundary).
pub fn mutate_square(rng: &mut impl Rng, sq: &DetSquare) -> Option<(DetSquare, String, String)> {
    let o1 = sq.top.source().outputs.len();
    let i3 = sq.left.target().inputs.len();
    let i2 = sq.top.target().inputs.len();
    if o1 == 0 || i3 == 0 || i2 < 2 {
        return None;
    }
    let o = rng.random_range(0..o1);
    let a = rng.random_range(0..i3);
    let a1 = sq.left.bwd().get(o, a);
    let first = (0..i3).find(|&x| sq.left.bwd().get(o, x) == a1).expect("a itself");
    let old = sq.top.push().get(o, a1);
    let new = (old + rng.random_range(1..i2)) % i2;
    let mut broken = sq.clone();
    broken.top.push_mut().set(o, a1, new);
    Some((
        broken,
        sq.top.source().outputs.label(o).to_string(),
        sq.left.target().inputs.label(first).to_string(),
    ))
}

/// Changes one entry of a lens's backward table.
pub fn mutate_lens(rng: &mut impl Rng, lens: &DetLens) -> Option<DetLens> {
    let (no, ni, n_old) = (
        lens.source().outputs.len(),
        lens.target().inputs.len(),
        lens.source().inputs.len(),
    );
    if no == 0 || ni == 0 || n_old < 2 {
        return None;
    }
    let (o, i) = (rng.random_range(0..no), rng.random_range(0..ni));
    let old = lens.bwd().get(o, i);
    let mut out = lens.clone();
    out.bwd_mut().set(o, i, (old + rng.random_range(1..n_old)) % n_old);
    Some(out)
}

/// A distribution on `support` with denominators dividing a random value up to `max_denominator`.
pub fn random_dist(rng: &mut impl Rng, support: &FinSet, max_denominator: u32) -> Dist {
    let n = support.len();
    assert!(n > 0, "distribution on an empty set");
    let denom = rng.random_range(1..=max_denominator.max(1));
    // Split `denom` units among the states at random.
    let mut counts = vec![0u32; n];
    for _ in 0..denom {
        counts[rng.random_range(0..n)] += 1;
    }
    let d = BigInt::from(denom);
    let weights: Vec<BigRational> = counts
        .into_iter()
        .map(|c| BigRational::new(BigInt::from(c), d.clone()))
        .collect();
    debug_assert!(weights.iter().fold(BigRational::zero(), |a, w| a + w).is_one());
    Dist::new(support.clone(), weights).expect("normalised")
}

pub fn random_stoch_system(rng: &mut impl Rng, max: usize, max_denominator: u32) -> StochSystem {
    let iface = random_interface(rng, "", max);
    let states = labelled_set("s", rng.random_range(1..=max));
    let readout = random_map(rng, &states, &iface.outputs);
    let update = (0..states.len() * iface.inputs.len())
        .map(|_| random_dist(rng, &states, max_denominator))
        .collect();
    StochSystem::new(states, iface, readout, update).expect("consistent")
}
