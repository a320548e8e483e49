//! The deterministic doctrine: finite Moore machines.
//!
//! A system with states `S`, inputs `I` and outputs `O` is a readout
//! `S -> O` with an update `S x I -> S`. Interfaces are plain pairs of sets,
//! so a lens `(I, O) ⇆ (I', O')` is a forward map `O -> O'` with a backward
//! map `O x I' -> I`, and a chart `(I, O) ⇉ (I', O')` is a forward map
//! `O -> O'` with a pushforward `O x I -> I'`.
//!
//! Covariant morphisms out of a system that exposes its whole state are
//! enumerated as families over the finite set of charts between the two
//! interfaces. Steady states are represented by [`walking_cycle`]`(1)` and
//! period-`k` orbits by [`walking_cycle`]`(k)`.

use thiserror::Error;

use crate::finset::{
    apply_span_to_family, families_isomorphic, tuple_label, Family, FinMap, FinSet, IsoOutcome,
    PairMap, SetError, Span,
};

/// Largest hom-set or state-map space that will be enumerated.
pub const ENUMERATION_LIMIT: u128 = 20_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetError {
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("representing system must expose its entire state (readout is not the identity)")]
    NotRepresenting,
    #[error("period must be at least 1, got {0}")]
    BadPeriod(usize),
    #[error("enumeration of {0} candidates exceeds the limit of {ENUMERATION_LIMIT}")]
    TooLarge(u128),
    #[error("interface mismatch: expected {expected}, found {found}")]
    InterfaceMismatch { expected: String, found: String },
}

/// Inputs and outputs of a deterministic system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetInterface {
    pub inputs: FinSet,
    pub outputs: FinSet,
}

impl DetInterface {
    pub fn new(inputs: FinSet, outputs: FinSet) -> Self {
        DetInterface { inputs, outputs }
    }

    /// `({*}, {*})`.
    pub fn unit() -> Self {
        let star = FinSet::from_generated(vec!["*".to_string()]);
        DetInterface::new(star.clone(), star)
    }

    fn expect_eq(&self, other: &DetInterface) -> Result<(), DetError> {
        if self == other {
            Ok(())
        } else {
            Err(DetError::InterfaceMismatch {
                expected: self.to_string(),
                found: other.to_string(),
            })
        }
    }
}

impl std::fmt::Display for DetInterface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(inputs {}, outputs {})", self.inputs, self.outputs)
    }
}

/// A finite deterministic Moore machine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetSystem {
    states: FinSet,
    interface: DetInterface,
    readout: FinMap,
    update: PairMap,
}

impl DetSystem {
    pub fn new(
        states: FinSet,
        interface: DetInterface,
        readout: FinMap,
        update: PairMap,
    ) -> Result<Self, DetError> {
        states.expect_eq(readout.dom())?;
        interface.outputs.expect_eq(readout.cod())?;
        states.expect_eq(update.rows())?;
        interface.inputs.expect_eq(update.cols())?;
        states.expect_eq(update.cod())?;
        Ok(DetSystem {
            states,
            interface,
            readout,
            update,
        })
    }

    /// Builds a system from label tables; `update` lists `(state, input, next)`.
    pub fn from_tables(
        states: &[&str],
        inputs: &[&str],
        outputs: &[&str],
        readout: &[(&str, &str)],
        update: &[(&str, &str, &str)],
    ) -> Result<Self, DetError> {
        let s = FinSet::new(states.iter().copied())?;
        let i = FinSet::new(inputs.iter().copied())?;
        let o = FinSet::new(outputs.iter().copied())?;
        let r = FinMap::from_pairs(s.clone(), o.clone(), readout.iter().copied())?;
        let u = pair_map_from_triples(s.clone(), i.clone(), s.clone(), update)?;
        DetSystem::new(s, DetInterface::new(i, o), r, u)
    }

    /// The one-state system on the unit interface.
    pub fn unit() -> Self {
        let iface = DetInterface::unit();
        let star = iface.inputs.clone();
        DetSystem {
            readout: FinMap::identity(&star),
            update: PairMap::from_fn(star.clone(), star.clone(), star.clone(), |_, _| 0),
            states: star,
            interface: iface,
        }
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

    pub fn update(&self) -> &PairMap {
        &self.update
    }

    pub fn step(&self, state: usize, input: usize) -> usize {
        self.update.get(state, input)
    }
}

/// A lens `(I, O) ⇆ (I', O')`: `fwd: O -> O'` and `bwd: O x I' -> I`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetLens {
    source: DetInterface,
    target: DetInterface,
    fwd: FinMap,
    bwd: PairMap,
}

impl DetLens {
    pub fn new(
        source: DetInterface,
        target: DetInterface,
        fwd: FinMap,
        bwd: PairMap,
    ) -> Result<Self, DetError> {
        source.outputs.expect_eq(fwd.dom())?;
        target.outputs.expect_eq(fwd.cod())?;
        source.outputs.expect_eq(bwd.rows())?;
        target.inputs.expect_eq(bwd.cols())?;
        source.inputs.expect_eq(bwd.cod())?;
        Ok(DetLens {
            source,
            target,
            fwd,
            bwd,
        })
    }

    /// Builds a lens from label tables; `bwd` lists `(output, new input, old input)`.
    pub fn from_tables(
        source: &DetInterface,
        target: &DetInterface,
        fwd: &[(&str, &str)],
        bwd: &[(&str, &str, &str)],
    ) -> Result<Self, DetError> {
        let f = FinMap::from_pairs(source.outputs.clone(), target.outputs.clone(), fwd.iter().copied())?;
        let b = pair_map_from_triples(
            source.outputs.clone(),
            target.inputs.clone(),
            source.inputs.clone(),
            bwd,
        )?;
        DetLens::new(source.clone(), target.clone(), f, b)
    }

    pub fn identity(iface: &DetInterface) -> Self {
        DetLens {
            source: iface.clone(),
            target: iface.clone(),
            fwd: FinMap::identity(&iface.outputs),
            bwd: PairMap::from_fn(
                iface.outputs.clone(),
                iface.inputs.clone(),
                iface.inputs.clone(),
                |_, i| i,
            ),
        }
    }

    pub fn source(&self) -> &DetInterface {
        &self.source
    }

    pub fn target(&self) -> &DetInterface {
        &self.target
    }

    pub fn fwd(&self) -> &FinMap {
        &self.fwd
    }

    pub fn bwd(&self) -> &PairMap {
        &self.bwd
    }

    pub(crate) fn bwd_mut(&mut self) -> &mut PairMap {
        &mut self.bwd
    }
}

/// A chart `(I, O) ⇉ (I', O')`: `fwd: O -> O'` and `push: O x I -> I'`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetChart {
    source: DetInterface,
    target: DetInterface,
    fwd: FinMap,
    push: PairMap,
}

impl DetChart {
    pub fn new(
        source: DetInterface,
        target: DetInterface,
        fwd: FinMap,
        push: PairMap,
    ) -> Result<Self, DetError> {
        source.outputs.expect_eq(fwd.dom())?;
        target.outputs.expect_eq(fwd.cod())?;
        source.outputs.expect_eq(push.rows())?;
        source.inputs.expect_eq(push.cols())?;
        target.inputs.expect_eq(push.cod())?;
        Ok(DetChart {
            source,
            target,
            fwd,
            push,
        })
    }

    /// Builds a chart from label tables; `push` lists `(output, input, new input)`.
    pub fn from_tables(
        source: &DetInterface,
        target: &DetInterface,
        fwd: &[(&str, &str)],
        push: &[(&str, &str, &str)],
    ) -> Result<Self, DetError> {
        let f = FinMap::from_pairs(source.outputs.clone(), target.outputs.clone(), fwd.iter().copied())?;
        let p = pair_map_from_triples(
            source.outputs.clone(),
            source.inputs.clone(),
            target.inputs.clone(),
            push,
        )?;
        DetChart::new(source.clone(), target.clone(), f, p)
    }

    pub fn identity(iface: &DetInterface) -> Self {
        DetChart {
            source: iface.clone(),
            target: iface.clone(),
            fwd: FinMap::identity(&iface.outputs),
            push: PairMap::from_fn(
                iface.outputs.clone(),
                iface.inputs.clone(),
                iface.inputs.clone(),
                |_, i| i,
            ),
        }
    }

    pub fn source(&self) -> &DetInterface {
        &self.source
    }

    pub fn target(&self) -> &DetInterface {
        &self.target
    }

    pub fn fwd(&self) -> &FinMap {
        &self.fwd
    }

    pub fn push(&self) -> &PairMap {
        &self.push
    }

    pub(crate) fn push_mut(&mut self) -> &mut PairMap {
        &mut self.push
    }
}

/// A square with charts along the top and bottom and lenses down the sides.
///
/// ```text
///  (I1,O1) --top--> (I2,O2)
///     |                |
///   left             right
///     v                v
///  (I3,O3) -bottom-> (I4,O4)
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetSquare {
    pub top: DetChart,
    pub bottom: DetChart,
    pub left: DetLens,
    pub right: DetLens,
}

impl DetSquare {
    pub fn new(top: DetChart, bottom: DetChart, left: DetLens, right: DetLens) -> Result<Self, DetError> {
        top.source.expect_eq(&left.source)?;
        top.target.expect_eq(&right.source)?;
        bottom.source.expect_eq(&left.target)?;
        bottom.target.expect_eq(&right.target)?;
        Ok(DetSquare {
            top,
            bottom,
            left,
            right,
        })
    }
}

/// Result of [`check_square`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SquareVerdict {
    Commutes,
    /// `right.fwd ∘ top.fwd` and `bottom.fwd ∘ left.fwd` disagree at `output`.
    OutputsDiffer { output: String },
    /// The input condition fails at `(output, input)` with `output ∈ O1`, `input ∈ I3`.
    InputsDiffer { output: String, input: String },
}

impl SquareVerdict {
    pub fn commutes(&self) -> bool {
        matches!(self, SquareVerdict::Commutes)
    }
}

impl std::fmt::Display for SquareVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SquareVerdict::Commutes => write!(f, "commutes"),
            SquareVerdict::OutputsDiffer { output } => {
                write!(f, "output condition fails at output `{output}`")
            }
            SquareVerdict::InputsDiffer { output, input } => {
                write!(f, "input condition fails at (output `{output}`, input `{input}`)")
            }
        }
    }
}

pub(crate) fn pair_map_from_triples(
    rows: FinSet,
    cols: FinSet,
    cod: FinSet,
    triples: &[(&str, &str, &str)],
) -> Result<PairMap, SetError> {
    let mut nested: Vec<(&str, Vec<(&str, &str)>)> = Vec::new();
    for &(r, c, v) in triples {
        match nested.iter_mut().find(|(k, _)| *k == r) {
            Some((_, inner)) => inner.push((c, v)),
            None => nested.push((r, vec![(c, v)])),
        }
    }
    PairMap::from_nested(rows, cols, cod, nested)
}

/// Wires `sys` through `lens`: `readout' = fwd ∘ readout` and
/// `update'(s, i') = update(s, bwd(readout(s), i'))`.
pub fn compose_lens_system(lens: &DetLens, sys: &DetSystem) -> Result<DetSystem, DetError> {
    lens.source.expect_eq(&sys.interface)?;
    let readout = sys.readout.then(&lens.fwd)?;
    let update = PairMap::from_fn(
        sys.states.clone(),
        lens.target.inputs.clone(),
        sys.states.clone(),
        |s, i| sys.step(s, lens.bwd.get(sys.readout.apply(s), i)),
    );
    Ok(DetSystem {
        states: sys.states.clone(),
        interface: lens.target.clone(),
        readout,
        update,
    })
}

/// `l2 ∘ l1`: `fwd = l2.fwd ∘ l1.fwd`, `bwd(o, i'') = l1.bwd(o, l2.bwd(l1.fwd(o), i''))`.
pub fn compose_lenses(l1: &DetLens, l2: &DetLens) -> Result<DetLens, DetError> {
    l1.target.expect_eq(&l2.source)?;
    let fwd = l1.fwd.then(&l2.fwd)?;
    let bwd = PairMap::from_fn(
        l1.source.outputs.clone(),
        l2.target.inputs.clone(),
        l1.source.inputs.clone(),
        |o, i| l1.bwd.get(o, l2.bwd.get(l1.fwd.apply(o), i)),
    );
    Ok(DetLens {
        source: l1.source.clone(),
        target: l2.target.clone(),
        fwd,
        bwd,
    })
}

/// `c2 ∘ c1`: `fwd = c2.fwd ∘ c1.fwd`, `push(o, a) = c2.push(c1.fwd(o), c1.push(o, a))`.
pub fn compose_charts(c1: &DetChart, c2: &DetChart) -> Result<DetChart, DetError> {
    c1.target.expect_eq(&c2.source)?;
    let fwd = c1.fwd.then(&c2.fwd)?;
    let push = PairMap::from_fn(
        c1.source.outputs.clone(),
        c1.source.inputs.clone(),
        c2.target.inputs.clone(),
        |o, a| c2.push.get(c1.fwd.apply(o), c1.push.get(o, a)),
    );
    Ok(DetChart {
        source: c1.source.clone(),
        target: c2.target.clone(),
        fwd,
        push,
    })
}

/// Parallel product: states, inputs and outputs are cartesian products and
/// readout and update act componentwise.
pub fn tensor_systems(a: &DetSystem, b: &DetSystem) -> DetSystem {
    let states = a.states.product(&b.states);
    let inputs = a.inputs().product(b.inputs());
    let outputs = a.outputs().product(b.outputs());
    let (nsb, nib, nob) = (b.states.len(), b.inputs().len(), b.outputs().len());
    let readout = FinMap::from_fn(states.clone(), outputs.clone(), |s| {
        a.readout.apply(s / nsb) * nob + b.readout.apply(s % nsb)
    });
    let update = PairMap::from_fn(states.clone(), inputs.clone(), states.clone(), |s, i| {
        a.step(s / nsb, i / nib) * nsb + b.step(s % nsb, i % nib)
    });
    DetSystem {
        states,
        interface: DetInterface::new(inputs, outputs),
        readout,
        update,
    }
}

/// Stacks `upper` on top of `lower`; `upper.bottom` must equal `lower.top`.
pub fn paste_vertical(upper: &DetSquare, lower: &DetSquare) -> Result<DetSquare, DetError> {
    if upper.bottom != lower.top {
        return Err(DetError::InterfaceMismatch {
            expected: "lower square's top chart equal to the upper square's bottom chart".into(),
            found: "a different chart".into(),
        });
    }
    DetSquare::new(
        upper.top.clone(),
        lower.bottom.clone(),
        compose_lenses(&upper.left, &lower.left)?,
        compose_lenses(&upper.right, &lower.right)?,
    )
}

/// Places `east` to the right of `west`; `west.right` must equal `east.left`.
pub fn paste_horizontal(west: &DetSquare, east: &DetSquare) -> Result<DetSquare, DetError> {
    if west.right != east.left {
        return Err(DetError::InterfaceMismatch {
            expected: "east square's left lens equal to the west square's right lens".into(),
            found: "a different lens".into(),
        });
    }
    DetSquare::new(
        compose_charts(&west.top, &east.top)?,
        compose_charts(&west.bottom, &east.bottom)?,
        west.left.clone(),
        east.right.clone(),
    )
}

/// Checks that a square commutes.
///
/// Outputs: `right.fwd(top.fwd(o)) = bottom.fwd(left.fwd(o))` for `o ∈ O1`.
/// Inputs: `top.push(o, left.bwd(o, a)) = right.bwd(top.fwd(o), bottom.push(left.fwd(o), a))`
/// for `o ∈ O1`, `a ∈ I3`. The first failure in canonical order is reported.
pub fn check_square(sq: &DetSquare) -> SquareVerdict {
    let (top, bottom, left, right) = (&sq.top, &sq.bottom, &sq.left, &sq.right);
    let o1 = &top.source.outputs;
    for o in 0..o1.len() {
        if right.fwd.apply(top.fwd.apply(o)) != bottom.fwd.apply(left.fwd.apply(o)) {
            return SquareVerdict::OutputsDiffer {
                output: o1.label(o).to_string(),
            };
        }
    }
    let i3 = &left.target.inputs;
    for o in 0..o1.len() {
        for a in 0..i3.len() {
            let upper = top.push.get(o, left.bwd.get(o, a));
            let lower = right
                .bwd
                .get(top.fwd.apply(o), bottom.push.get(left.fwd.apply(o), a));
            if upper != lower {
                return SquareVerdict::InputsDiffer {
                    output: o1.label(o).to_string(),
                    input: i3.label(a).to_string(),
                };
            }
        }
    }
    SquareVerdict::Commutes
}

/// Checks that `phi: S -> S'` is a morphism of systems over a shared
/// interface: it preserves readouts and commutes with updates.
pub fn check_system_morphism(phi: &FinMap, sys: &DetSystem, target: &DetSystem) -> Result<bool, DetError> {
    sys.interface.expect_eq(&target.interface)?;
    sys.states.expect_eq(phi.dom())?;
    target.states.expect_eq(phi.cod())?;
    for s in 0..sys.states.len() {
        if target.readout.apply(phi.apply(s)) != sys.readout.apply(s) {
            return Ok(false);
        }
        for i in 0..sys.inputs().len() {
            if phi.apply(sys.step(s, i)) != target.step(phi.apply(s), i) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The `k`-state cycle `c0 -> c1 -> ... -> c(k-1) -> c0` on the single input
/// `*`, exposing its state. `walking_cycle(1)` is the trivial automaton.
pub fn walking_cycle(k: usize) -> Result<DetSystem, DetError> {
    if k == 0 {
        return Err(DetError::BadPeriod(k));
    }
    let states = FinSet::from_generated((0..k).map(|j| format!("c{j}")).collect());
    let star = FinSet::from_generated(vec!["*".to_string()]);
    Ok(DetSystem {
        readout: FinMap::identity(&states),
        update: PairMap::from_fn(states.clone(), star.clone(), states.clone(), |j, _| (j + 1) % k),
        interface: DetInterface::new(star, states.clone()),
        states,
    })
}

/// Charts from a representing interface `(I_r, S_r)` into `target`.
///
/// A chart is the digit vector `[g(s), g♯(s, i_1), .., g♯(s, i_m)]` for each
/// `s ∈ S_r` in order, enumerated lexicographically. Its label is the tuple
/// of the per-state tuples.
struct ChartSpace {
    n: usize,
    m: usize,
    outputs: FinSet,
    inputs: FinSet,
    count: usize,
}

impl ChartSpace {
    fn new(rep: &DetInterface, target: &DetInterface) -> Result<Self, DetError> {
        let n = rep.outputs.len();
        let m = rep.inputs.len();
        let count = checked_power(target.outputs.len(), n)?
            .checked_mul(checked_power(target.inputs.len(), n * m)?)
            .filter(|&c| c <= ENUMERATION_LIMIT)
            .ok_or(DetError::TooLarge(u128::MAX))?;
        Ok(ChartSpace {
            n,
            m,
            outputs: target.outputs.clone(),
            inputs: target.inputs.clone(),
            count: count as usize,
        })
    }

    fn radix(&self, pos: usize) -> usize {
        if pos % (self.m + 1) == 0 {
            self.outputs.len()
        } else {
            self.inputs.len()
        }
    }

    fn width(&self) -> usize {
        self.n * (self.m + 1)
    }

    fn index(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .enumerate()
            .fold(0, |acc, (pos, &d)| acc * self.radix(pos) + d)
    }

    fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut d = vec![0; self.width()];
        for pos in (0..self.width()).rev() {
            let r = self.radix(pos);
            d[pos] = index % r;
            index /= r;
        }
        d
    }

    fn label(&self, digits: &[usize]) -> String {
        let per_state: Vec<String> = digits
            .chunks(self.m + 1)
            .map(|chunk| {
                let mut parts = vec![self.outputs.label(chunk[0])];
                parts.extend(chunk[1..].iter().map(|&i| self.inputs.label(i)));
                tuple_label(&parts)
            })
            .collect();
        tuple_label(&per_state)
    }

    fn set(&self) -> FinSet {
        FinSet::from_generated((0..self.count).map(|c| self.label(&self.digits(c))).collect())
    }
}

fn checked_power(base: usize, exp: usize) -> Result<u128, DetError> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base as u128).ok_or(DetError::TooLarge(u128::MAX))?;
        if acc > ENUMERATION_LIMIT {
            return Err(DetError::TooLarge(acc));
        }
    }
    Ok(acc)
}

/// Mixed-radix counter in lexicographic order.
pub(crate) struct Odometer {
    radices: Vec<usize>,
    current: Option<Vec<usize>>,
}

impl Odometer {
    pub(crate) fn new(radices: Vec<usize>) -> Self {
        let current = if radices.contains(&0) {
            None
        } else {
            Some(vec![0; radices.len()])
        };
        Odometer { radices, current }
    }
}

impl Iterator for Odometer {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().expect("present");
        let mut pos = cur.len();
        loop {
            if pos == 0 {
                self.current = None;
                break;
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < self.radices[pos] {
                break;
            }
            cur[pos] = 0;
        }
        Some(out)
    }
}

/// The set of charts from `rep` into `target`, in canonical order.
pub fn hom_set(rep: &DetInterface, target: &DetInterface) -> Result<FinSet, DetError> {
    Ok(ChartSpace::new(rep, target)?.set())
}

/// Covariant morphisms out of `rep`, which must expose its entire state,
/// fibered over the charts `rep.interface ⇉ sys.interface`.
///
/// An element is a state map `φ: S_r -> S` with a chart input part `g♯`
/// such that `φ(u_r(s, i)) = u(φ(s), g♯(s, i))`; its chart is
/// `(readout ∘ φ, g♯)`. Elements are labelled `φ|g♯` and listed with `φ`
/// varying slowest.
pub fn representable_span(rep: &DetSystem, sys: &DetSystem) -> Result<Family, DetError> {
    if !rep.readout.is_identity() {
        return Err(DetError::NotRepresenting);
    }
    let space = ChartSpace::new(&rep.interface, &sys.interface)?;
    let base = space.set();
    let n = rep.states.len();
    let m = rep.inputs().len();
    let n_inputs = sys.inputs().len();
    checked_power(sys.states.len(), n)?;

    let mut labels = Vec::new();
    let mut proj = Vec::new();
    for phi in Odometer::new(vec![sys.states.len(); n]) {
        // Admissible input choices for each (s, i) of the representing system.
        let choices: Vec<Vec<usize>> = (0..n * m)
            .map(|k| {
                let (s, ir) = (k / m, k % m);
                let want = phi[rep.step(s, ir)];
                (0..n_inputs).filter(|&i| sys.step(phi[s], i) == want).collect()
            })
            .collect();
        let phi_label = tuple_label(&phi.iter().map(|&s| sys.states.label(s)).collect::<Vec<_>>());
        for pick in Odometer::new(choices.iter().map(Vec::len).collect()) {
            let sharp: Vec<usize> = pick.iter().enumerate().map(|(k, &c)| choices[k][c]).collect();
            let mut digits = Vec::with_capacity(space.width());
            for s in 0..n {
                digits.push(sys.readout.apply(phi[s]));
                digits.extend_from_slice(&sharp[s * m..(s + 1) * m]);
            }
            let sharp_label =
                tuple_label(&sharp.iter().map(|&i| sys.inputs().label(i)).collect::<Vec<_>>());
            labels.push(tuple_label(&[phi_label.as_str(), sharp_label.as_str()]));
            proj.push(space.index(&digits));
        }
    }
    let total = FinSet::from_generated(labels);
    Ok(Family::new(FinMap::new(total, base, proj)?))
}

/// `(o, i)`-steady states: `{(s, i) : update(s, i) = s}` over `O x I`.
pub fn steady_span(sys: &DetSystem) -> Family {
    let base = sys.outputs().product(sys.inputs());
    let ni = sys.inputs().len();
    let mut labels = Vec::new();
    let mut proj = Vec::new();
    for s in 0..sys.states.len() {
        for i in 0..ni {
            if sys.step(s, i) == s {
                labels.push(tuple_label(&[sys.states.label(s), sys.inputs().label(i)]));
                proj.push(sys.readout.apply(s) * ni + i);
            }
        }
    }
    let total = FinSet::from_generated(labels);
    Family::new(FinMap::from_fn(total, base, |z| proj[z]))
}

/// Period-dividing-`k` orbits, represented by [`walking_cycle`]`(k)`.
///
/// The base is the set of `k`-tuples of `(output, input)` pairs.
pub fn periodic_orbit_span(sys: &DetSystem, k: usize) -> Result<Family, DetError> {
    representable_span(&walking_cycle(k)?, sys)
}

/// The span of chart sets induced by a lens, for charts out of `rep`.
///
/// Its apex is the set of charts into `(I', O)`; the left leg feeds the
/// inputs through `bwd` and the right leg maps outputs through `fwd`.
pub fn lens_to_span(lens: &DetLens, rep: &DetInterface) -> Result<Span, DetError> {
    let src = ChartSpace::new(rep, &lens.source)?;
    let tgt = ChartSpace::new(rep, &lens.target)?;
    let mid = ChartSpace::new(
        rep,
        &DetInterface::new(lens.target.inputs.clone(), lens.source.outputs.clone()),
    )?;
    let apex = mid.set();
    let step = mid.m + 1;
    let mut left = Vec::with_capacity(mid.count);
    let mut right = Vec::with_capacity(mid.count);
    for c in 0..mid.count {
        let d = mid.digits(c);
        let mut l = d.clone();
        let mut r = d;
        for chunk in 0..mid.n {
            let o = l[chunk * step];
            for pos in chunk * step + 1..(chunk + 1) * step {
                l[pos] = lens.bwd.get(o, l[pos]);
            }
            r[chunk * step] = lens.fwd.apply(o);
        }
        left.push(src.index(&l));
        right.push(tgt.index(&r));
    }
    Ok(Span::new(
        FinMap::new(apex.clone(), src.set(), left)?,
        FinMap::new(apex, tgt.set(), right)?,
    )?)
}

/// Compares the structures represented by `rep` on the wired system with
/// the image of the unwired system's structures under the lens span.
pub fn check_representable_theorem(
    lens: &DetLens,
    sys: &DetSystem,
    rep: &DetSystem,
) -> Result<IsoOutcome, DetError> {
    let wired = compose_lens_system(lens, sys)?;
    let direct = representable_span(rep, &wired)?;
    let span = lens_to_span(lens, &rep.interface)?;
    let transported = apply_span_to_family(&span, &representable_span(rep, sys)?)?;
    Ok(families_isomorphic(&direct, &transported)?)
}

/// [`check_representable_theorem`] for period-`k` orbits.
pub fn check_matrix_theorem(lens: &DetLens, sys: &DetSystem, k: usize) -> Result<IsoOutcome, DetError> {
    check_representable_theorem(lens, sys, &walking_cycle(k)?)
}

/// Runs `sys` from `start` on `word`, returning each visited state with its output.
pub fn run_word(sys: &DetSystem, start: &str, word: &[&str]) -> Result<Vec<(String, String)>, DetError> {
    let mut s = sys.states.lookup(start)?;
    let mut out = Vec::with_capacity(word.len() + 1);
    let visit = |s: usize| {
        (
            sys.states.label(s).to_string(),
            sys.outputs().label(sys.readout.apply(s)).to_string(),
        )
    };
    out.push(visit(s));
    for w in word {
        s = sys.step(s, sys.inputs().lookup(w)?);
        out.push(visit(s));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn flipflop() -> DetSystem {
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

    fn feedback(ff: &DetSystem) -> DetLens {
        let outer = DetInterface::new(
            FinSet::new(["tick"]).unwrap(),
            FinSet::new(["star"]).unwrap(),
        );
        DetLens::from_tables(
            ff.interface(),
            &outer,
            &[("lo", "star"), ("hi", "star")],
            &[("lo", "tick", "set"), ("hi", "tick", "reset")],
        )
        .unwrap()
    }

    fn nonempty_fibers(f: &Family) -> Vec<(String, Vec<String>)> {
        f.base()
            .iter()
            .map(|b| (b.to_string(), f.fiber(b).unwrap().into_iter().map(String::from).collect::<Vec<_>>()))
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }

    #[test]
    fn feedback_turns_flipflop_into_oscillator() {
        let ff = flipflop();
        let osc = compose_lens_system(&feedback(&ff), &ff).unwrap();
        assert_eq!(osc.update().get_label("s0", "tick").unwrap(), "s1");
        assert_eq!(osc.update().get_label("s1", "tick").unwrap(), "s0");
        assert_eq!(osc.readout().apply_label("s0").unwrap(), "star");
    }

    #[test]
    fn identity_lens_is_neutral() {
        let ff = flipflop();
        let id = DetLens::identity(ff.interface());
        assert_eq!(compose_lens_system(&id, &ff).unwrap(), ff);
        let l = feedback(&ff);
        assert_eq!(compose_lenses(&id, &l).unwrap(), l);
        assert_eq!(compose_lenses(&l, &DetLens::identity(l.target())).unwrap(), l);
    }

    #[test]
    fn composition_rejects_wrong_boundary() {
        let ff = flipflop();
        let l = feedback(&ff);
        let osc = compose_lens_system(&l, &ff).unwrap();
        assert!(matches!(
            compose_lens_system(&l, &osc),
            Err(DetError::InterfaceMismatch { .. })
        ));
        assert!(compose_lenses(&l, &l).is_err());
    }

    #[test]
    fn one_state_systems_stay_one_state() {
        let unit = DetSystem::unit();
        let lens = DetLens::identity(unit.interface());
        assert_eq!(compose_lens_system(&lens, &unit).unwrap().states().len(), 1);
    }

    #[test]
    fn flipflop_steady_states() {
        let ff = flipflop();
        let steady = steady_span(&ff);
        assert_eq!(
            nonempty_fibers(&steady),
            vec![
                ("lo|reset".to_string(), vec!["s0|reset".to_string()]),
                ("lo|hold".to_string(), vec!["s0|hold".to_string()]),
                ("hi|set".to_string(), vec!["s1|set".to_string()]),
                ("hi|hold".to_string(), vec!["s1|hold".to_string()]),
            ]
        );
        assert_eq!(representable_span(&walking_cycle(1).unwrap(), &ff).unwrap(), steady);
    }

    #[test]
    fn oscillator_orbits() {
        let ff = flipflop();
        let osc = compose_lens_system(&feedback(&ff), &ff).unwrap();
        assert!(steady_span(&osc).total().is_empty());
        let orbits = periodic_orbit_span(&osc, 2).unwrap();
        assert_eq!(
            orbits.fiber("(star|tick)|(star|tick)").unwrap(),
            vec!["(s0|s1)|(tick|tick)", "(s1|s0)|(tick|tick)"]
        );
        assert_eq!(orbits.total().len(), 2);
    }

    #[test]
    fn flipflop_two_cycle() {
        let ff = flipflop();
        let orbits = periodic_orbit_span(&ff, 2).unwrap();
        // The input at position j is read in state φ(j): s1 --reset--> s0 --set--> s1.
        assert_eq!(
            orbits.fiber("(hi|reset)|(lo|set)").unwrap(),
            vec!["(s1|s0)|(reset|set)"]
        );
        assert!(orbits.fiber("(hi|set)|(lo|reset)").unwrap().is_empty());
    }

    #[test]
    fn representing_system_must_expose_state() {
        let ff = flipflop();
        assert_eq!(
            representable_span(&ff, &ff).unwrap_err(),
            DetError::NotRepresenting
        );
        assert_eq!(walking_cycle(0).unwrap_err(), DetError::BadPeriod(0));
        assert_eq!(periodic_orbit_span(&ff, 0).unwrap_err(), DetError::BadPeriod(0));
    }

    #[test]
    fn empty_state_space() {
        let empty = DetSystem::from_tables(&[], &["a"], &["x"], &[], &[]).unwrap();
        let orbits = periodic_orbit_span(&empty, 2).unwrap();
        assert!(orbits.total().is_empty());
        assert_eq!(orbits.base().len(), 1);
        assert!(steady_span(&empty).total().is_empty());
    }

    #[test]
    fn feedback_lens_span() {
        let ff = flipflop();
        let l = feedback(&ff);
        let span = lens_to_span(&l, walking_cycle(1).unwrap().interface()).unwrap();
        assert_eq!(span.apex().labels(), ["lo|tick", "hi|tick"]);
        assert_eq!(span.left().apply_label("lo|tick").unwrap(), "lo|set");
        assert_eq!(span.left().apply_label("hi|tick").unwrap(), "hi|reset");
        assert_eq!(span.right().apply_label("lo|tick").unwrap(), "star|tick");
        assert_eq!(span.right().apply_label("hi|tick").unwrap(), "star|tick");
        for row in crate::finset::span_to_matrix(&span) {
            assert!(row.iter().sum::<u64>() <= 1);
        }
    }

    #[test]
    fn identity_lens_span_is_identity() {
        let ff = flipflop();
        let rep = walking_cycle(2).unwrap();
        let span = lens_to_span(&DetLens::identity(ff.interface()), rep.interface()).unwrap();
        assert!(span.left().is_identity() && span.right().is_identity());
    }

    #[test]
    fn feedback_matrix_theorem_is_vacuous_at_k1() {
        let ff = flipflop();
        let l = feedback(&ff);
        let span = lens_to_span(&l, walking_cycle(1).unwrap().interface()).unwrap();
        let transported = apply_span_to_family(&span, &steady_span(&ff)).unwrap();
        assert!(transported.total().is_empty());
        for k in 1..=3 {
            assert!(check_matrix_theorem(&l, &ff, k).unwrap().is_iso());
        }
    }

    #[test]
    fn run_word_steps_the_table() {
        let ff = flipflop();
        let run = run_word(&ff, "s0", &["set", "hold", "reset"]).unwrap();
        let states: Vec<&str> = run.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(states, ["s0", "s1", "s1", "s0"]);
        assert_eq!(run_word(&ff, "s1", &[]).unwrap(), vec![("s1".into(), "hi".into())]);
        assert!(run_word(&ff, "s9", &[]).is_err());
        assert!(run_word(&ff, "s0", &["jump"]).is_err());
    }

    #[test]
    fn system_morphisms() {
        let ff = flipflop();
        assert!(check_system_morphism(&FinMap::identity(ff.states()), &ff, &ff).unwrap());

        let relabelled = DetSystem::from_tables(
            &["t1", "t0"],
            &["set", "reset", "hold"],
            &["lo", "hi"],
            &[("t0", "lo"), ("t1", "hi")],
            &[
                ("t0", "set", "t1"),
                ("t0", "reset", "t0"),
                ("t0", "hold", "t0"),
                ("t1", "set", "t1"),
                ("t1", "reset", "t0"),
                ("t1", "hold", "t1"),
            ],
        )
        .unwrap();
        let iso = FinMap::from_pairs(
            ff.states().clone(),
            relabelled.states().clone(),
            [("s0", "t0"), ("s1", "t1")],
        )
        .unwrap();
        assert!(check_system_morphism(&iso, &ff, &relabelled).unwrap());

        let collapsed = DetSystem::from_tables(
            &["only"],
            &["set", "reset", "hold"],
            &["lo", "hi"],
            &[("only", "lo")],
            &[("only", "set", "only"), ("only", "reset", "only"), ("only", "hold", "only")],
        )
        .unwrap();
        let squash = FinMap::new(ff.states().clone(), collapsed.states().clone(), vec![0, 0]).unwrap();
        assert!(!check_system_morphism(&squash, &ff, &collapsed).unwrap());
    }

    #[test]
    fn identity_square_commutes() {
        let ff = flipflop();
        let iface = ff.interface();
        let sq = DetSquare::new(
            DetChart::identity(iface),
            DetChart::identity(iface),
            DetLens::identity(iface),
            DetLens::identity(iface),
        )
        .unwrap();
        assert_eq!(check_square(&sq), SquareVerdict::Commutes);
    }

    #[test]
    fn square_boundaries_are_validated() {
        let ff = flipflop();
        let l = feedback(&ff);
        let iface = ff.interface();
        assert!(DetSquare::new(
            DetChart::identity(iface),
            DetChart::identity(iface),
            l.clone(),
            l
        )
        .is_err());
    }

    #[test]
    fn tensor_cardinalities() {
        let ff = flipflop();
        let cyc = walking_cycle(3).unwrap();
        let t = tensor_systems(&ff, &cyc);
        assert_eq!(t.states().len(), 6);
        assert_eq!(t.inputs().len(), 3);
        let s = tensor_systems(&ff, &DetSystem::unit());
        assert_eq!(s.states().len(), ff.states().len());
        assert_eq!(steady_span(&s).total().len(), steady_span(&ff).total().len());
    }

    #[test]
    fn odometer_orders_lexicographically() {
        let all: Vec<Vec<usize>> = Odometer::new(vec![2, 3]).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[3], vec![1, 0]);
        assert_eq!(Odometer::new(vec![]).count(), 1);
        assert_eq!(Odometer::new(vec![3, 0]).count(), 0);
    }
}
