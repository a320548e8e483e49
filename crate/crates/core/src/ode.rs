//! The continuous doctrine on Euclidean state spaces.
//!
//! A system has state variables `S = R^n`, outputs `O = R^m` and parameters
//! `R^k`. Its readout and vector field are expressions; wiring along a lens
//! is substitution, and solving uses classical fixed-step RK4.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;

use thiserror::Error;

use crate::expr::{is_identifier, Compiled, EvalError, Expr};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("`{0}` is not a valid identifier")]
    BadIdentifier(String),
    #[error("identifier `{0}` is declared more than once")]
    DuplicateIdentifier(String),
    #[error("{what}: expected {expected} entries, found {found}")]
    WrongLength {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("{what} uses undeclared identifiers: {}", .missing.join(", "))]
    Undeclared { what: String, missing: Vec<String> },
    #[error("names do not match: missing {}", .missing.join(", "))]
    NameMismatch { missing: Vec<String> },
    #[error("identifiers shared by both systems: {}", .0.join(", "))]
    Collision(Vec<String>),
    #[error("evaluating {component}: {source}")]
    Eval {
        component: String,
        #[source]
        source: EvalError,
    },
    #[error("non-finite value at t = {time}")]
    NonFinite { time: f64 },
    #[error("bad time grid: {0}")]
    BadGrid(String),
    #[error("parameter signal: {0}")]
    BadSignal(String),
    #[error("trajectory has {0} points; at least 3 are needed")]
    TooShort(usize),
    #[error("writing csv: {0}")]
    Csv(String),
}

fn check_identifiers<'a>(lists: impl IntoIterator<Item = &'a [String]>) -> Result<(), OdeError> {
    let mut seen = HashSet::new();
    for name in lists.into_iter().flatten() {
        if !is_identifier(name) {
            return Err(OdeError::BadIdentifier(name.clone()));
        }
        if !seen.insert(name.as_str()) {
            return Err(OdeError::DuplicateIdentifier(name.clone()));
        }
    }
    Ok(())
}

fn check_scope(what: &str, exprs: &[Expr], scope: &[&[String]]) -> Result<(), OdeError> {
    let allowed: HashSet<&str> = scope.iter().flat_map(|l| l.iter().map(String::as_str)).collect();
    let missing: BTreeSet<String> = exprs
        .iter()
        .flat_map(Expr::free_vars)
        .filter(|v| !allowed.contains(v.as_str()))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(OdeError::Undeclared {
            what: what.to_string(),
            missing: missing.into_iter().collect(),
        })
    }
}

fn check_len(what: &str, expected: usize, found: usize) -> Result<(), OdeError> {
    if expected == found {
        Ok(())
    } else {
        Err(OdeError::WrongLength {
            what: what.to_string(),
            expected,
            found,
        })
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// A parameterised ODE system: `ds/dt = field(s, p)`, exposing `readout(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSystem {
    state_vars: Vec<String>,
    output_vars: Vec<String>,
    param_vars: Vec<String>,
    readout: Vec<Expr>,
    field: Vec<Expr>,
}

impl OdeSystem {
    pub fn new(
        state_vars: Vec<String>,
        output_vars: Vec<String>,
        param_vars: Vec<String>,
        readout: Vec<Expr>,
        field: Vec<Expr>,
    ) -> Result<Self, OdeError> {
        check_identifiers([&state_vars[..], &output_vars[..], &param_vars[..]])?;
        check_len("readout", output_vars.len(), readout.len())?;
        check_len("field", state_vars.len(), field.len())?;
        check_scope("readout", &readout, &[&state_vars])?;
        check_scope("field", &field, &[&state_vars, &param_vars])?;
        Ok(OdeSystem {
            state_vars,
            output_vars,
            param_vars,
            readout,
            field,
        })
    }

    /// Builds a system from expression strings.
    pub fn parse(
        state_vars: &[&str],
        output_vars: &[&str],
        param_vars: &[&str],
        readout: &[&str],
        field: &[&str],
    ) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        let parse_all = |src: &[&str]| src.iter().map(|s| s.parse::<Expr>()).collect::<Result<Vec<_>, _>>();
        Ok(OdeSystem::new(
            names(state_vars),
            names(output_vars),
            names(param_vars),
            parse_all(readout)?,
            parse_all(field)?,
        )?)
    }

    /// The system with no variables at all.
    pub fn empty() -> Self {
        OdeSystem {
            state_vars: vec![],
            output_vars: vec![],
            param_vars: vec![],
            readout: vec![],
            field: vec![],
        }
    }

    pub fn state_vars(&self) -> &[String] {
        &self.state_vars
    }

    pub fn output_vars(&self) -> &[String] {
        &self.output_vars
    }

    pub fn param_vars(&self) -> &[String] {
        &self.param_vars
    }

    pub fn readout(&self) -> &[Expr] {
        &self.readout
    }

    pub fn field(&self) -> &[Expr] {
        &self.field
    }

    fn compiled_field(&self) -> Result<Vec<Compiled>, OdeError> {
        let slots: Vec<String> = self.state_vars.iter().chain(&self.param_vars).cloned().collect();
        compile_all(&self.field, &slots, &self.state_vars)
    }

    fn compiled_readout(&self) -> Result<Vec<Compiled>, OdeError> {
        compile_all(&self.readout, &self.state_vars, &self.output_vars)
    }

    pub fn eval_readout(&self, state: &[f64]) -> Result<Vec<f64>, OdeError> {
        check_len("state", self.state_vars.len(), state.len())?;
        eval_all(&self.compiled_readout()?, state, &self.output_vars)
    }
}

fn compile_all(exprs: &[Expr], slots: &[String], labels: &[String]) -> Result<Vec<Compiled>, OdeError> {
    exprs
        .iter()
        .zip(labels)
        .map(|(e, name)| {
            e.compile(slots).map_err(|source| OdeError::Eval {
                component: name.clone(),
                source,
            })
        })
        .collect()
}

fn eval_all(code: &[Compiled], slots: &[f64], labels: &[String]) -> Result<Vec<f64>, OdeError> {
    code.iter()
        .zip(labels)
        .map(|(c, name)| {
            c.eval(slots).map_err(|source| OdeError::Eval {
                component: name.clone(),
                source,
            })
        })
        .collect()
}

/// Wiring between ODE interfaces: `fwd` gives each new output in terms of
/// the old outputs, `bwd` gives each old parameter in terms of the old
/// outputs and the new parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeLens {
    outputs: Vec<String>,
    params: Vec<String>,
    new_outputs: Vec<String>,
    new_params: Vec<String>,
    fwd: Vec<Expr>,
    bwd: Vec<Expr>,
}

impl OdeLens {
    pub fn new(
        outputs: Vec<String>,
        params: Vec<String>,
        new_outputs: Vec<String>,
        new_params: Vec<String>,
        fwd: Vec<Expr>,
        bwd: Vec<Expr>,
    ) -> Result<Self, OdeError> {
        check_identifiers([&outputs[..], &params[..]])?;
        check_identifiers([&new_outputs[..], &new_params[..]])?;
        check_identifiers([&outputs[..], &new_params[..]])?;
        check_len("fwd", new_outputs.len(), fwd.len())?;
        check_len("bwd", params.len(), bwd.len())?;
        check_scope("fwd", &fwd, &[&outputs])?;
        check_scope("bwd", &bwd, &[&outputs, &new_params])?;
        Ok(OdeLens {
            outputs,
            params,
            new_outputs,
            new_params,
            fwd,
            bwd,
        })
    }

    pub fn parse(
        outputs: &[&str],
        params: &[&str],
        new_outputs: &[&str],
        new_params: &[&str],
        fwd: &[&str],
        bwd: &[&str],
    ) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        let parse_all = |src: &[&str]| src.iter().map(|s| s.parse::<Expr>()).collect::<Result<Vec<_>, _>>();
        Ok(OdeLens::new(
            names(outputs),
            names(params),
            names(new_outputs),
            names(new_params),
            parse_all(fwd)?,
            parse_all(bwd)?,
        )?)
    }

    /// `fwd = outputs`, `bwd = params`.
    pub fn identity(outputs: &[String], params: &[String]) -> Result<Self, OdeError> {
        OdeLens::new(
            outputs.to_vec(),
            params.to_vec(),
            outputs.to_vec(),
            params.to_vec(),
            outputs.iter().map(|o| Expr::var(o)).collect(),
            params.iter().map(|p| Expr::var(p)).collect(),
        )
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn new_outputs(&self) -> &[String] {
        &self.new_outputs
    }

    pub fn new_params(&self) -> &[String] {
        &self.new_params
    }

    pub fn fwd(&self) -> &[Expr] {
        &self.fwd
    }

    pub fn bwd(&self) -> &[Expr] {
        &self.bwd
    }
}

fn bindings(vars: &[String], exprs: &[Expr]) -> HashMap<String, Expr> {
    vars.iter().cloned().zip(exprs.iter().cloned()).collect()
}

/// Missing names in either direction, sorted.
fn same_names(expected: &[String], found: &[String]) -> Result<(), OdeError> {
    let a: BTreeSet<&String> = expected.iter().collect();
    let b: BTreeSet<&String> = found.iter().collect();
    let missing: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
    if missing.is_empty() && expected.len() == found.len() {
        Ok(())
    } else {
        Err(OdeError::NameMismatch { missing })
    }
}

/// Reorders lens-side expressions into the order of `order`.
fn reorder(names: &[String], exprs: &[Expr], order: &[String]) -> Vec<Expr> {
    order
        .iter()
        .map(|n| exprs[names.iter().position(|m| m == n).expect("names checked")].clone())
        .collect()
}

/// Wires `sys` along `lens`: each parameter becomes its `bwd` expression with
/// the outputs replaced by their readouts, and the new readout is `fwd`
/// after the old readout.
pub fn compose_lens_ode(lens: &OdeLens, sys: &OdeSystem) -> Result<OdeSystem, OdeError> {
    same_names(&lens.outputs, &sys.output_vars)?;
    same_names(&lens.params, &sys.param_vars)?;
    let readout = bindings(&sys.output_vars, &sys.readout);
    let bwd = reorder(&lens.params, &lens.bwd, &sys.param_vars);
    let params: HashMap<String, Expr> = sys
        .param_vars
        .iter()
        .zip(&bwd)
        .map(|(p, e)| (p.clone(), e.substitute(&readout)))
        .collect();
    OdeSystem::new(
        sys.state_vars.clone(),
        lens.new_outputs.clone(),
        lens.new_params.clone(),
        lens.fwd.iter().map(|e| e.substitute(&readout)).collect(),
        sys.field.iter().map(|e| e.substitute(&params)).collect(),
    )
}

/// `inner` followed by `outer`.
pub fn compose_ode_lenses(inner: &OdeLens, outer: &OdeLens) -> Result<OdeLens, OdeError> {
    same_names(&outer.outputs, &inner.new_outputs)?;
    same_names(&outer.params, &inner.new_params)?;
    let mid_outputs = bindings(&inner.new_outputs, &inner.fwd);
    let mid_params: HashMap<String, Expr> = outer
        .params
        .iter()
        .zip(&outer.bwd)
        .map(|(p, e)| (p.clone(), e.substitute(&mid_outputs)))
        .collect();
    OdeLens::new(
        inner.outputs.clone(),
        inner.params.clone(),
        outer.new_outputs.clone(),
        outer.new_params.clone(),
        outer.fwd.iter().map(|e| e.substitute(&mid_outputs)).collect(),
        inner.bwd.iter().map(|e| e.substitute(&mid_params)).collect(),
    )
}

/// Runs two systems side by side. Identifiers must not be shared.
pub fn tensor_ode(a: &OdeSystem, b: &OdeSystem) -> Result<OdeSystem, OdeError> {
    let ids = |s: &OdeSystem| -> BTreeSet<String> {
        s.state_vars
            .iter()
            .chain(&s.output_vars)
            .chain(&s.param_vars)
            .cloned()
            .collect()
    };
    let shared: Vec<String> = ids(a).intersection(&ids(b)).cloned().collect();
    if !shared.is_empty() {
        return Err(OdeError::Collision(shared));
    }
    let cat = |x: &[String], y: &[String]| [x, y].concat();
    OdeSystem::new(
        cat(&a.state_vars, &b.state_vars),
        cat(&a.output_vars, &b.output_vars),
        cat(&a.param_vars, &b.param_vars),
        [&a.readout[..], &b.readout[..]].concat(),
        [&a.field[..], &b.field[..]].concat(),
    )
}

/// Evaluates the vector field at one point.
pub fn eval_field(sys: &OdeSystem, state: &[f64], params: &[f64]) -> Result<Vec<f64>, OdeError> {
    check_len("state", sys.state_vars.len(), state.len())?;
    check_len("params", sys.param_vars.len(), params.len())?;
    let slots = [state, params].concat();
    eval_all(&sys.compiled_field()?, &slots, &sys.state_vars)
}

/// Parameter values over time.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSignal {
    Constant(Vec<f64>),
    /// Step interpolation: at time `t` the value of the last sample with
    /// `times[j] <= t`, or the first sample before `times[0]`.
    Steps { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl ParamSignal {
    pub fn validate(&self, width: usize) -> Result<(), OdeError> {
        match self {
            ParamSignal::Constant(v) => check_len("parameter values", width, v.len()),
            ParamSignal::Steps { times, values } => {
                if times.is_empty() {
                    return Err(OdeError::BadSignal("no samples".into()));
                }
                check_len("signal samples", times.len(), values.len())?;
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(OdeError::BadSignal("sample times must be strictly increasing".into()));
                }
                values
                    .iter()
                    .try_for_each(|v| check_len("parameter values", width, v.len()))
            }
        }
    }

    pub fn at(&self, t: f64) -> &[f64] {
        match self {
            ParamSignal::Constant(v) => v,
            ParamSignal::Steps { times, values } => {
                let j = times.partition_point(|&s| s <= t);
                &values[j.saturating_sub(1)]
            }
        }
    }
}

/// A sampled solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub state_vars: Vec<String>,
    pub output_vars: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.values.last().map(Vec::as_slice)
    }

    /// CSV with header `time,<state vars>,<output vars>`. Reals use the
    /// shortest representation that round-trips.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OdeError> {
        let err = |e: csv::Error| OdeError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let header = std::iter::once("time")
            .chain(self.state_vars.iter().map(String::as_str))
            .chain(self.output_vars.iter().map(String::as_str));
        w.write_record(header).map_err(err)?;
        for ((t, s), o) in self.times.iter().zip(&self.values).zip(&self.outputs) {
            let row = std::iter::once(t).chain(s).chain(o).map(|v| v.to_string());
            w.write_record(row).map_err(err)?;
        }
        w.flush().map_err(|e| OdeError::Csv(e.to_string()))
    }
}

/// Grid `t0, t0 + h, ..`, ending exactly at `t1`. When `(t1 - t0) / h` is
/// an integer up to a relative `1e-9` the steps are all `h`; otherwise the
/// last step is shortened.
pub fn time_grid(t0: f64, t1: f64, h: f64) -> Result<Vec<f64>, OdeError> {
    if !(t0.is_finite() && t1.is_finite() && h.is_finite()) {
        return Err(OdeError::BadGrid("times and step must be finite".into()));
    }
    if !(t1 > t0) {
        return Err(OdeError::BadGrid(format!("t1 = {t1} must exceed t0 = {t0}")));
    }
    if !(h > 0.0) || h > t1 - t0 {
        return Err(OdeError::BadGrid(format!("step {h} must lie in (0, {}]", t1 - t0)));
    }
    let ratio = (t1 - t0) / h;
    let n = if (ratio - ratio.round()).abs() <= 1e-9 * ratio {
        ratio.round() as usize
    } else {
        ratio.ceil() as usize
    };
    let mut times: Vec<f64> = (0..n).map(|j| t0 + j as f64 * h).collect();
    times.push(t1);
    Ok(times)
}

/// Classical RK4 over `times` for an arbitrary right-hand side `rhs(t, s)`.
fn rk4_core<F>(times: &[f64], s0: &[f64], mut rhs: F) -> Result<Vec<Vec<f64>>, OdeError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, OdeError>,
{
    let n = s0.len();
    let mut out = Vec::with_capacity(times.len());
    let mut s = s0.to_vec();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { time: times[0] });
    }
    out.push(s.clone());
    let mut stage = vec![0.0; n];
    for w in times.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        let half = t + dt / 2.0;
        let k1 = rhs(t, &s)?;
        for i in 0..n {
            stage[i] = s[i] + dt / 2.0 * k1[i];
        }
        let k2 = rhs(half, &stage)?;
        for i in 0..n {
            stage[i] = s[i] + dt / 2.0 * k2[i];
        }
        let k3 = rhs(half, &stage)?;
        for i in 0..n {
            stage[i] = s[i] + dt * k3[i];
        }
        let k4 = rhs(w[1], &stage)?;
        for i in 0..n {
            // Averaging the slopes first keeps constant fields exact.
            s[i] += dt * ((k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0);
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite { time: w[1] });
        }
        out.push(s.clone());
    }
    Ok(out)
}

fn finite_or(time: f64, values: Vec<f64>) -> Result<Vec<f64>, OdeError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(values)
    } else {
        Err(OdeError::NonFinite { time })
    }
}

fn readouts(sys: &OdeSystem, times: &[f64], values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, OdeError> {
    let code = sys.compiled_readout()?;
    times
        .iter()
        .zip(values)
        .map(|(&t, s)| finite_or(t, eval_all(&code, s, &sys.output_vars)?))
        .collect()
}

/// Solves `sys` from `s0` over `[t0, t1]` with step `h`, sampling the
/// parameters at each stage time.
pub fn rk4_solve(
    sys: &OdeSystem,
    s0: &[f64],
    signal: &ParamSignal,
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<Trajectory, OdeError> {
    check_len("initial state", sys.state_vars.len(), s0.len())?;
    signal.validate(sys.param_vars.len())?;
    let times = time_grid(t0, t1, h)?;
    let field = sys.compiled_field()?;
    let mut slots = Vec::with_capacity(sys.state_vars.len() + sys.param_vars.len());
    let values = rk4_core(&times, s0, |t, s| {
        slots.clear();
        slots.extend_from_slice(s);
        slots.extend_from_slice(signal.at(t));
        finite_or(t, eval_all(&field, &slots, &sys.state_vars)?)
    })?;
    let outputs = readouts(sys, &times, &values)?;
    Ok(Trajectory {
        state_vars: sys.state_vars.clone(),
        output_vars: sys.output_vars.clone(),
        times,
        values,
        outputs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub passed: bool,
    pub max: f64,
    /// Sample index and state component where the maximum occurs.
    pub index: usize,
    pub component: usize,
}

/// Derivative at `ts[at]` of the quadratic through three points.
fn three_point_slope(ts: [f64; 3], ys: [f64; 3], at: usize) -> f64 {
    let x = ts[at];
    let mut d = 0.0;
    for j in 0..3 {
        let mut denom = 1.0;
        for m in 0..3 {
            if m != j {
                denom *= ts[j] - ts[m];
            }
        }
        let mut num = 0.0;
        for m in 0..3 {
            if m == j {
                continue;
            }
            let mut term = 1.0;
            for l in 0..3 {
                if l != j && l != m {
                    term *= x - ts[l];
                }
            }
            num += term;
        }
        d += ys[j] * num / denom;
    }
    d
}

/// Compares finite-difference derivatives of `traj` with the vector field.
///
/// Interior samples use the central three-point formula and the two ends
/// the one-sided three-point formulas, all second order.
pub fn check_residual(
    sys: &OdeSystem,
    traj: &Trajectory,
    signal: &ParamSignal,
    tol: f64,
) -> Result<Residual, OdeError> {
    let n = traj.times.len();
    if n < 3 {
        return Err(OdeError::TooShort(n));
    }
    check_len("trajectory values", n, traj.values.len())?;
    signal.validate(sys.param_vars.len())?;
    let field = sys.compiled_field()?;
    let mut worst = Residual {
        passed: true,
        max: 0.0,
        index: 0,
        component: 0,
    };
    for j in 0..n {
        let (base, at) = match j {
            0 => (0, 0),
            _ if j == n - 1 => (n - 3, 2),
            _ => (j - 1, 1),
        };
        let ts = [traj.times[base], traj.times[base + 1], traj.times[base + 2]];
        let state = &traj.values[j];
        check_len("trajectory row", sys.state_vars.len(), state.len())?;
        let slots = [state, signal.at(traj.times[j])].concat();
        let slope = eval_all(&field, &slots, &sys.state_vars)?;
        for (c, f) in slope.iter().enumerate() {
            let ys = [
                traj.values[base][c],
                traj.values[base + 1][c],
                traj.values[base + 2][c],
            ];
            let r = (three_point_slope(ts, ys, at) - f).abs();
            if !(r <= worst.max) {
                worst.max = r;
                worst.index = j;
                worst.component = c;
            }
        }
    }
    worst.passed = worst.max <= tol;
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub passed: bool,
    pub max: f64,
}

/// Solves the wired system two ways: after substitution, and by running the
/// inner system with its parameters computed at every stage from the current
/// readout and the outer parameters.
#[allow(clippy::too_many_arguments)]
pub fn check_solve_functoriality(
    lens: &OdeLens,
    sys: &OdeSystem,
    s0: &[f64],
    outer: &ParamSignal,
    t0: f64,
    t1: f64,
    h: f64,
    tol: f64,
) -> Result<Deviation, OdeError> {
    let wired = compose_lens_ode(lens, sys)?;
    let a = rk4_solve(&wired, s0, outer, t0, t1, h)?;

    let times = time_grid(t0, t1, h)?;
    let readout = sys.compiled_readout()?;
    let bwd_slots: Vec<String> = sys.output_vars.iter().chain(&lens.new_params).cloned().collect();
    let bwd = reorder(&lens.params, &lens.bwd, &sys.param_vars);
    let bwd = compile_all(&bwd, &bwd_slots, &sys.param_vars)?;
    let field = sys.compiled_field()?;
    let b = rk4_core(&times, s0, |t, s| {
        let exposed = eval_all(&readout, s, &sys.output_vars)?;
        let params = eval_all(&bwd, &[&exposed[..], outer.at(t)].concat(), &sys.param_vars)?;
        finite_or(t, eval_all(&field, &[s, &params[..]].concat(), &sys.state_vars)?)
    })?;

    let max = a
        .values
        .iter()
        .zip(&b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    Ok(Deviation {
        passed: max <= tol,
        max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rabbit() -> OdeSystem {
        OdeSystem::parse(&["r"], &["rabbit"], &["alpha", "beta"], &["r"], &["alpha*r - beta*r"]).unwrap()
    }

    fn fox() -> OdeSystem {
        OdeSystem::parse(&["f"], &["fox"], &["gamma", "delta"], &["f"], &["gamma*f - delta*f"]).unwrap()
    }

    fn lv_lens() -> OdeLens {
        OdeLens::parse(
            &["rabbit", "fox"],
            &["alpha", "beta", "gamma", "delta"],
            &["rabbit", "fox"],
            &["alpha", "c", "d", "delta"],
            &["rabbit", "fox"],
            &["alpha", "c*fox", "d*rabbit", "delta"],
        )
        .unwrap()
    }

    fn lv() -> OdeSystem {
        compose_lens_ode(&lv_lens(), &tensor_ode(&rabbit(), &fox()).unwrap()).unwrap()
    }

    fn growth() -> OdeSystem {
        OdeSystem::parse(&["s"], &["y"], &[], &["s"], &["s"]).unwrap()
    }

    fn clock() -> OdeSystem {
        OdeSystem::parse(&["s"], &["y"], &[], &["s"], &["1"]).unwrap()
    }

    fn none() -> ParamSignal {
        ParamSignal::Constant(vec![])
    }

    #[test]
    fn lv_fields_are_the_substituted_ones() {
        let sys = lv();
        let printed: Vec<String> = sys.field().iter().map(ToString::to_string).collect();
        assert_eq!(printed, ["alpha*r - c*f*r", "d*r*f - delta*f"]);
        assert_eq!(sys.param_vars(), ["alpha", "c", "d", "delta"]);
        assert_eq!(sys.state_vars(), ["r", "f"]);
    }

    #[test]
    fn lv_field_values() {
        let sys = lv();
        assert_eq!(eval_field(&sys, &[2.0, 1.0], &[1.0, 0.5, 0.2, 0.4]).unwrap(), [1.0, 0.0]);
        assert_eq!(eval_field(&sys, &[0.0, 0.0], &[1.0, 0.5, 0.2, 0.4]).unwrap(), [0.0, 0.0]);
        assert_eq!(eval_field(&clock(), &[-3.5], &[]).unwrap(), [1.0]);
    }

    #[test]
    fn eval_errors_name_the_component() {
        let sys = OdeSystem::parse(&["x", "y"], &[], &[], &[], &["x", "log(y)"]).unwrap();
        let err = eval_field(&sys, &[1.0, 0.0], &[]).unwrap_err();
        assert!(matches!(err, OdeError::Eval { ref component, .. } if component == "y"), "{err}");
    }

    #[test]
    fn validation() {
        let bad = OdeSystem::parse(&["x"], &["x"], &[], &["x"], &["1"]);
        assert!(bad.unwrap_err().to_string().contains("`x`"));
        let unbound = OdeSystem::parse(&["x"], &[], &[], &[], &["x*k"]).unwrap_err();
        assert!(unbound.to_string().contains("k"));
        let err = compose_lens_ode(&lv_lens(), &rabbit()).unwrap_err();
        assert_eq!(
            err,
            OdeError::NameMismatch {
                missing: vec!["fox".into()]
            }
        );
        assert!(matches!(tensor_ode(&rabbit(), &rabbit()), Err(OdeError::Collision(_))));
    }

    #[test]
    fn tensor_shapes() {
        let both = tensor_ode(&rabbit(), &fox()).unwrap();
        assert_eq!(both.state_vars().len(), 2);
        assert_eq!(both.param_vars().len(), 4);
        assert_eq!(tensor_ode(&rabbit(), &OdeSystem::empty()).unwrap(), rabbit());
        assert_eq!(
            eval_field(&both, &[2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap(),
            [
                eval_field(&rabbit(), &[2.0], &[1.0, 2.0]).unwrap(),
                eval_field(&fox(), &[3.0], &[3.0, 4.0]).unwrap()
            ]
            .concat()
        );
    }

    #[test]
    fn identity_lens_and_lens_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = tensor_ode(&rabbit(), &fox()).unwrap();
        let id = OdeLens::identity(sys.output_vars(), sys.param_vars()).unwrap();
        let same = compose_lens_ode(&id, &sys).unwrap();
        let outer = OdeLens::parse(
            &["rabbit", "fox"],
            &["alpha", "c", "d", "delta"],
            &["total"],
            &["k"],
            &["rabbit + fox"],
            &["k", "k/2", "k*k", "fox - k"],
        )
        .unwrap();
        let once = compose_lens_ode(&compose_ode_lenses(&lv_lens(), &outer).unwrap(), &sys).unwrap();
        let twice = compose_lens_ode(&outer, &compose_lens_ode(&lv_lens(), &sys).unwrap()).unwrap();
        for _ in 0..100 {
            let s: Vec<f64> = (0..2).map(|_| rng.random_range(-5.0..5.0)).collect();
            let p: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert_eq!(eval_field(&same, &s, &p).unwrap(), eval_field(&sys, &s, &p).unwrap());
            let k = [rng.random_range(-5.0..5.0)];
            let x = eval_field(&once, &s, &k).unwrap();
            let y = eval_field(&twice, &s, &k).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
            }
            assert_eq!(once.eval_readout(&s).unwrap(), twice.eval_readout(&s).unwrap());
        }
    }

    #[test]
    fn grid_arithmetic() {
        let g = time_grid(0.0, 5.0, 1e-3).unwrap();
        assert_eq!(g.len(), 5001);
        assert_eq!(*g.last().unwrap(), 5.0);
        let g = time_grid(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g, [0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        assert!(time_grid(1.0, 1.0, 0.1).is_err());
        assert!(time_grid(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn exponential_growth() {
        let traj = rk4_solve(&growth(), &[1.0], &none(), 0.0, 1.0, 1e-3).unwrap();
        let end = traj.last().unwrap()[0];
        assert!((end - std::f64::consts::E).abs() < 1e-8, "{end}");
    }

    #[test]
    fn convergence_order() {
        let err = |h: f64| {
            let traj = rk4_solve(&growth(), &[1.0], &none(), 0.0, 1.0, h).unwrap();
            (traj.last().unwrap()[0] - std::f64::consts::E).abs()
        };
        let e = [err(1e-2), err(5e-3), err(2.5e-3)];
        for w in e.windows(2) {
            let factor = w[0] / w[1];
            assert!((12.0..=20.0).contains(&factor), "{factor}");
        }
    }

    #[test]
    fn constant_field_is_exact() {
        let traj = rk4_solve(&clock(), &[0.0], &none(), 0.0, 5.0, 1e-3).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.values) {
            assert!((s[0] - t).abs() <= 1e-12);
        }
        assert_eq!(traj.last().unwrap()[0], 5.0);
        let res = check_residual(&clock(), &traj, &none(), 1e-9).unwrap();
        assert!(res.passed && res.max < 1e-9, "{res:?}");
    }

    #[test]
    fn lv_stays_positive() {
        let params = ParamSignal::Constant(vec![1.0, 0.5, 0.2, 0.4]);
        let traj = rk4_solve(&lv(), &[2.0, 1.0], &params, 0.0, 5.0, 1e-3).unwrap();
        assert_eq!(traj.len(), 5001);
        assert!(traj.values.iter().flatten().all(|&v| v > 0.0));
        assert_eq!(traj.outputs[0], [2.0, 1.0]);
    }

    #[test]
    fn blow_up_reports_time() {
        let sys = OdeSystem::parse(&["s"], &[], &[], &[], &["s^2"]).unwrap();
        match rk4_solve(&sys, &[1.0], &none(), 0.0, 2.0, 1e-2) {
            Err(OdeError::NonFinite { time }) => assert!(time > 0.9 && time <= 2.0, "{time}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn residuals() {
        let traj = rk4_solve(&growth(), &[1.0], &none(), 0.0, 1.0, 1e-3).unwrap();
        let res = check_residual(&growth(), &traj, &none(), 1e-5).unwrap();
        assert!(res.passed, "{res:?}");

        let mut bad = traj.clone();
        bad.values[400][0] += 0.1;
        let res = check_residual(&growth(), &bad, &none(), 1e-5).unwrap();
        assert!(!res.passed);
        assert!(res.index.abs_diff(400) <= 1, "{res:?}");

        let short = Trajectory {
            times: traj.times[..2].to_vec(),
            values: traj.values[..2].to_vec(),
            outputs: traj.outputs[..2].to_vec(),
            ..traj
        };
        assert_eq!(check_residual(&growth(), &short, &none(), 1.0), Err(OdeError::TooShort(2)));
    }

    #[test]
    fn three_point_slopes_are_exact_on_quadratics() {
        let ts = [0.1, 0.4, 0.45];
        let ys = ts.map(|t| 3.0 * t * t - t + 2.0);
        for at in 0..3 {
            assert!((three_point_slope(ts, ys, at) - (6.0 * ts[at] - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn step_signals() {
        let sig = ParamSignal::Steps {
            times: vec![0.0, 1.0, 2.0],
            values: vec![vec![1.0], vec![2.0], vec![3.0]],
        };
        sig.validate(1).unwrap();
        assert_eq!(sig.at(-1.0), [1.0]);
        assert_eq!(sig.at(0.999), [1.0]);
        assert_eq!(sig.at(1.0), [2.0]);
        assert_eq!(sig.at(7.0), [3.0]);
        assert!(sig.validate(2).is_err());
        let sys = OdeSystem::parse(&["s"], &[], &["p"], &[], &["p"]).unwrap();
        let traj = rk4_solve(&sys, &[0.0], &sig, 0.0, 3.0, 0.5).unwrap();
        // The last stage of a step ending on a sample time already sees the new value.
        let by_hand = 0.5 * (1.0 + 7.0 / 6.0 + 2.0 + 13.0 / 6.0 + 3.0 + 3.0);
        assert!((traj.last().unwrap()[0] - by_hand).abs() < 1e-12);
    }

    #[test]
    fn functoriality() {
        let sys = tensor_ode(&rabbit(), &fox()).unwrap();
        let params = ParamSignal::Constant(vec![1.0, 0.5, 0.2, 0.4]);
        let dev = check_solve_functoriality(&lv_lens(), &sys, &[2.0, 1.0], &params, 0.0, 5.0, 1e-3, 1e-9)
            .unwrap();
        assert!(dev.passed, "{dev:?}");
        let id = OdeLens::identity(sys.output_vars(), sys.param_vars()).unwrap();
        let dev = check_solve_functoriality(&id, &sys, &[2.0, 1.0], &params, 0.0, 1.0, 1e-2, 1e-12).unwrap();
        assert_eq!(dev.max, 0.0);
    }

    #[test]
    fn csv_layout() {
        let traj = rk4_solve(&clock(), &[0.0], &none(), 0.0, 1.0, 0.5).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time,s,y\n0,0,0\n0.5,0.5,0.5\n1,1,1\n");
    }
}
