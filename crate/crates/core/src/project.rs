//! The JSON project format shared by every command.
//!
//! ```json
//! {
//!   "version": 1,
//!   "systems": [
//!     {"name": "ff", "doctrine": "det", "states": [..], "inputs": [..], "outputs": [..],
//!      "readout": {"s0": "lo"}, "update": {"s0": {"set": "s1"}}},
//!     {"name": "coin", "doctrine": "stoch", ..., "update": {"s0": {"go": {"s0": "1/2", "s1": "1/2"}}}},
//!     {"name": "rabbit", "doctrine": "ode", "stateVars": ["r"], "outputVars": ["rabbit"],
//!      "paramVars": ["alpha"], "readout": {"rabbit": "r"}, "field": {"r": "alpha*r"}}
//!   ],
//!   "lenses": [
//!     {"name": "l", "doctrine": "det", "inputs": [..], "outputs": [..], "newInputs": [..],
//!      "newOutputs": [..], "fwd": {"o": "o'"}, "bwd": {"o": {"i'": "i"}}},
//!     {"name": "w", "doctrine": "ode", "outputVars": [..], "paramVars": [..], "newOutputVars": [..],
//!      "newParamVars": [..], "fwd": {"o'": "expr"}, "bwd": {"p": "expr"}}
//!   ],
//!   "charts": [{"name": "c", "inputs": [..], "outputs": [..], "newInputs": [..], "newOutputs": [..],
//!               "fwd": {"o": "o'"}, "push": {"o": {"i": "i'"}}}],
//!   "squares": [{"name": "sq", "top": "c", "bottom": "c2", "left": "l", "right": "l2"}],
//!   "odeChecks": [{"name": "lv", "lens": "w", "system": "rf", "init": [2, 1], "params": [..],
//!                  "t0": 0, "t1": 5, "h": 0.001}]
//! }
//! ```
//!
//! Stochastic weights are exact rationals written `"p/q"`; zero weights may
//! be omitted. Everything but `version` is optional on input.

use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::det::{DetChart, DetInterface, DetLens, DetSquare, DetSystem};
use crate::expr::Expr;
use crate::finset::{FinMap, FinSet, PairMap};
use crate::ode::{compose_lens_ode, OdeLens, OdeSystem};
use crate::stoch::{Dist, StochSystem};

pub const VERSION: i64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProjectError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported version {0} (expected {VERSION})")]
    Version(i64),
    #[error("{entry}: {rule}")]
    Invalid { entry: String, rule: String },
}

fn invalid<E: fmt::Display>(entry: impl Into<String>) -> impl FnOnce(E) -> ProjectError {
    let entry = entry.into();
    move |e| ProjectError::Invalid {
        entry,
        rule: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum System {
    Det(DetSystem),
    Stoch(StochSystem),
    Ode(OdeSystem),
}

impl System {
    pub fn doctrine(&self) -> &'static str {
        match self {
            System::Det(_) => "det",
            System::Stoch(_) => "stoch",
            System::Ode(_) => "ode",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Lens {
    Det(DetLens),
    Ode(OdeLens),
}

impl Lens {
    pub fn doctrine(&self) -> &'static str {
        match self {
            Lens::Det(_) => "det",
            Lens::Ode(_) => "ode",
        }
    }
}

/// A square given by the names of its sides.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareRef {
    pub top: String,
    pub bottom: String,
    pub left: String,
    pub right: String,
}

/// Inputs for a substitute-then-solve comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeCheck {
    pub lens: String,
    pub system: String,
    pub init: Vec<f64>,
    pub params: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub h: f64,
}

/// A validated project. Entries keep their file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProjectFile {
    pub systems: IndexMap<String, System>,
    pub lenses: IndexMap<String, Lens>,
    pub charts: IndexMap<String, DetChart>,
    pub squares: IndexMap<String, SquareRef>,
    pub ode_checks: IndexMap<String, OdeCheck>,
}

impl ProjectFile {
    pub fn system(&self, name: &str) -> Result<&System, ProjectError> {
        self.systems.get(name).ok_or_else(|| not_found("system", name))
    }

    pub fn lens(&self, name: &str) -> Result<&Lens, ProjectError> {
        self.lenses.get(name).ok_or_else(|| not_found("lens", name))
    }

    pub fn chart(&self, name: &str) -> Result<&DetChart, ProjectError> {
        self.charts.get(name).ok_or_else(|| not_found("chart", name))
    }

    pub fn det_lens(&self, name: &str) -> Result<&DetLens, ProjectError> {
        match self.lens(name)? {
            Lens::Det(l) => Ok(l),
            other => Err(ProjectError::Invalid {
                entry: format!("lens `{name}`"),
                rule: format!("expected a det lens, found doctrine {}", other.doctrine()),
            }),
        }
    }

    /// Resolves a named square.
    pub fn square(&self, name: &str) -> Result<DetSquare, ProjectError> {
        let r = self.squares.get(name).ok_or_else(|| not_found("square", name))?;
        resolve_square(self, name, r)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_repr()).expect("serialisable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ProjectError> {
        let repr: ProjectRepr = serde_json::from_str(text).map_err(|e| ProjectError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        ProjectFile::from_repr(repr)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProjectError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| ProjectError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

fn not_found(kind: &str, name: &str) -> ProjectError {
    ProjectError::Invalid {
        entry: format!("{kind} `{name}`"),
        rule: "no entry with this name".into(),
    }
}

/// Reads and validates a project file.
pub fn load_project(path: impl AsRef<Path>) -> Result<ProjectFile, ProjectError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ProjectError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ProjectFile::from_json(&text)
}

type Table = IndexMap<String, String>;
type Nested = IndexMap<String, Table>;

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ProjectRepr {
    version: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    systems: Vec<SystemRepr>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    lenses: Vec<LensRepr>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    charts: Vec<ChartRepr>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    squares: Vec<Named<SquareRef>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    ode_checks: Vec<Named<OdeCheck>>,
}

#[derive(Serialize, Deserialize)]
struct Named<T> {
    name: String,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "doctrine", rename_all = "lowercase")]
enum SystemRepr {
    Det(DetSystemRepr),
    Stoch(StochSystemRepr),
    Ode(OdeSystemRepr),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetSystemRepr {
    name: String,
    states: Vec<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    readout: Table,
    update: Nested,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StochSystemRepr {
    name: String,
    states: Vec<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    readout: Table,
    update: IndexMap<String, Nested>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct OdeSystemRepr {
    name: String,
    state_vars: Vec<String>,
    output_vars: Vec<String>,
    param_vars: Vec<String>,
    readout: Table,
    field: Table,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "doctrine", rename_all = "lowercase")]
enum LensRepr {
    Det(DetLensRepr),
    Ode(OdeLensRepr),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct DetLensRepr {
    name: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    new_inputs: Vec<String>,
    new_outputs: Vec<String>,
    fwd: Table,
    bwd: Nested,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct OdeLensRepr {
    name: String,
    output_vars: Vec<String>,
    param_vars: Vec<String>,
    new_output_vars: Vec<String>,
    new_param_vars: Vec<String>,
    fwd: Table,
    bwd: Table,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ChartRepr {
    name: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    new_inputs: Vec<String>,
    new_outputs: Vec<String>,
    fwd: Table,
    push: Nested,
}

fn set(entry: &str, what: &str, labels: &[String]) -> Result<FinSet, ProjectError> {
    FinSet::new(labels.iter().map(String::as_str)).map_err(invalid(format!("{entry}, {what}")))
}

fn map(entry: &str, what: &str, dom: &FinSet, cod: &FinSet, t: &Table) -> Result<FinMap, ProjectError> {
    FinMap::from_pairs(dom.clone(), cod.clone(), t.iter().map(|(k, v)| (k.as_str(), v.as_str())))
        .map_err(invalid(format!("{entry}, {what}")))
}

fn pair_map(
    entry: &str,
    what: &str,
    rows: &FinSet,
    cols: &FinSet,
    cod: &FinSet,
    t: &Nested,
) -> Result<PairMap, ProjectError> {
    PairMap::from_nested(
        rows.clone(),
        cols.clone(),
        cod.clone(),
        t.iter()
            .map(|(r, inner)| (r.as_str(), inner.iter().map(|(c, v)| (c.as_str(), v.as_str())))),
    )
    .map_err(invalid(format!("{entry}, {what}")))
}

/// Expressions for `vars`, in that order, from a `var -> expr` table.
fn exprs(entry: &str, what: &str, vars: &[String], t: &Table) -> Result<Vec<Expr>, ProjectError> {
    let fail = |rule: String| ProjectError::Invalid {
        entry: format!("{entry}, {what}"),
        rule,
    };
    if let Some(extra) = t.keys().find(|k| !vars.contains(k)) {
        return Err(fail(format!("`{extra}` is not a declared variable")));
    }
    vars.iter()
        .map(|v| {
            let src = t.get(v).ok_or_else(|| fail(format!("no expression for `{v}`")))?;
            src.parse::<Expr>().map_err(|e| fail(format!("`{v}`: {e}")))
        })
        .collect()
}

fn table_of(map: &FinMap) -> Table {
    map.dom()
        .iter()
        .enumerate()
        .map(|(i, l)| (l.to_string(), map.cod().label(map.apply(i)).to_string()))
        .collect()
}

fn nested_of(map: &PairMap) -> Nested {
    let mut out = Nested::new();
    for (r, c, v) in map.entries() {
        out.entry(r.to_string())
            .or_default()
            .insert(c.to_string(), v.to_string());
    }
    out
}

fn labels(s: &FinSet) -> Vec<String> {
    s.labels().to_vec()
}

fn expr_table(vars: &[String], es: &[Expr]) -> Table {
    vars.iter().cloned().zip(es.iter().map(ToString::to_string)).collect()
}

fn insert_unique<T>(map: &mut IndexMap<String, T>, kind: &str, name: String, value: T) -> Result<(), ProjectError> {
    if name.is_empty() {
        return Err(ProjectError::Invalid {
            entry: format!("{kind} with empty name"),
            rule: "names must be non-empty".into(),
        });
    }
    if map.contains_key(&name) {
        return Err(ProjectError::Invalid {
            entry: format!("{kind} `{name}`"),
            rule: "names must be unique".into(),
        });
    }
    map.insert(name, value);
    Ok(())
}

fn resolve_square(p: &ProjectFile, name: &str, r: &SquareRef) -> Result<DetSquare, ProjectError> {
    let entry = format!("square `{name}`");
    let side = |e: ProjectError| ProjectError::Invalid {
        entry: entry.clone(),
        rule: e.to_string(),
    };
    DetSquare::new(
        p.chart(&r.top).map_err(side)?.clone(),
        p.chart(&r.bottom).map_err(side)?.clone(),
        p.det_lens(&r.left).map_err(side)?.clone(),
        p.det_lens(&r.right).map_err(side)?.clone(),
    )
    .map_err(invalid(entry.clone()))
}

fn det_system(r: &DetSystemRepr) -> Result<DetSystem, ProjectError> {
    let e = format!("system `{}`", r.name);
    let states = set(&e, "states", &r.states)?;
    let inputs = set(&e, "inputs", &r.inputs)?;
    let outputs = set(&e, "outputs", &r.outputs)?;
    let readout = map(&e, "readout", &states, &outputs, &r.readout)?;
    let update = pair_map(&e, "update", &states, &inputs, &states, &r.update)?;
    DetSystem::new(states, DetInterface::new(inputs, outputs), readout, update).map_err(invalid(e))
}

fn stoch_system(r: &StochSystemRepr) -> Result<StochSystem, ProjectError> {
    let e = format!("system `{}`", r.name);
    let states = set(&e, "states", &r.states)?;
    let inputs = set(&e, "inputs", &r.inputs)?;
    let outputs = set(&e, "outputs", &r.outputs)?;
    let readout = map(&e, "readout", &states, &outputs, &r.readout)?;
    let mut update = Vec::with_capacity(states.len() * inputs.len());
    for s in states.iter() {
        let row = r.update.get(s).ok_or_else(|| ProjectError::Invalid {
            entry: format!("{e}, update"),
            rule: format!("no transitions for state `{s}`"),
        })?;
        for i in inputs.iter() {
            let at = format!("{e}, update[{s}][{i}]");
            let weights = row.get(i).ok_or_else(|| ProjectError::Invalid {
                entry: at.clone(),
                rule: "missing distribution".into(),
            })?;
            let parsed = weights
                .iter()
                .map(|(t, w)| {
                    w.trim()
                        .parse::<BigRational>()
                        .map(|q| (t.as_str(), q))
                        .map_err(|err| ProjectError::Invalid {
                            entry: at.clone(),
                            rule: format!("weight `{w}` is not a rational p/q: {err}"),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            update.push(Dist::from_pairs(states.clone(), parsed).map_err(invalid(at))?);
        }
        if let Some(extra) = row.keys().find(|k| !inputs.contains(k)) {
            return Err(ProjectError::Invalid {
                entry: format!("{e}, update[{s}]"),
                rule: format!("unknown input `{extra}`"),
            });
        }
    }
    if let Some(extra) = r.update.keys().find(|k| !states.contains(k)) {
        return Err(ProjectError::Invalid {
            entry: format!("{e}, update"),
            rule: format!("unknown state `{extra}`"),
        });
    }
    StochSystem::new(states, DetInterface::new(inputs, outputs), readout, update).map_err(invalid(e))
}

fn ode_system(r: &OdeSystemRepr) -> Result<OdeSystem, ProjectError> {
    let e = format!("system `{}`", r.name);
    OdeSystem::new(
        r.state_vars.clone(),
        r.output_vars.clone(),
        r.param_vars.clone(),
        exprs(&e, "readout", &r.output_vars, &r.readout)?,
        exprs(&e, "field", &r.state_vars, &r.field)?,
    )
    .map_err(invalid(e))
}

fn interfaces(
    e: &str,
    inputs: &[String],
    outputs: &[String],
    new_inputs: &[String],
    new_outputs: &[String],
) -> Result<(DetInterface, DetInterface), ProjectError> {
    Ok((
        DetInterface::new(set(e, "inputs", inputs)?, set(e, "outputs", outputs)?),
        DetInterface::new(set(e, "newInputs", new_inputs)?, set(e, "newOutputs", new_outputs)?),
    ))
}

fn det_lens(r: &DetLensRepr) -> Result<DetLens, ProjectError> {
    let e = format!("lens `{}`", r.name);
    let (src, tgt) = interfaces(&e, &r.inputs, &r.outputs, &r.new_inputs, &r.new_outputs)?;
    let fwd = map(&e, "fwd", &src.outputs, &tgt.outputs, &r.fwd)?;
    let bwd = pair_map(&e, "bwd", &src.outputs, &tgt.inputs, &src.inputs, &r.bwd)?;
    DetLens::new(src, tgt, fwd, bwd).map_err(invalid(e))
}

fn ode_lens(r: &OdeLensRepr) -> Result<OdeLens, ProjectError> {
    let e = format!("lens `{}`", r.name);
    OdeLens::new(
        r.output_vars.clone(),
        r.param_vars.clone(),
        r.new_output_vars.clone(),
        r.new_param_vars.clone(),
        exprs(&e, "fwd", &r.new_output_vars, &r.fwd)?,
        exprs(&e, "bwd", &r.param_vars, &r.bwd)?,
    )
    .map_err(invalid(e))
}

fn chart(r: &ChartRepr) -> Result<DetChart, ProjectError> {
    let e = format!("chart `{}`", r.name);
    let (src, tgt) = interfaces(&e, &r.inputs, &r.outputs, &r.new_inputs, &r.new_outputs)?;
    let fwd = map(&e, "fwd", &src.outputs, &tgt.outputs, &r.fwd)?;
    let push = pair_map(&e, "push", &src.outputs, &src.inputs, &tgt.inputs, &r.push)?;
    DetChart::new(src, tgt, fwd, push).map_err(invalid(e))
}

fn check_ode(p: &ProjectFile, name: &str, c: &OdeCheck) -> Result<(), ProjectError> {
    let entry = format!("odeCheck `{name}`");
    let fail = |rule: String| ProjectError::Invalid {
        entry: entry.clone(),
        rule,
    };
    let sys = match p.system(&c.system).map_err(|e| fail(e.to_string()))? {
        System::Ode(s) => s,
        other => return Err(fail(format!("system `{}` has doctrine {}", c.system, other.doctrine()))),
    };
    let lens = match p.lens(&c.lens).map_err(|e| fail(e.to_string()))? {
        Lens::Ode(l) => l,
        other => return Err(fail(format!("lens `{}` has doctrine {}", c.lens, other.doctrine()))),
    };
    let wired = compose_lens_ode(lens, sys).map_err(|e| fail(e.to_string()))?;
    if c.init.len() != wired.state_vars().len() {
        return Err(fail(format!(
            "init has {} values for {} state variables",
            c.init.len(),
            wired.state_vars().len()
        )));
    }
    if c.params.len() != wired.param_vars().len() {
        return Err(fail(format!(
            "params has {} values for {} parameters",
            c.params.len(),
            wired.param_vars().len()
        )));
    }
    crate::ode::time_grid(c.t0, c.t1, c.h).map_err(|e| fail(e.to_string()))?;
    Ok(())
}

impl ProjectFile {
    fn from_repr(r: ProjectRepr) -> Result<Self, ProjectError> {
        if r.version != VERSION {
            return Err(ProjectError::Version(r.version));
        }
        let mut p = ProjectFile::default();
        for s in &r.systems {
            let (name, sys) = match s {
                SystemRepr::Det(d) => (&d.name, System::Det(det_system(d)?)),
                SystemRepr::Stoch(d) => (&d.name, System::Stoch(stoch_system(d)?)),
                SystemRepr::Ode(d) => (&d.name, System::Ode(ode_system(d)?)),
            };
            insert_unique(&mut p.systems, "system", name.clone(), sys)?;
        }
        for l in &r.lenses {
            let (name, lens) = match l {
                LensRepr::Det(d) => (&d.name, Lens::Det(det_lens(d)?)),
                LensRepr::Ode(d) => (&d.name, Lens::Ode(ode_lens(d)?)),
            };
            insert_unique(&mut p.lenses, "lens", name.clone(), lens)?;
        }
        for c in &r.charts {
            insert_unique(&mut p.charts, "chart", c.name.clone(), chart(c)?)?;
        }
        for sq in r.squares {
            resolve_square(&p, &sq.name, &sq.body)?;
            insert_unique(&mut p.squares, "square", sq.name, sq.body)?;
        }
        for c in r.ode_checks {
            check_ode(&p, &c.name, &c.body)?;
            insert_unique(&mut p.ode_checks, "odeCheck", c.name, c.body)?;
        }
        Ok(p)
    }

    fn to_repr(&self) -> ProjectRepr {
        let systems = self
            .systems
            .iter()
            .map(|(name, s)| {
                let name = name.clone();
                match s {
                    System::Det(d) => SystemRepr::Det(DetSystemRepr {
                        name,
                        states: labels(d.states()),
                        inputs: labels(d.inputs()),
                        outputs: labels(d.outputs()),
                        readout: table_of(d.readout()),
                        update: nested_of(d.update()),
                    }),
                    System::Stoch(d) => SystemRepr::Stoch(StochSystemRepr {
                        name,
                        states: labels(d.states()),
                        inputs: labels(d.inputs()),
                        outputs: labels(d.outputs()),
                        readout: table_of(d.readout()),
                        update: d
                            .states()
                            .iter()
                            .enumerate()
                            .map(|(s, sl)| {
                                let row = d
                                    .inputs()
                                    .iter()
                                    .enumerate()
                                    .map(|(i, il)| {
                                        let dist = d.transition(s, i);
                                        let weights = dist
                                            .weights()
                                            .iter()
                                            .enumerate()
                                            .filter(|(_, w)| !w.is_zero())
                                            .map(|(t, w)| (d.states().label(t).to_string(), w.to_string()))
                                            .collect();
                                        (il.to_string(), weights)
                                    })
                                    .collect();
                                (sl.to_string(), row)
                            })
                            .collect(),
                    }),
                    System::Ode(o) => SystemRepr::Ode(OdeSystemRepr {
                        name,
                        state_vars: o.state_vars().to_vec(),
                        output_vars: o.output_vars().to_vec(),
                        param_vars: o.param_vars().to_vec(),
                        readout: expr_table(o.output_vars(), o.readout()),
                        field: expr_table(o.state_vars(), o.field()),
                    }),
                }
            })
            .collect();
        let lenses = self
            .lenses
            .iter()
            .map(|(name, l)| {
                let name = name.clone();
                match l {
                    Lens::Det(d) => LensRepr::Det(DetLensRepr {
                        name,
                        inputs: labels(&d.source().inputs),
                        outputs: labels(&d.source().outputs),
                        new_inputs: labels(&d.target().inputs),
                        new_outputs: labels(&d.target().outputs),
                        fwd: table_of(d.fwd()),
                        bwd: nested_of(d.bwd()),
                    }),
                    Lens::Ode(o) => LensRepr::Ode(OdeLensRepr {
                        name,
                        output_vars: o.outputs().to_vec(),
                        param_vars: o.params().to_vec(),
                        new_output_vars: o.new_outputs().to_vec(),
                        new_param_vars: o.new_params().to_vec(),
                        fwd: expr_table(o.new_outputs(), o.fwd()),
                        bwd: expr_table(o.params(), o.bwd()),
                    }),
                }
            })
            .collect();
        let charts = self
            .charts
            .iter()
            .map(|(name, c)| ChartRepr {
                name: name.clone(),
                inputs: labels(&c.source().inputs),
                outputs: labels(&c.source().outputs),
                new_inputs: labels(&c.target().inputs),
                new_outputs: labels(&c.target().outputs),
                fwd: table_of(c.fwd()),
                push: nested_of(c.push()),
            })
            .collect();
        let named = |name: &String| name.clone();
        ProjectRepr {
            version: VERSION,
            systems,
            lenses,
            charts,
            squares: self
                .squares
                .iter()
                .map(|(n, b)| Named {
                    name: named(n),
                    body: b.clone(),
                })
                .collect(),
            ode_checks: self
                .ode_checks
                .iter()
                .map(|(n, b)| Named {
                    name: named(n),
                    body: b.clone(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLIPFLOP: &str = r#"{
      "version": 1,
      "systems": [{
        "name": "flipflop", "doctrine": "det",
        "states": ["s0", "s1"], "inputs": ["set", "reset", "hold"], "outputs": ["lo", "hi"],
        "readout": {"s0": "lo", "s1": "hi"},
        "update": {
          "s0": {"set": "s1", "reset": "s0", "hold": "s0"},
          "s1": {"set": "s1", "reset": "s0", "hold": "s1"}
        }
      }],
      "lenses": [{
        "name": "feedback", "doctrine": "det",
        "inputs": ["set", "reset", "hold"], "outputs": ["lo", "hi"],
        "newInputs": ["tick"], "newOutputs": ["*"],
        "fwd": {"lo": "*", "hi": "*"},
        "bwd": {"lo": {"tick": "set"}, "hi": {"tick": "reset"}}
      }]
    }"#;

    #[test]
    fn loads_and_round_trips() {
        let p = ProjectFile::from_json(FLIPFLOP).unwrap();
        assert_eq!(p.systems.len(), 1);
        assert_eq!(p.lenses.len(), 1);
        let again = ProjectFile::from_json(&p.to_json()).unwrap();
        assert_eq!(again, p);
        assert_eq!(again.to_json(), p.to_json());
    }

    #[test]
    fn empty_project() {
        let p = ProjectFile::from_json(r#"{"version": 1}"#).unwrap();
        assert_eq!(p, ProjectFile::default());
        assert_eq!(p.to_json(), "{\n  \"version\": 1\n}\n");
    }

    #[test]
    fn errors() {
        let dup = FLIPFLOP.replace(r#""states": ["s0", "s1"]"#, r#""states": ["s0", "s0"]"#);
        let err = ProjectFile::from_json(&dup).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("system `flipflop`") && msg.contains("`s0`"), "{msg}");

        let err = ProjectFile::from_json("{\"version\": 1,\n \"systems\": [}").unwrap_err();
        assert!(matches!(err, ProjectError::Parse { line: 2, .. }), "{err}");

        assert_eq!(
            ProjectFile::from_json(r#"{"version": 2}"#).unwrap_err(),
            ProjectError::Version(2)
        );

        let twice = FLIPFLOP.replace(r#""name": "feedback""#, r#""name": "flipflop""#);
        assert!(ProjectFile::from_json(&twice).is_ok(), "names are unique per kind only");

        let typo = FLIPFLOP.replace("\"readout\"", "\"readuot\"");
        assert!(matches!(ProjectFile::from_json(&typo), Err(ProjectError::Parse { .. })));
    }

    #[test]
    fn stochastic_and_ode_entries() {
        let text = r#"{
          "version": 1,
          "systems": [
            {"name": "coin", "doctrine": "stoch", "states": ["a", "b"], "inputs": ["go"],
             "outputs": ["a", "b"], "readout": {"a": "a", "b": "b"},
             "update": {"a": {"go": {"a": "1/3", "b": "2/3"}}, "b": {"go": {"b": "1"}}}},
            {"name": "grow", "doctrine": "ode", "stateVars": ["s"], "outputVars": ["y"],
             "paramVars": ["k"], "readout": {"y": "s"}, "field": {"s": "k * s"}}
          ],
          "lenses": [
            {"name": "fix", "doctrine": "ode", "outputVars": ["y"], "paramVars": ["k"],
             "newOutputVars": ["y"], "newParamVars": ["m"], "fwd": {"y": "y"}, "bwd": {"k": "-m"}}
          ],
          "odeChecks": [
            {"name": "c", "lens": "fix", "system": "grow", "init": [1], "params": [0.5],
             "t0": 0, "t1": 1, "h": 0.1}
          ]
        }"#;
        let p = ProjectFile::from_json(text).unwrap();
        let json = p.to_json();
        assert!(json.contains("\"1/3\"") && json.contains("\"k*s\"") && json.contains("\"-m\""), "{json}");
        assert_eq!(ProjectFile::from_json(&json).unwrap(), p);

        let bad = text.replace("\"2/3\"", "\"1/3\"");
        let msg = ProjectFile::from_json(&bad).unwrap_err().to_string();
        assert!(msg.contains("update[a][go]") && msg.contains("2/3"), "{msg}");

        let bad = text.replace("\"init\": [1]", "\"init\": [1, 2]");
        assert!(ProjectFile::from_json(&bad).unwrap_err().to_string().contains("odeCheck `c`"));
    }
}
