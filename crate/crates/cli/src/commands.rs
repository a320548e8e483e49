//! `compose`, `tensor`, `steady`, `matrix` and `simulate`.

use lensdyn_core::det::{
    compose_lens_system, lens_to_span, periodic_orbit_span, run_word, steady_span, tensor_systems,
    walking_cycle,
};
use lensdyn_core::finset::span_to_matrix;
use lensdyn_core::ode::{compose_lens_ode, rk4_solve, tensor_ode};
use lensdyn_core::stoch::{compose_lens_stoch, embed_det, simulate_stoch, tensor_stoch};
use lensdyn_core::{Lens, ParamSignal, ProjectFile, System};

use crate::CliError;

fn core<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn single(name: &str, sys: System) -> ProjectFile {
    let mut out = ProjectFile::default();
    out.systems.insert(name.to_string(), sys);
    out
}

/// Wires a system along a lens; the result is a project holding one system.
pub fn cmd_compose(p: &ProjectFile, lens: &str, sys: &str, name: &str) -> Result<ProjectFile, CliError> {
    let wired = match (p.lens(lens)?, p.system(sys)?) {
        (Lens::Det(l), System::Det(s)) => System::Det(compose_lens_system(l, s).map_err(core)?),
        (Lens::Det(l), System::Stoch(s)) => System::Stoch(compose_lens_stoch(l, s).map_err(core)?),
        (Lens::Ode(l), System::Ode(s)) => System::Ode(compose_lens_ode(l, s).map_err(core)?),
        (l, s) => {
            return Err(CliError::usage(format!(
                "doctrine mismatch: lens `{lens}` is {} but system `{sys}` is {}",
                l.doctrine(),
                s.doctrine()
            )))
        }
    };
    Ok(single(name, wired))
}

/// Parallel product of two systems. A deterministic factor paired with a
/// stochastic one is embedded with Dirac transitions.
pub fn cmd_tensor(p: &ProjectFile, left: &str, right: &str, name: &str) -> Result<ProjectFile, CliError> {
    let product = match (p.system(left)?, p.system(right)?) {
        (System::Det(a), System::Det(b)) => System::Det(tensor_systems(a, b)),
        (System::Stoch(a), System::Stoch(b)) => System::Stoch(tensor_stoch(a, b)),
        (System::Det(a), System::Stoch(b)) => System::Stoch(tensor_stoch(&embed_det(a), b)),
        (System::Stoch(a), System::Det(b)) => System::Stoch(tensor_stoch(a, &embed_det(b))),
        (System::Ode(a), System::Ode(b)) => System::Ode(tensor_ode(a, b).map_err(core)?),
        (a, b) => {
            return Err(CliError::usage(format!(
                "cannot tensor a {} system with a {} system",
                a.doctrine(),
                b.doctrine()
            )))
        }
    };
    Ok(single(name, product))
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(core)?;
    for row in rows {
        w.write_record(row).map_err(core)?;
    }
    w.into_inner().map_err(core)
}

/// Period-`k` orbits (`k = 1`: steady states) as CSV rows `chart,element`.
pub fn cmd_steady(p: &ProjectFile, sys: &str, k: usize) -> Result<Vec<u8>, CliError> {
    let System::Det(s) = p.system(sys)? else {
        return Err(CliError::usage(format!(
            "system `{sys}` is {}; steady needs a det system",
            p.system(sys)?.doctrine()
        )));
    };
    if k < 1 {
        return Err(CliError::usage("k must be at least 1"));
    }
    let fam = if k == 1 {
        steady_span(s)
    } else {
        periodic_orbit_span(s, k).map_err(core)?
    };
    let rows = fam
        .total()
        .iter()
        .enumerate()
        .map(|(z, label)| [fam.base().label(fam.proj().apply(z)).to_string(), label.to_string()]);
    csv_bytes(&["chart", "element"], rows)
}

/// The lens's span on charts out of the `k`-cycle as a count matrix:
/// one row per source chart, one column per target chart.
pub fn cmd_matrix(p: &ProjectFile, lens: &str, k: usize) -> Result<Vec<u8>, CliError> {
    let l = p.det_lens(lens)?;
    let rep = walking_cycle(k).map_err(core)?;
    let span = lens_to_span(l, rep.interface()).map_err(core)?;
    let m = span_to_matrix(&span);
    let mut header = vec![""];
    header.extend(span.target().iter());
    let rows = span.source().iter().zip(&m).map(|(label, row)| {
        std::iter::once(label.to_string())
            .chain(row.iter().map(u64::to_string))
            .collect::<Vec<_>>()
    });
    csv_bytes(&header, rows)
}

/// Arguments for `simulate`; which ones are needed depends on the doctrine.
#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub init: Option<Vec<f64>>,
    pub params: Vec<f64>,
    pub t0: f64,
    pub t1: Option<f64>,
    pub h: Option<f64>,
    pub start: Option<String>,
    pub word: Vec<String>,
    pub seed: u64,
}

/// ODE systems give an RK4 trajectory, stochastic systems a sampled path
/// and deterministic systems their run on the word.
pub fn cmd_simulate(p: &ProjectFile, sys: &str, args: &SimulateArgs) -> Result<Vec<u8>, CliError> {
    let need = |what: &str| CliError::usage(format!("simulating `{sys}` needs --{what}"));
    match p.system(sys)? {
        System::Ode(s) => {
            let init = args.init.as_ref().ok_or_else(|| need("init"))?;
            let t1 = args.t1.ok_or_else(|| need("t1"))?;
            let h = args.h.ok_or_else(|| need("h"))?;
            let traj = rk4_solve(s, init, &ParamSignal::Constant(args.params.clone()), args.t0, t1, h)
                .map_err(core)?;
            let mut out = Vec::new();
            traj.write_csv(&mut out).map_err(core)?;
            Ok(out)
        }
        System::Stoch(s) => {
            let start = args.start.as_deref().ok_or_else(|| need("start"))?;
            let word: Vec<&str> = args.word.iter().map(String::as_str).collect();
            let path = simulate_stoch(s, start, &word, args.seed).map_err(core)?;
            let rows = path.iter().enumerate().map(|(t, state)| {
                let output = s.readout().apply_label(state).expect("state of the system").to_string();
                let input = if t == 0 { String::new() } else { word[t - 1].to_string() };
                [t.to_string(), input, state.clone(), output]
            });
            csv_bytes(&["step", "input", "state", "output"], rows)
        }
        System::Det(s) => {
            let start = args.start.as_deref().ok_or_else(|| need("start"))?;
            let word: Vec<&str> = args.word.iter().map(String::as_str).collect();
            let run = run_word(s, start, &word).map_err(core)?;
            let rows = run.into_iter().enumerate().map(|(t, (state, output))| {
                let input = if t == 0 { String::new() } else { word[t - 1].to_string() };
                [t.to_string(), input, state, output]
            });
            csv_bytes(&["step", "input", "state", "output"], rows)
        }
    }
}
