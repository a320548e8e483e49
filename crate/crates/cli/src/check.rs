//! The `check` command: randomized law and theorem suites plus checks on
//! the entries of the given projects.
//!
//! Case `c` of a suite draws from its own ChaCha8 stream, derived from the
//! seed, the suite's position and `c`, so cases can run in parallel and the
//! report does not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use lensdyn_core::det::{
    check_matrix_theorem, check_square, compose_charts, compose_lens_system, compose_lenses,
    paste_horizontal, paste_vertical, representable_span, steady_span, walking_cycle, DetChart,
    DetLens, SquareVerdict,
};
use lensdyn_core::gen;
use lensdyn_core::ode::check_solve_functoriality;
use lensdyn_core::stoch::{compose_lens_stoch, embed_det, step_dist, Dist};
use lensdyn_core::{IsoOutcome, Lens, ParamSignal, ProjectFile, System};

use crate::{fixtures, CliError};

/// Failures listed per suite; the count is always exact.
const SHOWN_FAILURES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    pub seed: u64,
    pub cases: usize,
    pub tol: f64,
    /// Also check the bundled fixtures.
    pub bundled: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seed: 0,
            cases: 200,
            tol: 1e-9,
            bundled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub cases: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    pub cases: usize,
    pub tol: f64,
    pub results: Vec<SuiteResult>,
    pub passed: bool,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable");
        s.push('\n');
        s
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn case_rng(seed: u64, suite: u64, case: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((suite << 32) | case as u64);
    rng
}

/// Runs `cases` seeded cases of one suite in parallel.
pub fn run_suite<F>(name: &str, tag: u64, seed: u64, cases: usize, case: F) -> SuiteResult
where
    F: Fn(&mut ChaCha8Rng) -> Result<(), String> + Sync,
{
    let outcomes: Vec<Result<(), String>> = (0..cases)
        .into_par_iter()
        .map(|c| case(&mut case_rng(seed, tag, c)).map_err(|e| format!("case {c}: {e}")))
        .collect();
    collect(name, outcomes)
}

fn collect(name: &str, outcomes: Vec<Result<(), String>>) -> SuiteResult {
    let cases = outcomes.len();
    let errors: Vec<String> = outcomes.into_iter().filter_map(Result::err).collect();
    SuiteResult {
        suite: name.to_string(),
        cases,
        failed: errors.len(),
        failures: errors.into_iter().take(SHOWN_FAILURES).collect(),
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Associativity and unit laws for lenses and charts, and the action of
/// lens composition on systems.
pub fn lens_law_case(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let a = gen::random_interface(rng, "a", 3);
    let b = gen::random_interface(rng, "b", 3);
    let c = gen::random_interface(rng, "c", 3);
    let d = gen::random_interface(rng, "d", 3);
    let (l1, l2, l3) = (
        gen::random_lens(rng, &a, &b),
        gen::random_lens(rng, &b, &c),
        gen::random_lens(rng, &c, &d),
    );
    let lc = |x: &DetLens, y: &DetLens| compose_lenses(x, y).map_err(text);
    ensure(lc(&lc(&l1, &l2)?, &l3)? == lc(&l1, &lc(&l2, &l3)?)?, || "lens associativity".into())?;
    ensure(lc(&DetLens::identity(&a), &l1)? == l1, || "lens left unit".into())?;
    ensure(lc(&l1, &DetLens::identity(&b))? == l1, || "lens right unit".into())?;

    let (c1, c2, c3) = (
        gen::random_chart(rng, &a, &b),
        gen::random_chart(rng, &b, &c),
        gen::random_chart(rng, &c, &d),
    );
    let cc = |x: &DetChart, y: &DetChart| compose_charts(x, y).map_err(text);
    ensure(cc(&cc(&c1, &c2)?, &c3)? == cc(&c1, &cc(&c2, &c3)?)?, || "chart associativity".into())?;
    ensure(cc(&DetChart::identity(&a), &c1)? == c1, || "chart left unit".into())?;
    ensure(cc(&c1, &DetChart::identity(&b))? == c1, || "chart right unit".into())?;

    let sys = gen::random_system_on(rng, &a, 4);
    let once = compose_lens_system(&lc(&l1, &l2)?, &sys).map_err(text)?;
    let twice = compose_lens_system(&l2, &compose_lens_system(&l1, &sys).map_err(text)?).map_err(text)?;
    ensure(once == twice, || "wiring along a composite lens".into())
}

/// Both pastings of generated commuting squares commute.
pub fn pasting_case(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let (upper, lower) = gen::random_vertical_pair(rng, 3);
    let v = check_square(&paste_vertical(&upper, &lower).map_err(text)?);
    ensure(v.commutes(), || format!("vertical pasting: {v}"))?;
    let (west, east) = gen::random_horizontal_pair(rng, 3);
    let h = check_square(&paste_horizontal(&west, &east).map_err(text)?);
    ensure(h.commutes(), || format!("horizontal pasting: {h}"))
}

/// A square with one corrupted entry fails at the predicted place.
pub fn mutation_case(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let sq = gen::random_square(rng, 3);
    let Some((broken, output, input)) = gen::mutate_square(rng, &sq) else {
        return Ok(());
    };
    let got = check_square(&broken);
    let want = SquareVerdict::InputsDiffer { output, input };
    ensure(got == want, || format!("expected `{want}`, got `{got}`"))
}

/// Wiring commutes with taking period-`k` orbits, `k = 1, 2, 3`.
pub fn matrix_case(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let sys = gen::random_det_system(rng, 5);
    let lens = gen::random_lens_from(rng, sys.interface(), "w", 5);
    for k in 1..=3 {
        match check_matrix_theorem(&lens, &sys, k).map_err(text)? {
            IsoOutcome::Witness(_) => {}
            mismatch => return Err(format!("k = {k}: {mismatch}")),
        }
    }
    Ok(())
}

/// The 1-cycle represents steady states.
pub fn degeneracy_case(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let sys = gen::random_det_system(rng, 5);
    let rep = representable_span(&walking_cycle(1).map_err(text)?, &sys).map_err(text)?;
    ensure(rep == steady_span(&sys), || "representable span of the 1-cycle differs from steady_span".into())
}

/// Exact normalisation under stepping and wiring, and Dirac embedding
/// commuting with wiring.
pub fn stochastic_case(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let sys = gen::random_stoch_system(rng, 4, 12);
    let d = gen::random_dist(rng, sys.states(), 12);
    for i in sys.inputs().iter() {
        let next = step_dist(&sys, &d, i).map_err(text)?;
        ensure(next.is_normalised(), || format!("step on `{i}` lost mass"))?;
    }
    let lens = gen::random_lens_from(rng, sys.interface(), "w", 4);
    let wired = compose_lens_stoch(&lens, &sys).map_err(text)?;
    ensure(
        wired.transitions().iter().all(Dist::is_normalised),
        || "wired transition lost mass".into(),
    )?;
    let det = gen::random_det_system(rng, 4);
    let lens = gen::random_lens_from(rng, det.interface(), "w", 4);
    let a = embed_det(&compose_lens_system(&lens, &det).map_err(text)?);
    let b = compose_lens_stoch(&lens, &embed_det(&det)).map_err(text)?;
    ensure(a == b, || "embedding does not commute with wiring".into())
}

/// Suites over the entries of one project.
fn project_suites(label: &str, p: &ProjectFile, tol: f64) -> Vec<SuiteResult> {
    let mut out = Vec::new();
    if !p.squares.is_empty() {
        let outcomes = p
            .squares
            .keys()
            .map(|name| {
                let sq = p.square(name).map_err(text)?;
                let v = check_square(&sq);
                ensure(v.commutes(), || format!("square `{name}` does not commute: {v}"))
            })
            .collect();
        out.push(collect(&format!("{label}: squares"), outcomes));
    }
    let mut pairs = Vec::new();
    for (ln, lens) in &p.lenses {
        for (sn, sys) in &p.systems {
            if let (Lens::Det(l), System::Det(s)) = (lens, sys) {
                if l.source() == s.interface() {
                    pairs.push((ln, l, sn, s));
                }
            }
        }
    }
    if !pairs.is_empty() {
        let outcomes = pairs
            .iter()
            .map(|(ln, l, sn, s)| {
                for k in 1..=3 {
                    match check_matrix_theorem(l, s, k).map_err(text)? {
                        IsoOutcome::Witness(_) => {}
                        m => return Err(format!("lens `{ln}` on system `{sn}`, k = {k}: {m}")),
                    }
                }
                Ok(())
            })
            .collect();
        out.push(collect(&format!("{label}: matrix theorem"), outcomes));
    }
    if !p.ode_checks.is_empty() {
        let outcomes = p
            .ode_checks
            .iter()
            .map(|(name, c)| {
                let (Lens::Ode(l), System::Ode(s)) = (p.lens(&c.lens).map_err(text)?, p.system(&c.system).map_err(text)?)
                else {
                    return Err(format!("odeCheck `{name}`: not an ODE lens and system"));
                };
                let signal = ParamSignal::Constant(c.params.clone());
                let dev = check_solve_functoriality(l, s, &c.init, &signal, c.t0, c.t1, c.h, tol).map_err(text)?;
                ensure(dev.passed, || {
                    format!("odeCheck `{name}`: substitute-then-solve deviates by {:e} > {tol:e}", dev.max)
                })
            })
            .collect();
        out.push(collect(&format!("{label}: ode functoriality"), outcomes));
    }
    out
}

/// Runs every suite. `projects` pairs a display path with file contents.
pub fn cmd_check(command: Vec<String>, projects: &[(String, String)], opts: &CheckOptions) -> Result<RunReport, CliError> {
    let mut sources: Vec<(String, String)> = Vec::new();
    if opts.bundled {
        sources.extend(
            fixtures::BUNDLED
                .iter()
                .map(|(n, t)| (format!("bundled:{n}"), t.to_string())),
        );
    }
    sources.extend(projects.iter().cloned());
    let loaded = sources
        .iter()
        .map(|(path, text)| {
            ProjectFile::from_json(text).map_err(|e| CliError::usage(format!("{path}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let (seed, n) = (opts.seed, opts.cases);
    let mut results = vec![
        run_suite("lens laws", 1, seed, n, lens_law_case),
        run_suite("square pasting", 2, seed, n, pasting_case),
        run_suite("square mutation", 3, seed, n, mutation_case),
        run_suite("matrix theorem", 4, seed, n, matrix_case),
        run_suite("steady-state degeneracy", 5, seed, n, degeneracy_case),
        run_suite("stochastic exactness", 6, seed, n, stochastic_case),
    ];
    for ((path, _), p) in sources.iter().zip(&loaded) {
        results.extend(project_suites(path, p, opts.tol));
    }
    let passed = results.iter().all(SuiteResult::passed);
    Ok(RunReport {
        command,
        inputs: sources
            .iter()
            .map(|(path, text)| InputDigest {
                path: path.clone(),
                sha256: sha256_hex(text.as_bytes()),
            })
            .collect(),
        seed,
        cases: n,
        tol: opts.tol,
        results,
        passed,
    })
}
