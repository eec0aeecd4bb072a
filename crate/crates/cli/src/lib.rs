//! Commands behind the `snc` binary. Each command loads a scenario, applies
//! command-line overrides, and returns result rows plus an exit status; the
//! binary only parses flags and writes the rows out.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use snc_core::bounds::{closed_form_backlog, closed_form_delay};
use snc_core::scenario::KindSelection;
use snc_core::sim::{check_bound, empirical_tail, SimError, ValidationReport, Verdict};
use snc_core::{
    backlog_bound, delay_bound, parse_scenario, simulate_tandem, BoundError, BoundKind,
    BoundResult, Horizon, ResultRow, Scenario, ScenarioError,
};
use thiserror::Error;

pub const PRESET_DIR_ENV: &str = "SNC_PRESET_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Usage = 1,
    Unstable = 2,
    ValidationFailed = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Scenario {
        path: PathBuf,
        source: ScenarioError,
    },
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write results: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Bound(e) if e.is_instability() => Exit::Unstable,
            CliError::Sim(SimError::Unstable { .. } | SimError::QueueOverflow { .. }) => {
                Exit::Unstable
            }
            _ => Exit::Usage,
        }
    }
}

/// Flags that shadow scenario fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epsilon: Option<Vec<f64>>,
    pub hops: Option<Vec<u32>>,
    pub through: Option<u32>,
    pub cross: Option<u32>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    pub exit: Exit,
    /// Human-readable remarks for stderr.
    pub notes: Vec<String>,
}

impl Report {
    fn from_rows(rows: Vec<ResultRow>, notes: Vec<String>) -> Self {
        let exit = if !rows.is_empty() && rows.iter().all(|r| !r.stable) {
            Exit::Unstable
        } else {
            Exit::Success
        };
        Report { rows, exit, notes }
    }
}

/// Directory searched for named presets: `$SNC_PRESET_DIR`, else the
/// `presets/` folder of this source tree.
pub fn preset_dir() -> PathBuf {
    std::env::var_os(PRESET_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets"))
}

/// An existing path is used as is; otherwise `name` is looked up as
/// `<preset dir>/<name>.toml`.
pub fn resolve_scenario(name: &str) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return Ok(direct);
    }
    let dir = preset_dir();
    let preset = dir.join(format!("{name}.toml"));
    if preset.is_file() {
        return Ok(preset);
    }
    Err(CliError::Usage(format!(
        "no scenario file {name:?} and no preset of that name in {}",
        dir.display()
    )))
}

pub fn load_scenario(name: &str, overrides: &Overrides) -> Result<Scenario, CliError> {
    let path = resolve_scenario(name)?;
    let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let mut scenario =
        parse_scenario(&text).map_err(|source| CliError::Scenario { path, source })?;
    apply_overrides(&mut scenario, overrides)?;
    Ok(scenario)
}

pub fn apply_overrides(scenario: &mut Scenario, o: &Overrides) -> Result<(), CliError> {
    if let Some(eps) = &o.epsilon {
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(CliError::Usage(format!(
                "--epsilon values must lie in (0, 1], got {eps:?}"
            )));
        }
        let bound = scenario.bound.as_mut().ok_or_else(|| {
            CliError::Usage("--epsilon needs a [bound] block in the scenario".into())
        })?;
        bound.epsilon = eps.clone();
    }
    if let Some(hops) = &o.hops {
        if hops.is_empty() || hops.contains(&0) {
            return Err(CliError::Usage(format!(
                "--hops values must be at least 1, got {hops:?}"
            )));
        }
        scenario.network.hops = hops.clone();
    }
    if let Some(n) = o.through {
        if n == 0 {
            return Err(CliError::Usage("--through must be at least 1".into()));
        }
        scenario.traffic.through = n;
    }
    if let Some(m) = o.cross {
        scenario.traffic.cross = m;
    }
    if let Some(seed) = o.seed {
        let sim = scenario
            .sim
            .as_mut()
            .ok_or_else(|| CliError::Usage("--seed needs a [sim] block in the scenario".into()))?;
        sim.seed = seed;
    }
    Ok(())
}

fn scenario_err(scenario: &Scenario, source: ScenarioError) -> CliError {
    CliError::Scenario {
        path: PathBuf::from(&scenario.id),
        source,
    }
}

/// Stationary bounds use the closed forms; a finite horizon goes through the
/// general per-hop sums.
fn compute_bound(
    scenario: &Scenario,
    kind: BoundKind,
    epsilon: f64,
    hops: u32,
    through: u32,
    cross: u32,
) -> Result<BoundResult, BoundError> {
    let spec = scenario.bound_spec().expect("checked by caller");
    let tandem = scenario.tandem(hops, through, cross);
    let search = scenario.theta_search(&tandem);
    match (spec.horizon, kind) {
        (Horizon::Infinite, BoundKind::Delay) => closed_form_delay(&tandem, epsilon, &search),
        (Horizon::Infinite, BoundKind::Backlog) => closed_form_backlog(&tandem, epsilon, &search),
        (horizon, BoundKind::Delay) => delay_bound(&tandem.to_path()?, epsilon, horizon, &search),
        (horizon, BoundKind::Backlog) => {
            backlog_bound(&tandem.to_path()?, epsilon, horizon, &search)
        }
    }
}

fn row(
    scenario: &Scenario,
    kind: BoundKind,
    epsilon: f64,
    hops: u32,
    through: u32,
    cross: u32,
) -> ResultRow {
    ResultRow {
        scenario_id: scenario.id.clone(),
        kind,
        hops,
        through,
        cross,
        epsilon,
        theta_star: None,
        bound_value: f64::INFINITY,
        stable: false,
        empirical_frequency: None,
        confidence_limit: None,
    }
}

/// Rows for one `(H, N, M)` point, in kind-major then epsilon order. An
/// unstable point yields rows flagged `stable = false` with an infinite bound.
fn point_rows(
    scenario: &Scenario,
    hops: u32,
    through: u32,
    cross: u32,
) -> Result<Vec<ResultRow>, CliError> {
    let spec = scenario
        .bound_spec()
        .map_err(|e| scenario_err(scenario, e))?;
    let mut rows = Vec::new();
    for kind in spec.kind.kinds() {
        for &eps in &spec.epsilon {
            let mut r = row(scenario, kind, eps, hops, through, cross);
            match compute_bound(scenario, kind, eps, hops, through, cross) {
                Ok(b) => {
                    r.theta_star = Some(b.theta_star);
                    r.bound_value = b.value;
                    r.stable = b.stable_at_theta_star;
                }
                Err(e) if e.is_instability() => {}
                Err(e) => return Err(e.into()),
            }
            rows.push(r);
        }
    }
    Ok(rows)
}

fn instability_note(scenario: &Scenario, rows: &[ResultRow]) -> Option<String> {
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| !r.stable)
        .map(|r| format!("H={} N={} M={}", r.hops, r.through, r.cross))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if bad.is_empty() {
        return None;
    }
    Some(format!(
        "{}: no theta satisfies the stability condition C > N*alpha(theta) + M*alpha_c(theta) at {}",
        scenario.id,
        bad.join(", ")
    ))
}

fn sweep<I>(scenario: &Scenario, points: I) -> Result<Report, CliError>
where
    I: IntoParallelIterator<Item = (u32, u32, u32)>,
{
    let chunks: Vec<Vec<ResultRow>> = points
        .into_par_iter()
        .map(|(h, n, m)| point_rows(scenario, h, n, m))
        .collect::<Result<_, _>>()?;
    let rows: Vec<ResultRow> = chunks.into_iter().flatten().collect();
    let notes = instability_note(scenario, &rows).into_iter().collect();
    Ok(Report::from_rows(rows, notes))
}

/// Bounds at the first hop count and the traffic block's `(N, M)`.
pub fn cmd_bound(scenario: &Scenario) -> Result<Report, CliError> {
    let h = scenario.network.hops[0];
    sweep(
        scenario,
        vec![(h, scenario.traffic.through, scenario.traffic.cross)],
    )
}

/// One point per hop count in the network block.
pub fn cmd_sweep_hops(scenario: &Scenario) -> Result<Report, CliError> {
    let (n, m) = (scenario.traffic.through, scenario.traffic.cross);
    let points: Vec<_> = scenario.network.hops.iter().map(|&h| (h, n, m)).collect();
    sweep(scenario, points)
}

/// One point per `(N, M)` in the flow sweep, for every hop count.
pub fn cmd_sweep_flows(scenario: &Scenario) -> Result<Report, CliError> {
    if scenario.network.flow_totals.is_none() && scenario.network.flow_pairs.is_none() {
        return Err(CliError::Usage(format!(
            "{}: sweep-flows needs network.flow_totals or network.flow_pairs",
            scenario.id
        )));
    }
    let flows = scenario.flow_points();
    let points: Vec<_> = scenario
        .network
        .hops
        .iter()
        .flat_map(|&h| flows.iter().map(move |&(n, m)| (h, n, m)))
        .collect();
    sweep(scenario, points)
}

fn sim_targets(scenario: &Scenario) -> (Vec<BoundKind>, Vec<f64>) {
    match &scenario.bound {
        Some(b) => (b.kind.kinds(), b.epsilon.clone()),
        None => (KindSelection::Both.kinds(), vec![1e-2]),
    }
}

/// Simulates every hop count and reports, per kind and epsilon, the smallest
/// threshold the samples exceed with frequency at most epsilon.
pub fn cmd_simulate(scenario: &Scenario) -> Result<Report, CliError> {
    let (n, m) = (scenario.traffic.through, scenario.traffic.cross);
    let (kinds, epsilons) = sim_targets(scenario);
    let mut rows = Vec::new();
    for &h in &scenario.network.hops {
        let sim = scenario
            .sim_scenario(h, n, m)
            .map_err(|e| scenario_err(scenario, e))?;
        let result = simulate_tandem(&sim)?;
        for &kind in &kinds {
            let samples = match kind {
                BoundKind::Delay => &result.delay_samples,
                BoundKind::Backlog => &result.backlog_samples,
            };
            for &eps in &epsilons {
                let q = samples
                    .quantile_above(eps)
                    .expect("at least one measured slot") as f64;
                let tail = empirical_tail(samples, q);
                rows.push(ResultRow {
                    bound_value: q,
                    stable: true,
                    empirical_frequency: Some(tail.frequency),
                    confidence_limit: Some(tail.upper_confidence),
                    ..row(scenario, kind, eps, h, n, m)
                });
            }
        }
    }
    Ok(Report::from_rows(rows, Vec::new()))
}

/// Simulates every hop count and checks each analytic bound against the
/// empirical tail. With `self_test` the bounds are halved first, which a
/// working harness should flag.
pub fn cmd_validate(
    scenario: &Scenario,
    self_test: bool,
) -> Result<(Report, Vec<ValidationReport>), CliError> {
    let spec = scenario
        .bound_spec()
        .map_err(|e| scenario_err(scenario, e))?;
    let slack = scenario
        .sim_spec()
        .map_err(|e| scenario_err(scenario, e))?
        .slack;
    let (n, m) = (scenario.traffic.through, scenario.traffic.cross);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut notes = Vec::new();
    for &h in &scenario.network.hops {
        let sim = scenario
            .sim_scenario(h, n, m)
            .map_err(|e| scenario_err(scenario, e))?;
        let result = simulate_tandem(&sim)?;
        for kind in spec.kind.kinds() {
            for &eps in &spec.epsilon {
                let mut bound = compute_bound(scenario, kind, eps, h, n, m)?;
                if self_test {
                    bound.value *= 0.5;
                }
                let report = check_bound(&result, &bound, eps, slack);
                if let Some(w) = &report.warning {
                    notes.push(format!("H={h} {kind} epsilon={eps:e}: {w}"));
                }
                notes.push(format!(
                    "H={h} {kind} epsilon={eps:e}: bound {:.4} {}, empirical {:.3e} (upper 95% {:.3e}) -> {:?}",
                    report.bound_value,
                    kind.unit(),
                    report.tail.frequency,
                    report.tail.upper_confidence,
                    report.verdict
                ));
                rows.push(ResultRow {
                    theta_star: Some(bound.theta_star),
                    bound_value: bound.value,
                    stable: bound.stable_at_theta_star,
                    empirical_frequency: Some(report.tail.frequency),
                    confidence_limit: Some(report.tail.upper_confidence),
                    ..row(scenario, kind, eps, h, n, m)
                });
                reports.push(report);
            }
        }
    }
    let exit = if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        Exit::ValidationFailed
    } else {
        Exit::Success
    };
    Ok((Report { rows, exit, notes }, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn voice() -> Scenario {
        load_scenario("voice-fig3", &Overrides::default()).unwrap()
    }

    #[test]
    fn presets_resolve_by_name() {
        let p = resolve_scenario("voice-fig3").unwrap();
        assert!(p.ends_with("voice-fig3.toml"));
        assert!(matches!(
            resolve_scenario("no-such-preset"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn overrides_shadow_fields() {
        let mut s = voice();
        let o = Overrides {
            epsilon: Some(vec![1e-3, 1e-6]),
            hops: Some(vec![4]),
            through: Some(10),
            cross: Some(0),
            seed: None,
        };
        apply_overrides(&mut s, &o).unwrap();
        assert_eq!(s.network.hops, vec![4]);
        assert_eq!((s.traffic.through, s.traffic.cross), (10, 0));
        assert_eq!(s.bound.unwrap().epsilon, vec![1e-3, 1e-6]);
        let mut s = voice();
        let bad = Overrides {
            seed: Some(1),
            ..Default::default()
        };
        assert!(matches!(
            apply_overrides(&mut s, &bad),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn sweep_flows_requires_a_sweep() {
        assert!(matches!(cmd_sweep_flows(&voice()), Err(CliError::Usage(_))));
    }
}
