use std::fs;
use std::path::{Path, PathBuf};

use distopt::optimizer::{analyze_candidate, certify, determine_d_star, generate_carveout, optimize, OptimizationResult};
use distopt::oracle::{
    boundary_identities, brute_force_w_max, crosscheck_thresholds, find_scenario_instance, finite_difference_facts,
    saturated_instance, underserved_instance, uniform_instance, OracleReport, BRUTE_FORCE_CAP,
};
use distopt::participation::{actual, kappa};
use distopt::sequence::build_sequence;
use distopt::thresholds::VerdictKind;
use distopt::{Distribution, Error, TransformSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::curves::{threshold_rows, write_crossing, write_thresholds};
use crate::error::{CliError, Outcome};
use crate::schema::{
    to_json, AnalysisReport, CarveoutRecord, CarveoutReport, DistributionSummary, InstanceFile, Loaded, RunReport,
    SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Search budget for `gen scenario:<kind>`.
pub const SCENARIO_BUDGET: usize = 2000;

pub fn read_instance(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    InstanceFile::parse(&text)?.load()
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Curve file paths derived from the report path.
pub fn curve_paths(output: &Path) -> (PathBuf, PathBuf) {
    (output.with_extension("crossing.csv"), output.with_extension("thresholds.csv"))
}

fn outcome_of(kind: VerdictKind) -> Outcome {
    if kind.is_degenerate() {
        Outcome::Degenerate
    } else {
        Outcome::Ok
    }
}

struct Rendered {
    report: String,
    crossing: Vec<u8>,
    thresholds: Vec<u8>,
    outcome: Outcome,
}

fn render_optimize(inst: &Loaded) -> Result<Rendered, CliError> {
    let r: OptimizationResult = optimize(&inst.d_all, &inst.config, inst.model.as_ref(), inst.transform.as_ref())?;
    info!(verdict = r.verdict.kind.as_str(), n_star = r.n_star, steps = r.stats.steps, "optimized");
    let report = RunReport::build(&r, inst.model.as_ref(), inst.transform.as_ref())?;
    let full = build_sequence(&inst.d_all, &inst.config.sequence, inst.model.as_ref(), inst.transform.as_ref())?;
    let mut crossing = Vec::new();
    write_crossing(&mut crossing, &full)?;
    // The instance's candidate when it is still available, else the probe block.
    let block = match inst.file.candidate.as_deref().map(|id| remaining_block(inst, &r, id)) {
        Some(Ok(b)) => Some(b),
        _ => r.probe.as_ref().map(|p| p.block_distribution()).transpose()?,
    };
    let rows = match &block {
        Some(b) => threshold_rows(&r, b, &inst.config, inst.model.as_ref(), inst.transform.as_ref())?,
        None => Vec::new(),
    };
    let mut thresholds = Vec::new();
    write_thresholds(&mut thresholds, &rows)?;
    Ok(Rendered { report: to_json(&report), crossing, thresholds, outcome: outcome_of(r.verdict.kind) })
}

fn write_rendered(out: &Rendered, output: Option<&Path>, format: Format) -> Result<(), CliError> {
    if format == Format::Csv {
        let path = output.ok_or_else(|| CliError::Usage("--format csv needs --output".into()))?;
        let (c, t) = curve_paths(path);
        fs::write(&c, &out.crossing).map_err(|e| CliError::io(&c, e))?;
        fs::write(&t, &out.thresholds).map_err(|e| CliError::io(&t, e))?;
    }
    emit(output, &out.report)
}

pub fn cmd_optimize(input: &Path, output: Option<&Path>, format: Format) -> Result<Outcome, CliError> {
    if format == Format::Csv && output.is_none() {
        return Err(CliError::Usage("--format csv needs --output".into()));
    }
    let inst = read_instance(input)?;
    let out = render_optimize(&inst)?;
    write_rendered(&out, output, format)?;
    Ok(out.outcome)
}

/// Runs every `*.json` instance in `dir`, writing `<stem>.report.json` files into `output`.
pub fn cmd_batch(dir: &Path, output: &Path, format: Format) -> Result<Outcome, CliError> {
    let mut inputs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    inputs.sort();
    // Validate everything first so a bad file leaves no output behind.
    let loaded: Vec<(PathBuf, Loaded)> =
        inputs.into_iter().map(|p| read_instance(&p).map(|l| (p, l))).collect::<Result<_, _>>()?;
    let rendered: Vec<(PathBuf, Rendered)> =
        loaded.iter().map(|(p, l)| render_optimize(l).map(|r| (p.clone(), r))).collect::<Result<_, _>>()?;
    fs::create_dir_all(output).map_err(|e| CliError::io(output, e))?;
    let mut outcome = Outcome::Ok;
    for (p, r) in &rendered {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let target = output.join(format!("{stem}.report.json"));
        debug!(input = %p.display(), output = %target.display(), "batch item");
        write_rendered(r, Some(&target), format)?;
        outcome = outcome.worst(r.outcome);
    }
    Ok(outcome)
}

/// What is left of point `id` once D* is taken out.
fn remaining_block(inst: &Loaded, r: &OptimizationResult, id: &str) -> Result<Distribution, CliError> {
    let e = inst.d_all.entries().find(|e| e.point.id == id).ok_or_else(|| Error::UnknownPoint(id.to_string()))?;
    let left = e.weight - r.d_star.weight_of(id);
    if left <= 0.0 || r.excluded.iter().any(|x| x == id) {
        return Err(Error::Precondition(format!("candidate {id} is not available past D*")).into());
    }
    Ok(Distribution::singleton(e.point.clone(), left)?)
}

fn candidate_id(inst: &Loaded, r2: Option<&str>) -> Option<String> {
    r2.map(str::to_string).or_else(|| inst.file.candidate.clone())
}

pub fn cmd_analyze(input: &Path, r2: Option<&str>, output: Option<&Path>) -> Result<Outcome, CliError> {
    let inst = read_instance(input)?;
    let id = candidate_id(&inst, r2).ok_or_else(|| CliError::Usage("analyze needs --r2 or a candidate in the instance".into()))?;
    if !inst.d_all.contains(&id) {
        return Err(Error::UnknownPoint(id).into());
    }
    let (m, t) = (inst.model.as_ref(), inst.transform.as_ref());
    let r = determine_d_star(&inst.d_all, &inst.config, m, t)?;
    let v = analyze_candidate(&r, &inst.d_all, &id, &inst.config, m, t)?;
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        candidate: id,
        d_star: DistributionSummary::of(&r.d_star, m, t)?,
        verdict: (&v).into(),
        thresholds: v.witness.clone(),
    };
    emit(output, &to_json(&report))?;
    Ok(outcome_of(r.verdict.kind))
}

pub fn cmd_carveout(input: &Path, r2: Option<&str>, output: Option<&Path>) -> Result<Outcome, CliError> {
    let inst = read_instance(input)?;
    let (m, t) = (inst.model.as_ref(), inst.transform.as_ref());
    let r = determine_d_star(&inst.d_all, &inst.config, m, t)?;
    let id = candidate_id(&inst, r2);
    let block = match &id {
        Some(id) => Some(remaining_block(&inst, &r, id)?),
        None => r.probe.as_ref().map(|p| p.block_distribution()).transpose()?,
    };
    let d_star = DistributionSummary::of(&r.d_star, m, t)?;
    let Some(block) = block else {
        let report = CarveoutReport {
            schema_version: SCHEMA_VERSION,
            candidate: None,
            d_star,
            kappa: None,
            feasible: false,
            carveout: None,
            certified: None,
        };
        emit(output, &to_json(&report))?;
        return Ok(outcome_of(r.verdict.kind));
    };
    let k = kappa(m, &r.d_star, &r.d_star.combine(&block))?;
    let (record, certified) = match generate_carveout(&r.d_star, &block, &inst.config, m, t) {
        Ok(c) => {
            let cert = certify(&c, &r.d_star, &block, m, t, inst.config.crossing_tolerance)?;
            (Some(CarveoutRecord::of(&c, &block, m, t)?), Some(cert.all()))
        }
        Err(Error::InfeasibleCarveout | Error::Precondition(_)) => (None, None),
        Err(e) => return Err(e.into()),
    };
    let report = CarveoutReport {
        schema_version: SCHEMA_VERSION,
        candidate: id,
        d_star,
        kappa: Some(k),
        feasible: record.is_some(),
        carveout: record,
        certified,
    };
    emit(output, &to_json(&report))?;
    Ok(outcome_of(r.verdict.kind))
}

pub fn cmd_gen(seed: u64, size: usize, profile: &str, output: Option<&Path>) -> Result<Outcome, CliError> {
    if size == 0 {
        return Err(CliError::Usage("--size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let file = match profile {
        "uniform" => InstanceFile::from_draft(&uniform_instance(&mut rng, size), TransformSpec::identity(), None),
        "underserved" => InstanceFile::from_draft(&underserved_instance(&mut rng, size), TransformSpec::identity(), None),
        "saturated" => InstanceFile::from_draft(&saturated_instance(&mut rng, size), TransformSpec::identity(), None),
        other => {
            let kind = other
                .strip_prefix("scenario:")
                .ok_or_else(|| CliError::Usage(format!("unknown profile {other}")))?
                .parse::<VerdictKind>()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let found = find_scenario_instance(kind, SCENARIO_BUDGET, seed)?
                .ok_or_else(|| CliError::Usage(format!("no {} instance found within {SCENARIO_BUDGET} attempts", kind.as_str())))?;
            info!(attempts = found.attempts, "scenario instance found");
            let candidate = found.candidate.filter(|_| needs_candidate(kind));
            InstanceFile::from_draft(&found.draft, found.transform, candidate)
        }
    };
    emit(output, &file.to_json())?;
    Ok(Outcome::Ok)
}

fn needs_candidate(kind: VerdictKind) -> bool {
    matches!(
        kind,
        VerdictKind::BothPreferExtension
            | VerdictKind::ConsumerPrefersExtension
            | VerdictKind::ProducerPrefersExtension
            | VerdictKind::NeitherPrefersExtension
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceCheck {
    pub best_prefix_w: f64,
    pub best_subset_w: f64,
    pub optimizer_w: f64,
    pub matches_prefix: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheckReport {
    pub schema_version: u32,
    pub seed: u64,
    pub samples: usize,
    pub crosscheck: OracleReport,
    pub finite_differences: OracleReport,
    pub boundary_identities: OracleReport,
    pub instance: Option<InstanceCheck>,
    pub passed: bool,
}

pub fn cmd_oracle_check(
    seed: u64,
    samples: usize,
    iota: f64,
    input: Option<&Path>,
    output: Option<&Path>,
) -> Result<bool, CliError> {
    let instance = match input {
        Some(p) => {
            let inst = read_instance(p)?;
            if inst.d_all.len() > BRUTE_FORCE_CAP {
                return Err(Error::SizeCap { max: BRUTE_FORCE_CAP, got: inst.d_all.len() }.into());
            }
            let (m, t) = (inst.model.as_ref(), inst.transform.as_ref());
            let best = brute_force_w_max(&inst.d_all, m, t)?;
            let r = determine_d_star(&inst.d_all, &inst.config, m, t)?;
            let w = actual(m, &r.d_star)?;
            Some(InstanceCheck {
                best_prefix_w: best.best_prefix_w,
                best_subset_w: best.best_subset_w,
                optimizer_w: w,
                matches_prefix: (w - best.best_prefix_w).abs() <= 1e-12 * w.abs().max(1.0),
            })
        }
        None => None,
    };
    let crosscheck = crosscheck_thresholds(samples, seed, iota)?;
    let fd = finite_difference_facts();
    let boundary = boundary_identities();
    let passed =
        crosscheck.passed() && fd.passed() && boundary.passed() && instance.as_ref().is_none_or(|i| i.matches_prefix);
    let report = OracleCheckReport {
        schema_version: SCHEMA_VERSION,
        seed,
        samples,
        crosscheck,
        finite_differences: fd,
        boundary_identities: boundary,
        instance,
        passed,
    };
    emit(output, &to_json(&report))?;
    Ok(passed)
}
