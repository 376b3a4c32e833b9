use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    ClassifyArgs, CliError, CriticalArgs, ErrorKind, ProfileArgs, RunConfig, SolverArgs, SweepArgs,
};
use crate::critical::{build_angle_map_seeded, AngleLandscape, CriticalError, CriticalOptions};
use crate::evolve::classify::SnapshotWriter;
use crate::evolve::{
    estimate_critical_angle_pde, make_smoothing, sweep as sweep_angles, BisectionOptions,
    Classifier, ClassifyError, Decision, EvolveError, Evidence, PdeCriticalEstimate,
    SmoothingFamily, SolverParams, StepControl, Verdict,
};
use crate::evolve::smoothing::SmoothingError;
use crate::profile::{
    expander_residual, integrate_one_sheeted, integrate_two_sheeted, ProfileError, ProfileHeader,
    ShootingOptions,
};

fn profile_error(e: ProfileError) -> CliError {
    match e {
        ProfileError::InvalidParameter(m) => CliError::invalid(m),
        other => CliError::solver(other.to_string()),
    }
}

fn critical_error(e: CriticalError) -> CliError {
    match e {
        CriticalError::Profile(p) => profile_error(p),
        CriticalError::InvalidParameter(m) => CliError::invalid(m),
        e @ CriticalError::BelowCritical { .. } => CliError::invalid(e.to_string()),
        e @ CriticalError::MultipleMinima { .. } => CliError::new(ErrorKind::MultipleMinima, e.to_string()),
        other => CliError::solver(other.to_string()),
    }
}

fn classify_error(e: ClassifyError) -> CliError {
    match e {
        ClassifyError::InvalidParameter(m) => CliError::invalid(m),
        ClassifyError::Smoothing(s @ SmoothingError::InvalidParameter(_)) => {
            CliError::invalid(s.to_string())
        }
        ClassifyError::Critical(c) => critical_error(c),
        ClassifyError::Profile(p) => profile_error(p),
        ClassifyError::Evolve(EvolveError::InvalidParameter(m)) => CliError::invalid(m),
        e @ (ClassifyError::Inconclusive { .. } | ClassifyError::InvalidBracket { .. }) => {
            CliError::new(ErrorKind::Inconclusive, e.to_string())
        }
        other => CliError::solver(other.to_string()),
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::invalid(format!("--{name} must be positive and finite, got {v}")))
    }
}

fn cone_angle(name: &str, deg: f64) -> Result<f64, CliError> {
    if deg > 0.0 && deg < 90.0 {
        Ok(deg.to_radians())
    } else {
        Err(CliError::invalid(format!("--{name} must lie in (0, 90) degrees, got {deg}")))
    }
}

fn output_paths(prefix: &str) -> (String, String) {
    (format!("{prefix}.csv"), format!("{prefix}.json"))
}

fn create(path: &str) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = Path::new(path).parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// CSV file starting with the config as `#` comment lines.
fn csv_with_preamble(path: &str, config: &RunConfig) -> Result<BufWriter<File>, CliError> {
    let mut w = create(path)?;
    for line in config.comment_lines() {
        writeln!(w, "{line}")?;
    }
    Ok(w)
}

fn write_json<T: Serialize>(path: &str, doc: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub config: RunConfig,
    pub profile: ProfileHeader,
    /// Max residual of the expander equation along the stored samples.
    pub residual: Option<f64>,
    pub csv: String,
}

pub fn profile(a: &ProfileArgs, config_file: Option<&str>) -> Result<(), CliError> {
    let config = RunConfig::new("profile", config_file, a);
    positive("tol", a.tol)?;
    positive("ymax", a.ymax)?;
    let opts = ShootingOptions::default().with_tol(a.tol).with_horizon(a.ymax);
    let profile = if a.two_sheeted {
        let b = a
            .b
            .ok_or_else(|| CliError::invalid("--two-sheeted needs --b"))?;
        integrate_two_sheeted(positive("b", b)?, a.n, &opts)
    } else {
        let c = a.c.ok_or_else(|| CliError::invalid("--c is required"))?;
        integrate_one_sheeted(positive("c", c)?, a.n, &opts)
    }
    .map_err(profile_error)?;

    let (csv_path, json_path) = output_paths(&a.out);
    let mut w = csv_with_preamble(&csv_path, &config)?;
    profile.write_csv(&mut w).map_err(profile_error)?;
    w.flush()?;
    let doc = ProfileDocument {
        config,
        profile: profile.header(),
        residual: expander_residual(&profile).ok(),
        csv: csv_path,
    };
    write_json(&json_path, &doc)?;
    println!("{}", serde_json::to_string(&doc.profile)?);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalDocument {
    pub config: RunConfig,
    pub n: u32,
    pub alpha_crit_deg: f64,
    pub alpha_crit: f64,
    pub uncertainty_deg: f64,
    #[serde(rename = "C_star")]
    pub c_star: f64,
    /// Grid neighbours `(C_lo, C_hi)` of the minimizer.
    pub bracket: (f64, f64),
    /// Brackets of every separated minimum when there is more than one.
    pub minima_brackets: Vec<(f64, f64)>,
    pub csv: String,
}

pub fn critical(a: &CriticalArgs, config_file: Option<&str>) -> Result<(), CliError> {
    let config = RunConfig::new("critical", config_file, a);
    let tol_angle = positive("tol-angle", a.tol_angle)?.to_radians();
    positive("tol", a.tol)?;
    positive("c-lo", a.c_lo)?;
    positive("c-hi", a.c_hi)?;
    let opts = CriticalOptions {
        c_lo: a.c_lo,
        c_hi: a.c_hi,
        grid: a.grid,
        grid_seed: a.seed,
        shooting: ShootingOptions::default().with_tol(a.tol),
    };
    let (map, critical, minima, failure) = match AngleLandscape::compute(a.n, tol_angle, &opts) {
        Ok(l) => (l.map, l.critical, Vec::new(), None),
        Err(CriticalError::MultipleMinima { brackets, deepest }) => {
            let map = build_angle_map_seeded(a.n, a.c_lo, a.c_hi, a.grid, &opts.shooting, a.seed)
                .map_err(critical_error)?;
            let err = CliError::new(
                ErrorKind::MultipleMinima,
                format!("angle map has {} separated local minima", brackets.len()),
            );
            (map, *deepest, brackets, Some(err))
        }
        Err(e) => return Err(critical_error(e)),
    };

    let (csv_path, json_path) = output_paths(&a.out);
    let mut w = csv_with_preamble(&csv_path, &config)?;
    map.write_csv(&mut w)?;
    w.flush()?;
    let doc = CriticalDocument {
        config,
        n: critical.n,
        alpha_crit_deg: critical.alpha_crit_deg,
        alpha_crit: critical.alpha_crit.angle,
        uncertainty_deg: critical.alpha_crit.uncertainty.to_degrees(),
        c_star: critical.c_star,
        bracket: critical.bracket,
        minima_brackets: minima,
        csv: csv_path,
    };
    write_json(&json_path, &doc)?;
    println!(
        "{}",
        serde_json::json!({
            "alpha_crit_deg": doc.alpha_crit_deg,
            "C_star": doc.c_star,
            "bracket": doc.bracket,
        })
    );
    failure.map_or(Ok(()), Err)
}

fn solver_params(s: &SolverArgs) -> Result<SolverParams, CliError> {
    positive("delta", s.delta)?;
    positive("spacing", s.spacing)?;
    positive("rel-change", s.rel_change)?;
    positive("pinch-floor", s.pinch_floor)?;
    if let Some(y) = s.half_width {
        positive("half-width", y)?;
    }
    if let Some(t) = s.t_max {
        positive("t-max", t)?;
    }
    if s.n < 3 {
        return Err(CliError::invalid(format!("--n must be at least 3, got {}", s.n)));
    }
    Ok(SolverParams {
        dimension: s.n,
        frame: s.frame.into(),
        half_width: s.half_width,
        spacing: s.spacing,
        t_max: s.t_max,
        control: StepControl {
            rel_change: s.rel_change,
            ..StepControl::default()
        },
        pinch_floor: s.pinch_floor,
        use_barrier: !s.no_barrier,
        ..SolverParams::default()
    })
}

fn decision_name(d: Decision) -> &'static str {
    match d {
        Decision::Repulsion => "repulsion",
        Decision::Coalescence => "coalescence",
        Decision::Undecided => "undecided",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyDocument {
    pub config: RunConfig,
    pub verdict: Verdict,
    /// Runs made, counting refined retries.
    pub attempts: usize,
    pub csv: String,
    pub snapshots: Option<String>,
}

pub fn classify(a: &ClassifyArgs, config_file: Option<&str>) -> Result<(), CliError> {
    let config = RunConfig::new("classify", config_file, a);
    let alpha = cone_angle("alpha-deg", a.alpha_deg)?;
    let params = solver_params(&a.solver)?;
    let family: SmoothingFamily = a.solver.kind.into();
    let smoothing = make_smoothing(alpha, family, a.solver.delta)
        .map_err(|e| classify_error(e.into()))?;
    let mut classifier = Classifier::new(params).map_err(classify_error)?;

    let mut attempts = 0;
    let verdict = loop {
        attempts += 1;
        let verdict = match &a.snapshots {
            Some(path) => {
                let mut writer = SnapshotWriter::new(create(path)?, a.cadence)?;
                let mut failed = None;
                let v = classifier.classify_observed(&smoothing, |s| {
                    if failed.is_none() {
                        failed = writer.observe(s).err();
                    }
                });
                if let Some(e) = failed {
                    return Err(e.into());
                }
                writer.finish()?.flush()?;
                v
            }
            None => classifier.classify(&smoothing),
        }
        .map_err(classify_error)?;
        if verdict.decision != Decision::Undecided || attempts > a.solver.refinements {
            break verdict;
        }
        classifier = Classifier::new(classifier.params.refined(&smoothing)).map_err(classify_error)?;
    };

    let (csv_path, json_path) = output_paths(&a.out);
    let mut w = csv_with_preamble(&csv_path, &config)?;
    {
        let mut c = csv::Writer::from_writer(&mut w);
        c.write_record(["t", "min_height"])?;
        for (t, m) in &verdict.min_history {
            c.write_record([t.to_string(), m.to_string()])?;
        }
        c.flush()?;
    }
    w.flush()?;
    let decision = verdict.decision;
    let doc = ClassifyDocument {
        config,
        verdict,
        attempts,
        csv: csv_path,
        snapshots: a.snapshots.clone(),
    };
    write_json(&json_path, &doc)?;
    println!(
        "{}",
        serde_json::json!({
            "alpha_deg": a.alpha_deg,
            "decision": decision_name(decision),
            "evidence": evidence_name(&doc.verdict.evidence),
        })
    );
    if decision == Decision::Undecided {
        return Err(CliError::new(
            ErrorKind::Inconclusive,
            format!("no decision at {}° after {attempts} runs", a.alpha_deg),
        ));
    }
    Ok(())
}

fn evidence_name(e: &Evidence) -> &'static str {
    match e {
        Evidence::Pinch { .. } => "pinch",
        Evidence::Barrier(_) => "barrier",
        Evidence::Stationary { .. } => "stationary",
        Evidence::SurvivedToTmax { .. } => "survived_to_tmax",
        Evidence::Undecided(_) => "undecided",
    }
}

/// One line of the sweep table: a probe, or the final estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `probe` or `estimate`.
    pub row: String,
    pub alpha_deg: f64,
    pub decision: String,
    pub evidence: String,
    pub final_time: Option<f64>,
    pub final_min_height: Option<f64>,
    pub t_pinch: Option<f64>,
    pub growth_exponent: Option<f64>,
    pub bracket_lo_deg: Option<f64>,
    pub bracket_hi_deg: Option<f64>,
}

impl SweepRow {
    fn probe(v: &Verdict) -> Self {
        let (t_pinch, growth_exponent) = match &v.evidence {
            Evidence::Pinch { t_pinch, .. } => (Some(*t_pinch), None),
            Evidence::Stationary {
                growth_exponent, ..
            }
            | Evidence::SurvivedToTmax {
                growth_exponent, ..
            } => (None, *growth_exponent),
            _ => (None, None),
        };
        Self {
            row: "probe".into(),
            alpha_deg: v.alpha_deg,
            decision: decision_name(v.decision).into(),
            evidence: evidence_name(&v.evidence).into(),
            final_time: Some(v.final_time),
            final_min_height: Some(v.final_min_height),
            t_pinch,
            growth_exponent,
            bracket_lo_deg: None,
            bracket_hi_deg: None,
        }
    }

    fn estimate(bracket_deg: Option<(f64, f64)>, evidence: &str) -> Self {
        Self {
            row: "estimate".into(),
            alpha_deg: bracket_deg.map_or(f64::NAN, |(lo, hi)| 0.5 * (lo + hi)),
            decision: if bracket_deg.is_some() { "critical" } else { "none" }.into(),
            evidence: evidence.into(),
            final_time: None,
            final_min_height: None,
            t_pinch: None,
            growth_exponent: None,
            bracket_lo_deg: bracket_deg.map(|b| b.0),
            bracket_hi_deg: bracket_deg.map(|b| b.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDocument {
    pub config: RunConfig,
    /// Fixed-grid verdicts, sorted by angle.
    pub grid: Vec<Verdict>,
    /// Largest repulsion and smallest coalescence angle of the grid when
    /// the grid verdicts are ordered.
    pub grid_bracket_deg: Option<(f64, f64)>,
    pub estimate: Option<PdeCriticalEstimate>,
    /// Probes of an inconclusive bisection.
    pub partial_probes: Vec<Verdict>,
    pub error: Option<String>,
    pub csv: String,
}

/// `(max repulsion, min coalescence)` when every repulsion lies below
/// every coalescence.
fn grid_bracket(verdicts: &[Verdict]) -> Option<(f64, f64)> {
    let lo = verdicts
        .iter()
        .filter(|v| v.decision == Decision::Repulsion)
        .map(|v| v.alpha_deg)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = verdicts
        .iter()
        .filter(|v| v.decision == Decision::Coalescence)
        .map(|v| v.alpha_deg)
        .fold(f64::INFINITY, f64::min);
    (lo.is_finite() && hi.is_finite() && lo < hi).then_some((lo, hi))
}

pub fn sweep(a: &SweepArgs, config_file: Option<&str>) -> Result<(), CliError> {
    let config = RunConfig::new("sweep", config_file, a);
    let lo = cone_angle("alpha-min", a.alpha_min)?;
    let hi = cone_angle("alpha-max", a.alpha_max)?;
    if lo >= hi {
        return Err(CliError::invalid("--alpha-min must be below --alpha-max"));
    }
    let params = solver_params(&a.solver)?;
    let family: SmoothingFamily = a.solver.kind.into();

    let mut grid = Vec::new();
    if a.step.is_some() || !a.bisect {
        let step = positive("step", a.step.unwrap_or(5.0))?;
        let count = ((a.alpha_max - a.alpha_min) / step + 1e-9).floor() as usize;
        let mut alphas: Vec<f64> = (0..=count)
            .map(|k| (a.alpha_min + k as f64 * step).to_radians())
            .collect();
        if (a.alpha_min + count as f64 * step - a.alpha_max).abs() > 1e-9 {
            alphas.push(hi);
        }
        grid = sweep_angles(&alphas, family, a.solver.delta, &params, a.solver.refinements)
            .map_err(classify_error)?;
    }
    let grid_bracket_deg = grid_bracket(&grid);

    let mut estimate = None;
    let mut partial_probes = Vec::new();
    let mut failure = None;
    if a.bisect {
        let opts = BisectionOptions {
            bracket: (lo, hi),
            tol_angle: positive("tol-angle", a.tol_angle)?.to_radians(),
            check_half_width: !a.no_width_check,
            refinements: a.solver.refinements,
        };
        match estimate_critical_angle_pde(family, a.solver.delta, &opts, &params) {
            Ok(e) => estimate = Some(e),
            Err(ClassifyError::Inconclusive {
                alpha_deg,
                lo_deg,
                hi_deg,
                probes,
            }) => {
                partial_probes = probes;
                failure = Some(CliError::new(
                    ErrorKind::Inconclusive,
                    format!("undecided at {alpha_deg}° inside [{lo_deg}°, {hi_deg}°]"),
                ));
            }
            Err(e) => {
                let e = classify_error(e);
                if e.error != ErrorKind::Inconclusive {
                    return Err(e);
                }
                failure = Some(e);
            }
        }
    } else if grid.iter().any(|v| v.decision == Decision::Undecided) || grid_bracket_deg.is_none() {
        failure = Some(CliError::new(
            ErrorKind::Inconclusive,
            "grid verdicts do not bracket a critical angle",
        ));
    }

    let mut probes: Vec<&Verdict> = grid
        .iter()
        .chain(estimate.iter().flat_map(|e| e.probes.iter()))
        .chain(partial_probes.iter())
        .collect();
    probes.sort_by(|x, y| x.alpha.total_cmp(&y.alpha));
    let mut rows: Vec<SweepRow> = probes.iter().map(|v| SweepRow::probe(v)).collect();
    rows.push(match &estimate {
        Some(e) => SweepRow::estimate(
            Some((e.bracket.0.to_degrees(), e.bracket.1.to_degrees())),
            "bisection",
        ),
        None => SweepRow::estimate(grid_bracket_deg, "grid"),
    });

    let (csv_path, json_path) = output_paths(&a.out);
    let mut w = csv_with_preamble(&csv_path, &config)?;
    {
        let mut c = csv::Writer::from_writer(&mut w);
        for r in &rows {
            c.serialize(r)?;
        }
        c.flush()?;
    }
    w.flush()?;
    let doc = SweepDocument {
        config,
        grid,
        grid_bracket_deg,
        estimate,
        partial_probes,
        error: failure.as_ref().map(|e| e.message.clone()),
        csv: csv_path,
    };
    write_json(&json_path, &doc)?;
    let last = rows.last().expect("estimate row");
    println!(
        "{}",
        serde_json::json!({
            "estimate_deg": last.alpha_deg.is_finite().then_some(last.alpha_deg),
            "bracket_deg": [last.bracket_lo_deg, last.bracket_hi_deg],
            "probes": rows.len() - 1,
        })
    );
    failure.map_or(Ok(()), Err)
}
