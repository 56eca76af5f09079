//! One function per subcommand; each returns the `results` value of the
//! report plus diagnostics and an optional non-JSON artifact.

use std::path::Path;

use num_complex::Complex64;
use schottky_dilog::elliptic::{elliptic_d2, EllipticError, EllipticParams};
use schottky_dilog::exec::Exec;
use schottky_dilog::moebius::ComplexPoint;
use schottky_dilog::poincare::{
    automorphy_residual, bers_integral, convergence_report, evaluate, SeriesError, SeriesIntegrand, Verdict,
};
use schottky_dilog::polylog::{self, OddCorrection, PolylogError};
use schottky_dilog::psmeasure::{
    build_ps, default_test_functions, populates_all_disks, quasi_invariance_residual, NayataniDensity, PSMeasure,
    PsError,
};
use schottky_dilog::schottky::{format_letters, DeltaEstimate, GroupError, GroupKind, Letter, SchottkyGroup};
use serde_json::{json, Value};

use crate::config::{
    positive, ConfigError, Format, GroupConfig, ImageConfig, OddCorrectionConfig, PolylogFunction, RunConfig,
};
use crate::emit::{self, cell};
use crate::{Command, GroupCommand, MeasureCommand, SeriesCommand};

const DEFAULT_DELTA_RESOLUTION: f64 = 0.005;
const MEASURE_DELTA_RESOLUTION: f64 = 1e-7;
const DEFAULT_DELTA_DEPTH: usize = 10;
const MEASURE_DELTA_DEPTH: usize = 11;
const MAX_IMAGE_SIDE: usize = 16384;

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    /// Numerical method did not reach its target; exit code 3.
    Numeric(String),
    Io(String),
}

#[derive(Debug)]
pub struct Outcome {
    pub results: Value,
    pub diagnostics: Vec<String>,
    pub artifact: Option<Vec<u8>>,
    pub converged: bool,
}

impl Outcome {
    fn ok(results: Value) -> Self {
        Outcome { results, diagnostics: Vec::new(), artifact: None, converged: true }
    }
}

type Result<T> = std::result::Result<T, Failure>;

pub fn dispatch(cmd: &Command, cfg: &RunConfig, base: &Path) -> Result<Outcome> {
    match cmd {
        Command::Polylog(_) => polylog_cmd(cfg),
        Command::Elliptic(_) => elliptic_cmd(cfg),
        Command::Group(GroupCommand::Validate) => group_validate(cfg),
        Command::Group(GroupCommand::Limitset) => group_limitset(cfg),
        Command::Group(GroupCommand::Delta) => group_delta(cfg),
        Command::Group(GroupCommand::Nielsen) => group_nielsen(cfg),
        Command::Measure(MeasureCommand::Build) => measure_build(cfg),
        Command::Measure(MeasureCommand::Residual) => measure_residual(cfg, base),
        Command::Series(SeriesCommand::Eval(_)) => series_eval(cfg),
        Command::Series(SeriesCommand::Automorphy) => series_automorphy(cfg),
        Command::Series(SeriesCommand::Report(_)) => series_report(cfg),
        Command::Bers => bers_cmd(cfg, base),
    }
}

fn format_of(cfg: &RunConfig, allowed: &[Format]) -> Result<Format> {
    let f = cfg.format.unwrap_or(Format::Json);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(ConfigError::new("format", format!("{f:?} output is not available for this command").to_lowercase()).into())
    }
}

fn complex(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn polylog_failure(e: PolylogError) -> Failure {
    match e {
        PolylogError::Pole | PolylogError::SingularArgument(_) => ConfigError::new("z", e.to_string()).into(),
        PolylogError::InvalidOrder(_) => ConfigError::new("order", e.to_string()).into(),
        PolylogError::InvalidTolerance(_) => ConfigError::new("tol", e.to_string()).into(),
        PolylogError::ToleranceUnattainable { .. } => Failure::Numeric(e.to_string()),
    }
}

fn polylog_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let z = cfg.require_z()?;
    let tol = cfg.tol_or(1e-12)?;
    let order = cfg.order.unwrap_or(2);
    let function = cfg.function.unwrap_or(PolylogFunction::Li);
    let correction = match cfg.odd_correction {
        None | Some(OddCorrectionConfig::TwiceFactorial) => OddCorrection::TwiceFactorial,
        Some(OddCorrectionConfig::DoubledArgumentFactorial) => OddCorrection::DoubledArgumentFactorial,
    };
    let results = match function {
        PolylogFunction::Li => {
            let r = polylog::li(order, z, tol).map_err(polylog_failure)?;
            json!({"function": "li", "order": order, "z": z, "value": complex(r.value), "error_bound": r.error_bound, "terms_used": r.terms_used})
        }
        PolylogFunction::BlochWigner => {
            if cfg.order.is_some_and(|o| o != 2) {
                return Err(ConfigError::new("order", "the Bloch-Wigner function has order 2").into());
            }
            let value = polylog::bloch_wigner(z);
            // the same quantity through the certified D_2 path supplies the bound
            let error_bound = match polylog::ramakrishnan_d(2, z, tol) {
                Ok(r) => r.error_bound + (r.value - value).abs(),
                Err(PolylogError::SingularArgument(_)) => 0.0,
                Err(e) => return Err(polylog_failure(e)),
            };
            json!({"function": "bloch_wigner", "z": z, "value": value, "error_bound": error_bound})
        }
        PolylogFunction::RamakrishnanL => {
            let r = polylog::ramakrishnan_l(order, z, tol).map_err(polylog_failure)?;
            json!({"function": "ramakrishnan_l", "order": order, "z": z, "value": complex(r.value), "error_bound": r.error_bound, "terms_used": r.terms_used})
        }
        PolylogFunction::RamakrishnanD => {
            let r = polylog::ramakrishnan_d_with(order, z, tol, correction).map_err(polylog_failure)?;
            json!({"function": "ramakrishnan_d", "order": order, "z": z, "value": r.value, "error_bound": r.error_bound, "terms_used": r.terms_used})
        }
    };
    Ok(Outcome::ok(results))
}

fn elliptic_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let q = cfg.q.ok_or_else(|| ConfigError::new("q", "required (config `q` or --q)"))?;
    let x = cfg.x.ok_or_else(|| ConfigError::new("x", "required (config `x` or --x)"))?;
    let tol = cfg.tol_or(1e-10)?;
    let params = EllipticParams::new(Complex64::new(q[0], q[1]), x, tol).map_err(|e| {
        let field = match e {
            EllipticError::ConvergenceRegime(_) => "q",
            EllipticError::SingularArgument => "x",
            EllipticError::InvalidTolerance(_) => "tol",
        };
        ConfigError::new(field, e.to_string())
    })?;
    let r = elliptic_d2(&params);
    Ok(Outcome::ok(json!({"q": q, "x": x, "value": r.value, "error_bound": r.error_bound, "terms_used": r.terms_used})))
}

fn group_of(cfg: &RunConfig) -> Result<(SchottkyGroup, Vec<String>)> {
    let mut diagnostics = Vec::new();
    if cfg.group.is_none() {
        diagnostics.push("no group configured; using the standard test group".to_string());
    }
    Ok((cfg.group_config().build()?, diagnostics))
}

fn group_summary(group: &SchottkyGroup) -> Value {
    json!({
        "kind": kind_name(group.kind()),
        "rank": group.rank(),
        "group": GroupConfig::from_group(group),
    })
}

fn kind_name(k: GroupKind) -> &'static str {
    match k {
        GroupKind::Classical => "classical",
        GroupKind::NonClassical => "non_classical",
        GroupKind::CyclicDiagnostic => "cyclic_diagnostic",
    }
}

fn group_validate(cfg: &RunConfig) -> Result<Outcome> {
    format_of(cfg, &[Format::Json])?;
    let (group, diagnostics) = group_of(cfg)?;
    let report = group.validate();
    let mut results = group_summary(&group);
    results["valid"] = json!(report.is_valid());
    results["violations"] = json!(report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>());
    Ok(Outcome { diagnostics, ..Outcome::ok(results) })
}

fn image_of(cfg: &RunConfig) -> Result<ImageConfig> {
    let img = cfg.image.unwrap_or_default();
    for (name, side) in [("image.width", img.width), ("image.height", img.height)] {
        if side == 0 || side > MAX_IMAGE_SIDE {
            return Err(ConfigError::new(name, format!("must be in 1..={MAX_IMAGE_SIDE}, got {side}")).into());
        }
    }
    positive("image.window", img.window)?;
    Ok(img)
}

fn group_failure(field: &str, e: GroupError) -> Failure {
    match e {
        GroupError::NoCrossing(_) | GroupError::NonGeometric { .. } | GroupError::NearLimitSet(_) => {
            Failure::Numeric(e.to_string())
        }
        _ => ConfigError::new(field, e.to_string()).into(),
    }
}

fn group_limitset(cfg: &RunConfig) -> Result<Outcome> {
    let format = format_of(cfg, &[Format::Json, Format::Csv, Format::Ppm])?;
    let depth = cfg.depth_or(8)?;
    let (group, diagnostics) = group_of(cfg)?;
    let sample = group.limit_set(depth).map_err(|e| group_failure("depth", e))?;
    let artifact = match format {
        Format::Ppm => Some(emit::render_ppm(&sample.points, group.disks(), &image_of(cfg)?)),
        Format::Csv => Some(emit::csv_table(
            &["re", "im", "seed", "word"],
            sample.points.iter().enumerate().map(|(i, p)| {
                let (re, im) = p.finite().map(|w| (cell(w.re), cell(w.im))).unwrap_or(("inf".into(), "inf".into()));
                vec![re, im, sample.seed_of[i].to_string(), format_letters(sample.word_of(i))]
            }),
        )),
        Format::Json => None,
    };
    let mut results = json!({"depth": depth, "count": sample.points.len(), "disks": group.disks()});
    if artifact.is_none() {
        results["points"] = json!(sample.points);
    }
    Ok(Outcome { results, diagnostics, artifact, converged: true })
}

fn estimate(group: &SchottkyGroup, cfg: &RunConfig, resolution: f64, depth: usize) -> Result<DeltaEstimate> {
    let exec = cfg.exec()?;
    let r = positive("resolution", resolution)?;
    match cfg.ratio_tolerance {
        Some(t) => group.estimate_delta_with(r, depth, positive("ratio_tolerance", t)?, exec),
        None => group.estimate_delta(r, depth, exec),
    }
    .map_err(|e| group_failure("group", e))
}

fn group_delta(cfg: &RunConfig) -> Result<Outcome> {
    let format = format_of(cfg, &[Format::Json, Format::Csv])?;
    let resolution = cfg.resolution.or(cfg.tol).unwrap_or(DEFAULT_DELTA_RESOLUTION);
    let depth = cfg.depth_or(DEFAULT_DELTA_DEPTH)?;
    let (group, diagnostics) = group_of(cfg)?;
    let est = estimate(&group, cfg, resolution, depth)?;
    let artifact = (format == Format::Csv).then(|| {
        emit::csv_table(
            &["n", "ratio"],
            est.shell_ratios.iter().enumerate().map(|(i, r)| vec![(i + 1).to_string(), cell(*r)]),
        )
    });
    Ok(Outcome { results: json!(est), diagnostics, artifact, converged: true })
}

fn group_nielsen(cfg: &RunConfig) -> Result<Outcome> {
    format_of(cfg, &[Format::Json])?;
    let mv = cfg.nielsen_move()?;
    let (group, mut diagnostics) = group_of(cfg)?;
    let outcome = group.nielsen(mv).map_err(|e| group_failure("nielsen", e))?;
    if outcome.classical_condition_lost() {
        diagnostics.push(format!("classical condition lost: {}", outcome.report));
    }
    let mut results = group_summary(&outcome.group);
    results["move"] = json!(cfg.nielsen);
    results["classical_condition_lost"] = json!(outcome.classical_condition_lost());
    results["violations"] = json!(outcome.report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>());
    Ok(Outcome { diagnostics, ..Outcome::ok(results) })
}

fn ps_failure(field: &str, e: PsError) -> Failure {
    match e {
        PsError::Io(err) => Failure::Io(err.to_string()),
        PsError::Group(g) => group_failure(field, g),
        other => ConfigError::new(field, other.to_string()).into(),
    }
}

/// Critical exponent from the config, or a fine estimate.
fn delta_for_measure(group: &SchottkyGroup, cfg: &RunConfig, diagnostics: &mut Vec<String>) -> Result<f64> {
    if let Some(d) = cfg.delta {
        if !(0.0..=2.0).contains(&d) {
            return Err(ConfigError::new("delta", format!("must lie in [0, 2], got {d}")).into());
        }
        return Ok(d);
    }
    let est = estimate(group, cfg, cfg.resolution.unwrap_or(MEASURE_DELTA_RESOLUTION), MEASURE_DELTA_DEPTH)?;
    diagnostics.push(format!("delta estimated as {} (bracket {:?})", est.delta, est.bracket));
    Ok(est.delta)
}

fn build_measure(group: &SchottkyGroup, cfg: &RunConfig, depth: usize, diagnostics: &mut Vec<String>) -> Result<PSMeasure> {
    let delta = delta_for_measure(group, cfg, diagnostics)?;
    build_ps(group, delta, depth, cfg.exec()?).map_err(|e| ps_failure("depth", e))
}

fn load_measure(cfg: &RunConfig, base: &Path, group: &SchottkyGroup, default_depth: usize, diagnostics: &mut Vec<String>) -> Result<PSMeasure> {
    match &cfg.measure {
        Some(rel) => {
            let path = base.join(rel);
            let file = std::fs::File::open(&path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
            PSMeasure::read_csv(std::io::BufReader::new(file)).map_err(|e| match e {
                PsError::Io(err) => Failure::Io(format!("cannot read {}: {err}", path.display())),
                other => ConfigError::new("measure", format!("{}: {other}", path.display())).into(),
            })
        }
        None => build_measure(group, cfg, cfg.depth_or(default_depth)?, diagnostics),
    }
}

fn measure_build(cfg: &RunConfig) -> Result<Outcome> {
    let format = format_of(cfg, &[Format::Json, Format::Csv])?;
    let depth = cfg.depth_or(8)?;
    let (group, mut diagnostics) = group_of(cfg)?;
    let measure = build_measure(&group, cfg, depth, &mut diagnostics)?;
    let residual = quasi_invariance_residual(&measure, &group, &default_test_functions());
    let artifact = match format {
        Format::Csv => {
            let mut bytes = Vec::new();
            measure.write_csv(&mut bytes).map_err(|e| ps_failure("measure", e))?;
            Some(bytes)
        }
        _ => None,
    };
    let results = json!({
        "header": measure.header(),
        "atoms": measure.atoms().len(),
        "total_mass": measure.total_mass(),
        "populates_all_disks": populates_all_disks(&group, &measure),
        "quasi_invariance_residual": residual,
    });
    Ok(Outcome { results, diagnostics, artifact, converged: true })
}

fn measure_residual(cfg: &RunConfig, base: &Path) -> Result<Outcome> {
    format_of(cfg, &[Format::Json])?;
    let (group, mut diagnostics) = group_of(cfg)?;
    let measure = load_measure(cfg, base, &group, 8, &mut diagnostics)?;
    let tests = default_test_functions();
    let residual = quasi_invariance_residual(&measure, &group, &tests);
    let density = NayataniDensity::new(measure);
    let conformality = density
        .conformality(&group, cfg.samples.unwrap_or(50), cfg.seed.unwrap_or(0), &tests)
        .map_err(|e| ps_failure("samples", e))?;
    let results = json!({
        "header": density.measure().header(),
        "quasi_invariance_residual": residual,
        "conformality": conformality,
    });
    Ok(Outcome { diagnostics, ..Outcome::ok(results) })
}

fn series_failure(field: &str, e: SeriesError) -> Failure {
    match e {
        SeriesError::Group(g) => group_failure(field, g),
        SeriesError::Measure(m) => ps_failure(field, m),
        SeriesError::TooManySingular { .. } => Failure::Numeric(e.to_string()),
        other => ConfigError::new(field, other.to_string()).into(),
    }
}

fn series_eval(cfg: &RunConfig) -> Result<Outcome> {
    format_of(cfg, &[Format::Json])?;
    let z = cfg.require_z()?;
    let (group, mut diagnostics) = group_of(cfg)?;
    let ev = evaluate(
        &group,
        &SeriesIntegrand::bloch_wigner(),
        z,
        cfg.weight.unwrap_or_default(),
        cfg.max_len_or(10),
        cfg.tol_or(1e-6)?,
        cfg.exec()?,
    )
    .map_err(|e| series_failure("z", e))?;
    let converged = ev.verdict == Verdict::Converged;
    if !converged {
        diagnostics.push(format!(
            "verdict {:?}: tail estimate {:e} against tolerance {:e} at max_len {}",
            ev.verdict, ev.tail_estimate, ev.tol, ev.max_len
        ));
    }
    Ok(Outcome { results: json!(ev), diagnostics, artifact: None, converged })
}

fn default_points() -> Vec<ComplexPoint> {
    vec![ComplexPoint::new(3.0, 2.5), ComplexPoint::new(-2.7, 0.4), ComplexPoint::new(0.3, -3.1)]
}

fn series_automorphy(cfg: &RunConfig) -> Result<Outcome> {
    format_of(cfg, &[Format::Json])?;
    let (group, mut diagnostics) = group_of(cfg)?;
    let points = match &cfg.points {
        Some(p) => {
            for (i, z) in p.iter().enumerate() {
                crate::config::finite_point(&format!("points[{i}]"), *z)?;
            }
            p.clone()
        }
        None => cfg.z.map(|z| vec![z]).unwrap_or_else(default_points),
    };
    let words: Vec<Vec<Letter>> = match &cfg.word {
        Some(w) => vec![w.clone()],
        None => (0..group.rank()).map(|i| vec![2 * i as Letter]).collect(),
    };
    let integrand = SeriesIntegrand::bloch_wigner();
    let (mode, max_len, tol, exec) = (cfg.weight.unwrap_or_default(), cfg.max_len_or(8), cfg.tol_or(1e-6)?, cfg.exec()?);
    let mut reports = Vec::with_capacity(words.len());
    let mut converged = true;
    for w in &words {
        let r = automorphy_residual(&group, &integrand, &points, w, mode, max_len, tol, exec)
            .map_err(|e| series_failure(if cfg.word.is_some() { "word" } else { "points" }, e))?;
        for s in r.samples.iter().filter(|s| s.residual > s.bound) {
            converged = false;
            diagnostics.push(format!(
                "word {}: residual {:e} at {} exceeds the tail bound {:e}",
                format_letters(w),
                s.residual,
                s.z,
                s.bound
            ));
        }
        reports.push(json!({"word_text": format_letters(w), "report": r}));
    }
    Ok(Outcome { results: json!({"weight_mode": mode, "max_len": max_len, "words": reports}), diagnostics, artifact: None, converged })
}

fn series_report(cfg: &RunConfig) -> Result<Outcome> {
    let format = format_of(cfg, &[Format::Json, Format::Csv])?;
    let z = cfg.require_z()?;
    let (group, diagnostics) = group_of(cfg)?;
    let est = estimate(&group, cfg, cfg.resolution.unwrap_or(DEFAULT_DELTA_RESOLUTION), cfg.depth_or(DEFAULT_DELTA_DEPTH)?)?;
    let report = convergence_report(&group, z, cfg.max_len_or(10), &est, cfg.exec()?).map_err(|e| series_failure("z", e))?;
    let artifact = (format == Format::Csv).then(|| {
        let rows = report.rows.iter().flat_map(|row| {
            row.shells.iter().enumerate().map(move |(n, p)| {
                let ratio = if n == 0 { String::new() } else { cell(row.ratios[n - 1]) };
                vec![cell(row.exponent), n.to_string(), cell(*p), ratio]
            })
        });
        emit::csv_table(&["exponent", "n", "shell_sum", "ratio"], rows)
    });
    Ok(Outcome { results: json!(report), diagnostics, artifact, converged: true })
}

fn bers_cmd(cfg: &RunConfig, base: &Path) -> Result<Outcome> {
    format_of(cfg, &[Format::Json])?;
    let (group, mut diagnostics) = group_of(cfg)?;
    let measure = load_measure(cfg, base, &group, 6, &mut diagnostics)?;
    let exponent = match cfg.exponent {
        Some(e) => Some(positive("exponent", e)?),
        None => None,
    };
    let density = NayataniDensity::new(measure);
    let n = cfg.samples.unwrap_or(10_000);
    let exec: Exec = cfg.exec()?;
    let est = bers_integral(&density, &SeriesIntegrand::bloch_wigner(), n, cfg.seed.unwrap_or(0), exponent, exec)
        .map_err(|e| series_failure("samples", e))?;
    if est.heavy_tail {
        diagnostics.push(format!(
            "heavy tail: Hill index {:.3} < 1, top decile carries {:.1}% of the sum; the estimate is not reliable",
            est.tail_index,
            100.0 * est.top_decile_share
        ));
    }
    let converged = !est.heavy_tail;
    Ok(Outcome {
        results: json!({"header": density.measure().header(), "estimate": est}),
        diagnostics,
        artifact: None,
        converged,
    })
}
