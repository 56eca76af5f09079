//! Run configuration: strict JSON parsing, flag overrides and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use schottky_dilog::exec::{Exec, ExecMode};
use schottky_dilog::moebius::{ComplexPoint, MoebiusMap};
use schottky_dilog::poincare::WeightMode;
use schottky_dilog::schottky::{
    Circle, CirclePair, GeneratorSpec, GroupError, GroupSpec, Letter, NielsenMove, SchottkyGroup,
};
use serde::{Deserialize, Serialize};

pub type Pair = [f64; 2];

fn c(p: Pair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

fn pair(z: Complex64) -> Pair {
    [z.re, z.im]
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<ComplexPoint>,
    /// Sample points for automorphy checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<ComplexPoint>>,
    /// Letters `2i` for `g_i` and `2i + 1` for its inverse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word: Option<Vec<Letter>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<PolylogFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub odd_correction: Option<OddCorrectionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Pair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<ComplexPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ExecMode>,
    /// Bisection resolution of the critical exponent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_tolerance: Option<f64>,
    /// Critical exponent to use instead of estimating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Measure CSV to load, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nielsen: Option<NielsenConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolylogFunction {
    Li,
    BlochWigner,
    RamakrishnanL,
    RamakrishnanD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OddCorrectionConfig {
    TwiceFactorial,
    DoubledArgumentFactorial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Ppm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageConfig {
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    /// Half-width `R` of the square window `[-R, R]^2`.
    #[serde(default = "default_window")]
    pub window: f64,
    /// Draw the defining circles in grey.
    #[serde(default)]
    pub circles: bool,
}

fn default_side() -> usize {
    512
}

fn default_window() -> f64 {
    4.0
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig { width: default_side(), height: default_side(), window: default_window(), circles: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NielsenKind {
    Invert,
    Swap,
    Multiply,
    CyclicPermutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NielsenConfig {
    #[serde(rename = "move")]
    pub kind: NielsenKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Standard,
    Cyclic,
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Circle radius of the standard preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<GeneratorConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circles: Option<Vec<CirclePairConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cyclic_diagnostic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basepoint: Option<ComplexPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// `[a, b, c, d]`, each `[re, im]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[Pair; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repelling: Option<ComplexPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attracting: Option<ComplexPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<Pair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskConfig {
    pub center: Pair,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirclePairConfig {
    pub from: DiskConfig,
    pub to: DiskConfig,
}

impl DiskConfig {
    fn from_circle(c: &Circle) -> Self {
        DiskConfig { center: pair(c.center), radius: c.radius }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub path: Option<PathBuf>,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { field: field.into(), message: message.into(), line: None, column: None, path: None }
    }

    /// Attaches the config path and, if not already known, the line of the
    /// offending field in `source`.
    pub fn locate(mut self, path: Option<&Path>, source: Option<&str>) -> Self {
        self.path = path.map(Path::to_path_buf);
        if self.line.is_none() {
            if let Some(src) = source {
                self.line = find_field_line(src, &self.field);
            }
        }
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let Some(p) = &self.path {
            write!(f, " in {}", p.display())?;
        }
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, " at line {l}, column {c}")?,
            (Some(l), None) => write!(f, " at line {l}")?,
            _ => {}
        }
        if !self.field.is_empty() {
            write!(f, ": field `{}`", self.field)?;
        }
        write!(f, ": {}", self.message)
    }
}

enum Segment<'a> {
    Key(&'a str),
    Index(usize),
}

fn segments(field: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    for part in field.split('.') {
        let (key, rest) = match part.find('[') {
            Some(p) => (&part[..p], &part[p..]),
            None => (part, ""),
        };
        if !key.is_empty() {
            out.push(Segment::Key(key));
        }
        for idx in rest.split('[').filter(|s| !s.is_empty()) {
            if let Ok(i) = idx.trim_end_matches(']').parse() {
                out.push(Segment::Index(i));
            }
        }
    }
    out
}

/// Best-effort line of a dotted field path such as
/// `group.generators[1].multiplier` in the raw JSON text.
fn find_field_line(src: &str, field: &str) -> Option<usize> {
    let segs = segments(field);
    let mut pos = 0usize;
    let mut skip = 0usize;
    let mut found = false;
    for seg in &segs {
        match seg {
            Segment::Index(i) => skip = *i,
            Segment::Key(k) => {
                let needle = format!("\"{k}\"");
                for _ in 0..=skip {
                    let at = src[pos..].find(&needle)?;
                    pos += at + needle.len();
                }
                skip = 0;
                found = true;
            }
        }
    }
    found.then(|| src[..pos].matches('\n').count() + 1)
}

/// Parses the JSON text of a config file.
pub fn parse_config(src: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(src);
    match serde_path_to_error::deserialize::<_, RunConfig>(de) {
        Ok(cfg) => Ok(cfg),
        Err(e) => {
            let field = e.path().to_string();
            let inner = e.into_inner();
            let field = if field == "." { String::new() } else { field };
            Err(ConfigError {
                field,
                message: inner.to_string(),
                line: Some(inner.line()),
                column: Some(inner.column()),
                path: None,
            })
        }
    }
}

pub fn load_config(path: &Path) -> Result<(RunConfig, String), ConfigError> {
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: Some(path.to_path_buf()),
        ..ConfigError::new("", format!("cannot read config: {e}"))
    })?;
    let cfg = parse_config(&src).map_err(|e| e.locate(Some(path), None))?;
    Ok((cfg, src))
}

fn finite(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(field, format!("must be finite, got {v}")))
    }
}

pub fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if finite(field, v)? > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::new(field, format!("must be positive, got {v}")))
    }
}

pub fn finite_point(field: &str, z: ComplexPoint) -> Result<ComplexPoint, ConfigError> {
    if let ComplexPoint::Finite(w) = z {
        finite(field, w.re)?;
        finite(field, w.im)?;
    }
    Ok(z)
}

impl RunConfig {
    pub fn exec(&self) -> Result<Exec, ConfigError> {
        let threads = self.threads.unwrap_or(1);
        if threads == 0 {
            return Err(ConfigError::new("threads", "must be at least 1"));
        }
        Ok(Exec { threads, mode: self.mode.unwrap_or_default() })
    }

    /// Canonical serialisation used for the report hash; thread count is
    /// excluded since strict results do not depend on it.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        serde_json::to_string(&c).expect("config serialises")
    }

    pub fn tol_or(&self, default: f64) -> Result<f64, ConfigError> {
        positive("tol", self.tol.unwrap_or(default))
    }

    pub fn depth_or(&self, default: usize) -> Result<usize, ConfigError> {
        let d = self.depth.unwrap_or(default);
        if d == 0 {
            return Err(ConfigError::new("depth", "must be at least 1"));
        }
        Ok(d)
    }

    pub fn max_len_or(&self, default: usize) -> usize {
        self.max_len.unwrap_or(default)
    }

    pub fn require_z(&self) -> Result<ComplexPoint, ConfigError> {
        let z = self.z.ok_or_else(|| ConfigError::new("z", "required (config `z` or --z)"))?;
        finite_point("z", z)
    }

    pub fn group_config(&self) -> GroupConfig {
        self.group.clone().unwrap_or(GroupConfig { preset: Some(Preset::Standard), ..Default::default() })
    }

    pub fn nielsen_move(&self) -> Result<NielsenMove, ConfigError> {
        let n = self.nielsen.ok_or_else(|| ConfigError::new("nielsen", "required for `group nielsen`"))?;
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| ConfigError::new(format!("nielsen.{name}"), "required for this move"))
        };
        Ok(match n.kind {
            NielsenKind::Invert => NielsenMove::Invert(need(n.i, "i")?),
            NielsenKind::Swap => NielsenMove::Swap(need(n.i, "i")?, need(n.j, "j")?),
            NielsenKind::Multiply => NielsenMove::Multiply(need(n.i, "i")?, need(n.j, "j")?),
            NielsenKind::CyclicPermutation => NielsenMove::CyclicPermutation,
        })
    }
}

impl GroupConfig {
    /// Builds and validates the group, naming the offending field on failure.
    pub fn build(&self) -> Result<SchottkyGroup, ConfigError> {
        let group = match self.preset {
            Some(p) => {
                if self.generators.is_some() || self.circles.is_some() {
                    return Err(ConfigError::new("group.preset", "cannot be combined with explicit generators or circles"));
                }
                if self.radius.is_some() && p != Preset::Standard {
                    return Err(ConfigError::new("group.radius", "only applies to the standard preset"));
                }
                match p {
                    Preset::Standard => {
                        let r = positive("group.radius", self.radius.unwrap_or(0.5))?;
                        SchottkyGroup::standard_test_group(r).map_err(|e| group_error("group.radius", e))?
                    }
                    Preset::Cyclic => SchottkyGroup::cyclic_diagnostic_group(),
                    Preset::Trivial => SchottkyGroup::trivial(),
                }
            }
            None => {
                if self.radius.is_some() {
                    return Err(ConfigError::new("group.radius", "only applies to the standard preset"));
                }
                let spec = self.spec()?;
                if spec.generators.is_empty() {
                    if spec.circles.as_ref().is_some_and(|c| !c.is_empty()) {
                        return Err(ConfigError::new("group.circles", "circles given for a group without generators"));
                    }
                    SchottkyGroup::trivial()
                } else {
                    SchottkyGroup::build(&spec).map_err(|e| group_error("group", e))?
                }
            }
        };
        match self.basepoint {
            Some(b) => Ok(group.with_basepoint(finite_point("group.basepoint", b)?)),
            None => Ok(group),
        }
    }

    fn spec(&self) -> Result<GroupSpec, ConfigError> {
        let gens = self
            .generators
            .as_ref()
            .ok_or_else(|| ConfigError::new("group.generators", "required unless a preset is given"))?;
        let mut generators = Vec::with_capacity(gens.len());
        for (i, g) in gens.iter().enumerate() {
            generators.push(g.spec(&format!("group.generators[{i}]"))?);
        }
        let circles = match &self.circles {
            None => None,
            Some(cs) => {
                let mut out = Vec::with_capacity(cs.len());
                for (i, p) in cs.iter().enumerate() {
                    let disk = |d: &DiskConfig, side: &str| -> Result<Circle, ConfigError> {
                        let f = format!("group.circles[{i}].{side}");
                        finite(&format!("{f}.center"), d.center[0])?;
                        finite(&format!("{f}.center"), d.center[1])?;
                        Ok(Circle::new(c(d.center), positive(&format!("{f}.radius"), d.radius)?))
                    };
                    out.push(CirclePair { from: disk(&p.from, "from")?, to: disk(&p.to, "to")? });
                }
                Some(out)
            }
        };
        Ok(GroupSpec { generators, circles, cyclic_diagnostic: self.cyclic_diagnostic.unwrap_or(false) })
    }

    /// Explicit form of `group`, readable back as a config.
    pub fn from_group(group: &SchottkyGroup) -> Self {
        let generators = group
            .generators()
            .iter()
            .map(|m| GeneratorConfig { matrix: Some(m.entries().map(pair)), ..Default::default() })
            .collect();
        let pairs = group.circle_pairs();
        GroupConfig {
            generators: Some(generators),
            circles: (!pairs.is_empty()).then(|| {
                pairs
                    .iter()
                    .map(|p| CirclePairConfig { from: DiskConfig::from_circle(&p.from), to: DiskConfig::from_circle(&p.to) })
                    .collect()
            }),
            cyclic_diagnostic: (group.kind() == schottky_dilog::schottky::GroupKind::CyclicDiagnostic).then_some(true),
            basepoint: Some(group.basepoint()),
            ..Default::default()
        }
    }
}

fn group_error(field: &str, e: GroupError) -> ConfigError {
    ConfigError::new(field, e.to_string())
}

impl GeneratorConfig {
    fn spec(&self, field: &str) -> Result<GeneratorSpec, ConfigError> {
        match (self.matrix, self.repelling, self.attracting, self.multiplier) {
            (Some(m), None, None, None) => {
                for (k, e) in m.iter().enumerate() {
                    finite(&format!("{field}.matrix[{k}]"), e[0])?;
                    finite(&format!("{field}.matrix[{k}]"), e[1])?;
                }
                let map = MoebiusMap::new(c(m[0]), c(m[1]), c(m[2]), c(m[3]))
                    .map_err(|e| ConfigError::new(format!("{field}.matrix"), e.to_string()))?;
                Ok(GeneratorSpec::Matrix(map))
            }
            (None, Some(r), Some(a), Some(l)) => {
                finite_point(&format!("{field}.repelling"), r)?;
                finite_point(&format!("{field}.attracting"), a)?;
                let lambda = c(l);
                if !(lambda.norm() > 1.0 && lambda.norm().is_finite()) {
                    return Err(ConfigError::new(
                        format!("{field}.multiplier"),
                        format!("|multiplier| must exceed 1 (derivative at the repelling point), got {}", lambda.norm()),
                    ));
                }
                let spec = GeneratorSpec::FixedPoints { repelling: r, attracting: a, multiplier: lambda };
                spec.to_map().map_err(|e| ConfigError::new(field.to_string(), e.to_string()))?;
                Ok(spec)
            }
            _ => Err(ConfigError::new(
                field.to_string(),
                "give either `matrix` or all of `repelling`, `attracting`, `multiplier`",
            )),
        }
    }
}
