//! Atomic Patterson–Sullivan measures on the limit set, the conformal
//! density `F(x) = ∫ φ(x, y)^{-δ} dμ(y)` and its invariance residuals.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::moebius::{chordal, phi, ComplexPoint};
use crate::schottky::{inverse_letter, GroupError, GroupKind, Letter, SchottkyGroup};
use crate::sum::CompensatedSum;

/// Added to residual denominators.
pub const RESIDUAL_GUARD: f64 = 1e-12;
/// Closest admissible chordal distance between an evaluation point and an atom.
pub const SINGULAR_DISTANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PsError {
    #[error("depth {depth} too small: {reason}")]
    DepthTooSmall { depth: usize, reason: String },
    #[error("invalid exponent {0}")]
    InvalidExponent(f64),
    #[error("singular evaluation: point at chordal distance {0:e} from an atom")]
    SingularEvaluation(f64),
    #[error("radius {radius:e} below the atom resolution {resolution:e} of the measure")]
    BelowResolution { radius: f64, resolution: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("measure CSV: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: ComplexPoint,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PSMeasure {
    atoms: Vec<Atom>,
    delta: f64,
    depth: usize,
    basepoint: ComplexPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureHeader {
    pub delta: f64,
    pub depth: usize,
    pub basepoint: ComplexPoint,
}

/// Test function on the unit sphere.
pub type TestFunction = fn([f64; 3]) -> f64;

/// `1` and the eight real spherical harmonics of degree one and two.
pub fn default_test_functions() -> Vec<TestFunction> {
    vec![
        |_| 1.0,
        |p| p[0],
        |p| p[1],
        |p| p[2],
        |p| p[0] * p[1],
        |p| p[1] * p[2],
        |p| p[0] * p[2],
        |p| p[0] * p[0] - p[1] * p[1],
        |p| 3.0 * p[2] * p[2] - 1.0,
    ]
}

impl PSMeasure {
    /// Builds a measure from explicit atoms, normalizing the weights.
    pub fn from_atoms(atoms: Vec<Atom>, delta: f64, depth: usize, basepoint: ComplexPoint) -> Result<Self, PsError> {
        if atoms.is_empty() {
            return Err(PsError::InvalidParameter("measure needs at least one atom".into()));
        }
        if atoms.iter().any(|a| !(a.weight > 0.0 && a.weight.is_finite())) {
            return Err(PsError::InvalidParameter("atom weights must be positive and finite".into()));
        }
        if !(delta >= 0.0 && delta <= 2.0) {
            return Err(PsError::InvalidExponent(delta));
        }
        let total: CompensatedSum = atoms.iter().map(|a| a.weight).collect();
        let total = total.value();
        let atoms = atoms.into_iter().map(|a| Atom { weight: a.weight / total, ..a }).collect();
        Ok(PSMeasure { atoms, delta, depth, basepoint })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn basepoint(&self) -> ComplexPoint {
        self.basepoint
    }

    pub fn header(&self) -> MeasureHeader {
        MeasureHeader { delta: self.delta, depth: self.depth, basepoint: self.basepoint }
    }

    pub fn total_mass(&self) -> f64 {
        let s: CompensatedSum = self.atoms.iter().map(|a| a.weight).collect();
        s.value()
    }

    /// Same atoms and weights, different exponent.
    pub fn with_delta(&self, delta: f64) -> Result<Self, PsError> {
        if !(delta >= 0.0 && delta <= 2.0) {
            return Err(PsError::InvalidExponent(delta));
        }
        Ok(PSMeasure { delta, ..self.clone() })
    }

    pub fn integrate(&self, f: impl Fn(ComplexPoint) -> f64) -> f64 {
        let s: CompensatedSum = self.atoms.iter().map(|a| a.weight * f(a.point)).collect();
        s.value()
    }

    /// First line `# {json header}`, then `re,im,weight` with a header row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PsError> {
        let mut out = out;
        let header = serde_json::to_string(&self.header()).map_err(|e| PsError::Format(e.to_string()))?;
        writeln!(out, "# {header}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["re", "im", "weight"]).map_err(csv_err)?;
        for a in &self.atoms {
            let z = a.point.finite().ok_or_else(|| PsError::Format("atom at infinity".into()))?;
            w.write_record([z.re.to_string(), z.im.to_string(), a.weight.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`PSMeasure::write_csv`]; weights are kept
    /// exactly as stored.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, PsError> {
        let mut input = input;
        let mut first = String::new();
        input.read_line(&mut first)?;
        let json = first
            .trim_end()
            .strip_prefix("# ")
            .ok_or_else(|| PsError::Format("line 1: expected '# {json header}'".into()))?;
        let header: MeasureHeader =
            serde_json::from_str(json).map_err(|e| PsError::Format(format!("line 1: {e}")))?;
        let mut r = csv::Reader::from_reader(input);
        let names = r.headers().map_err(csv_err)?.clone();
        if names.iter().collect::<Vec<_>>() != ["re", "im", "weight"] {
            return Err(PsError::Format("line 2: expected header 're,im,weight'".into()));
        }
        let mut atoms = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |k: usize| -> Result<f64, PsError> {
                rec.get(k)
                    .ok_or_else(|| PsError::Format(format!("line {}: missing field", i + 3)))?
                    .parse::<f64>()
                    .map_err(|e| PsError::Format(format!("line {}: {e}", i + 3)))
            };
            atoms.push(Atom { point: ComplexPoint::new(field(0)?, field(1)?), weight: field(2)? });
        }
        if atoms.is_empty() {
            return Err(PsError::Format("no atoms".into()));
        }
        Ok(PSMeasure { atoms, delta: header.delta, depth: header.depth, basepoint: header.basepoint })
    }
}

fn csv_err(e: csv::Error) -> PsError {
    PsError::Format(e.to_string())
}

/// Orbit points `w(basepoint)`, `|w| = depth`, weighted by the `delta`-th
/// power of the spherical derivative of `w` at the basepoint.
pub fn build_ps(group: &SchottkyGroup, delta: f64, depth: usize, exec: Exec) -> Result<PSMeasure, PsError> {
    if !(delta >= 0.0 && delta <= 2.0) {
        return Err(PsError::InvalidExponent(delta));
    }
    if depth < 2 {
        return Err(PsError::DepthTooSmall { depth, reason: "depth must be at least 2".into() });
    }
    if group.rank() == 0 {
        return Err(PsError::InvalidParameter("trivial group has no limit set".into()));
    }
    let bp = group.basepoint();
    let shell: Vec<(ComplexPoint, f64, Letter)> = group.fold_words(
        depth,
        exec,
        Vec::new,
        |acc, letters, map| {
            if letters.len() == depth {
                acc.push((map.apply(bp), map.spherical_derivative(bp).ln(), letters[0]));
            }
        },
        |acc, part| acc.extend(part),
    );
    if group.kind() == GroupKind::Classical {
        for l in 0..2 * group.rank() as Letter {
            let in_disk = shell.iter().filter(|(p, _, first)| *first == l && group.disks()[l as usize].contains(*p));
            if in_disk.count() == 0 {
                return Err(PsError::DepthTooSmall { depth, reason: format!("disk of letter {l} is empty") });
            }
        }
    }
    let top = shell.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let atoms = shell
        .iter()
        .map(|&(point, log_d, _)| Atom { point, weight: (delta * (log_d - top)).exp() })
        .collect();
    PSMeasure::from_atoms(atoms, delta, depth, bp)
}

/// `max_{g, f} |Σ w f(x) − Σ w s_g(x)^δ f(g x)| / (Σ w |f(x)| + guard)` over
/// the generators `g`.
pub fn quasi_invariance_residual(measure: &PSMeasure, group: &SchottkyGroup, tests: &[TestFunction]) -> f64 {
    let delta = measure.delta;
    let mut worst: f64 = 0.0;
    for i in 0..group.rank() {
        let g = group.letter_map(2 * i as Letter);
        let moved: Vec<([f64; 3], f64, [f64; 3])> = measure
            .atoms
            .iter()
            .map(|a| {
                let jac = if delta == 0.0 { 1.0 } else { g.spherical_derivative(a.point).powf(delta) };
                (a.point.to_sphere(), a.weight * jac, g.apply(a.point).to_sphere())
            })
            .collect();
        for f in tests {
            let mut lhs = CompensatedSum::new();
            let mut rhs = CompensatedSum::new();
            let mut scale = CompensatedSum::new();
            for (a, (p, wj, gp)) in measure.atoms.iter().zip(&moved) {
                let fx = f(*p);
                lhs.add(a.weight * fx);
                scale.add(a.weight * fx.abs());
                rhs.add(wj * f(*gp));
            }
            let r = (lhs.value() - rhs.value()).abs() / (scale.value() + RESIDUAL_GUARD);
            worst = worst.max(r);
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct NayataniDensity {
    measure: PSMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub radius: f64,
    pub point: ComplexPoint,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub limit_point: ComplexPoint,
    pub rows: Vec<ProfileRow>,
    /// Least-squares slope of `log F` against `log r`.
    pub slope: f64,
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformalityReport {
    /// `max |F(γx) s_γ(x)^δ − F(x)| / F(x)` over samples and generators.
    pub max_relative: f64,
    pub measure_residual: f64,
    /// `max_relative / measure_residual`.
    pub constant: f64,
    pub samples: usize,
    pub per_generator: Vec<f64>,
}

impl NayataniDensity {
    pub fn new(measure: PSMeasure) -> Self {
        NayataniDensity { measure }
    }

    pub fn measure(&self) -> &PSMeasure {
        &self.measure
    }

    pub fn delta(&self) -> f64 {
        self.measure.delta
    }

    pub fn nearest_atom_distance(&self, x: ComplexPoint) -> f64 {
        self.measure.atoms.iter().map(|a| chordal(x, a.point)).fold(f64::INFINITY, f64::min)
    }

    /// `F(x) = Σ w_i φ(x, x_i)^{-δ}`.
    pub fn f(&self, x: ComplexPoint) -> Result<f64, PsError> {
        let delta = self.measure.delta;
        let mut acc = CompensatedSum::new();
        let mut nearest = f64::INFINITY;
        for a in &self.measure.atoms {
            let p = phi(x, a.point);
            nearest = nearest.min(p);
            acc.add(a.weight * p.powf(-delta));
        }
        let d = (2.0 * nearest).sqrt();
        if !(d > SINGULAR_DISTANCE) {
            return Err(PsError::SingularEvaluation(d));
        }
        Ok(acc.value())
    }

    /// `F(x)^{2/δ}`.
    pub fn metric_factor(&self, x: ComplexPoint) -> Result<f64, PsError> {
        self.factor_with_exponent(x, 2.0 / self.measure.delta)
    }

    pub fn factor_with_exponent(&self, x: ComplexPoint, exponent: f64) -> Result<f64, PsError> {
        if !exponent.is_finite() {
            return Err(PsError::InvalidExponent(self.measure.delta));
        }
        Ok(self.f(x)?.powf(exponent))
    }

    /// `F` at points at chordal distance `r` from `y0`, approached from the
    /// direction of the measure's basepoint.
    pub fn asymptotic_profile(&self, y0: ComplexPoint, radii: &[f64]) -> Result<Profile, PsError> {
        if radii.len() < 2 {
            return Err(PsError::InvalidParameter("need at least two radii".into()));
        }
        if radii.windows(2).any(|w| !(w[1] < w[0])) || radii.iter().any(|r| !(*r > 0.0 && *r < 2.0)) {
            return Err(PsError::InvalidParameter("radii must be decreasing and in (0, 2)".into()));
        }
        let resolution = 4.0 * self.nearest_atom_distance(y0);
        if let Some(&r) = radii.iter().find(|&&r| r < resolution) {
            return Err(PsError::BelowResolution { radius: r, resolution });
        }
        let p = y0.to_sphere();
        let u = ray_direction(p, self.measure.basepoint.to_sphere());
        let mut rows = Vec::with_capacity(radii.len());
        for &r in radii {
            let theta = 2.0 * (0.5 * r).asin();
            let (c, s) = (theta.cos(), theta.sin());
            let q = [c * p[0] + s * u[0], c * p[1] + s * u[1], c * p[2] + s * u[2]];
            let point = ComplexPoint::from_sphere(q);
            rows.push(ProfileRow { radius: r, point, density: self.f(point)? });
        }
        let xs: Vec<f64> = rows.iter().map(|r| r.radius.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.density.ln()).collect();
        Ok(Profile { limit_point: y0, rows, slope: ls_slope(&xs, &ys), resolution })
    }

    /// Compares `F(γx) s_γ(x)^δ` with `F(x)` at `samples` points of the
    /// fundamental domain drawn from `seed`.
    pub fn conformality(
        &self,
        group: &SchottkyGroup,
        samples: usize,
        seed: u64,
        tests: &[TestFunction],
    ) -> Result<ConformalityReport, PsError> {
        let points = fundamental_domain_sample(group, samples, seed)?;
        let delta = self.measure.delta;
        let mut per_generator = Vec::with_capacity(group.rank());
        for i in 0..group.rank() {
            let g = group.letter_map(2 * i as Letter);
            let mut worst: f64 = 0.0;
            for &x in &points {
                let fx = self.f(x)?;
                let fgx = self.f(g.apply(x))?;
                let moved = fgx * g.spherical_derivative(x).powf(delta);
                worst = worst.max((moved - fx).abs() / fx);
            }
            per_generator.push(worst);
        }
        let max_relative = per_generator.iter().copied().fold(0.0, f64::max);
        let measure_residual = quasi_invariance_residual(&self.measure, group, tests);
        Ok(ConformalityReport {
            max_relative,
            measure_residual,
            constant: max_relative / measure_residual.max(f64::MIN_POSITIVE),
            samples: points.len(),
            per_generator,
        })
    }
}

fn ray_direction(p: [f64; 3], toward: [f64; 3]) -> [f64; 3] {
    let project = |v: [f64; 3]| {
        let dot = v[0] * p[0] + v[1] * p[1] + v[2] * p[2];
        let w = [v[0] - dot * p[0], v[1] - dot * p[1], v[2] - dot * p[2]];
        let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        (n > 1e-8).then(|| [w[0] / n, w[1] / n, w[2] / n])
    };
    project(toward)
        .or_else(|| project([1.0, 0.0, 0.0]))
        .or_else(|| project([0.0, 1.0, 0.0]))
        .expect("two independent axes")
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Uniform point on the unit sphere from two uniform variates.
pub fn sphere_point(u: f64, v: f64) -> ComplexPoint {
    let z = 2.0 * u - 1.0;
    let rho = (1.0 - z * z).max(0.0).sqrt();
    let t = 2.0 * std::f64::consts::PI * v;
    ComplexPoint::from_sphere([rho * t.cos(), rho * t.sin(), z])
}

/// `n` uniformly distributed sphere points outside every defining disk.
pub fn fundamental_domain_sample(group: &SchottkyGroup, n: usize, seed: u64) -> Result<Vec<ComplexPoint>, PsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 1000 * (n + 1) {
            return Err(PsError::InvalidParameter("fundamental domain too small to sample".into()));
        }
        let x = sphere_point(rng.gen(), rng.gen());
        let inside = group.disks().iter().any(|d| d.contains_within(x, 1e-6));
        let near_fixed = group.kind() == GroupKind::CyclicDiagnostic
            && group.generators().iter().any(|g| {
                g.fixed_points_multiplier()
                    .map(|fp| chordal(x, fp.attracting) < 1e-3 || chordal(x, fp.repelling) < 1e-3)
                    .unwrap_or(false)
            });
        if !inside && !near_fixed {
            out.push(x);
        }
    }
    Ok(out)
}

/// Which disk the atom's word starts in, or `None` outside every disk.
pub fn atom_disk(group: &SchottkyGroup, atom: &Atom) -> Option<Letter> {
    (0..group.disks().len() as Letter).find(|&l| group.disks()[l as usize].contains_within(atom.point, 1e-12))
}

/// `true` when the letter pairs `l`, `inverse_letter(l)` both carry atoms.
pub fn populates_all_disks(group: &SchottkyGroup, measure: &PSMeasure) -> bool {
    (0..group.disks().len() as Letter).all(|l| {
        measure.atoms.iter().any(|a| atom_disk(group, a) == Some(l))
            && measure.atoms.iter().any(|a| atom_disk(group, a) == Some(inverse_letter(l)))
    })
}
