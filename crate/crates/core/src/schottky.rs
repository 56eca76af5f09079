//! Marked Schottky groups: construction and validation, reduced-word
//! enumeration, limit-set sampling, reduction to the fundamental domain,
//! Nielsen moves and critical-exponent estimation.
//!
//! Letters are indexed `2i` for generator `i` and `2i + 1` for its inverse.
//! Each letter `l` owns an image disk `D_l`: the letter maps the exterior of
//! `D_{l^-1}` onto the interior of `D_l`. A reduced word `l_1 ... l_n` acts
//! as `l_1 ∘ ... ∘ l_n`, so it sends the fundamental domain into `D_{l_1}`.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exec::{Exec, ExecMode};
use crate::moebius::{chordal, ComplexPoint, MapClass, MoebiusError, MoebiusMap};
use crate::sum::CompensatedSum;

pub type Letter = u8;

#[inline]
pub fn inverse_letter(l: Letter) -> Letter {
    l ^ 1
}

/// Chordal residual allowed when checking that a generator pairs its circles.
pub const PAIRING_TOLERANCE: f64 = 1e-9;
/// Default cap on reduction steps.
pub const DEFAULT_REDUCTION_STEPS: usize = 200;
/// Default tolerance on deep shell ratios at the estimated exponent.
pub const DEFAULT_RATIO_TOLERANCE: f64 = 0.05;

const PAIRING_SAMPLES: usize = 16;
const MAX_REDUCTION_STRETCH: f64 = 1.0 / (64.0 * f64::EPSILON);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupError {
    #[error("invalid Schottky group: {0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Moebius(#[from] MoebiusError),
    #[error("generator index {index} out of range for rank {rank}")]
    InvalidIndex { index: usize, rank: usize },
    #[error("operation needs defining disks, but the group {0}")]
    NoDisks(&'static str),
    #[error("point numerically indistinguishable from limit set after {0} reduction steps")]
    NearLimitSet(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shell ratio never crosses 1 on [0, 2] (ratio at s = 2 is {0})")]
    NoCrossing(f64),
    #[error("non-geometric shell behaviour, ratios at the estimate: {ratios:?}")]
    NonGeometric { ratios: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Complex64, radius: f64) -> Self {
        Circle { center, radius }
    }

    /// Strict interior test; boundary points belong to the exterior.
    pub fn contains(&self, z: ComplexPoint) -> bool {
        match z {
            ComplexPoint::Infinity => false,
            ComplexPoint::Finite(w) => (w - self.center).norm() < self.radius * (1.0 - 1e-12),
        }
    }

    /// Closed-disk membership with slack `eps` (in chordal distance).
    pub fn contains_within(&self, z: ComplexPoint, eps: f64) -> bool {
        match z {
            ComplexPoint::Infinity => false,
            ComplexPoint::Finite(w) => {
                let excess = (w - self.center).norm() - self.radius;
                excess <= 0.0 || {
                    let scale = 2.0 / (1.0 + w.norm_sqr());
                    excess * scale <= eps
                }
            }
        }
    }

    pub fn point_at(&self, theta: f64) -> Complex64 {
        self.center + Complex64::from_polar(self.radius, theta)
    }

    /// Image of the disk under `m`, if it is again a bounded disk (the pole
    /// of `m` lies outside the closed disk).
    pub fn image_under(&self, m: &MoebiusMap) -> Option<Circle> {
        let pole = m.inverse().apply(ComplexPoint::Infinity);
        let mirror = match pole {
            ComplexPoint::Infinity => self.center,
            ComplexPoint::Finite(p) => {
                let off = p - self.center;
                if off.norm() <= self.radius * (1.0 + 1e-12) {
                    return None;
                }
                self.center + self.radius * self.radius / off.conj()
            }
        };
        let center = m.apply(mirror.into()).finite()?;
        let rim = m.apply(self.point_at(0.0).into()).finite()?;
        Some(Circle { center, radius: (rim - center).norm() })
    }

    fn disjoint_from(&self, other: &Circle) -> bool {
        let gap = (self.center - other.center).norm() - self.radius - other.radius;
        let scale = self.radius.max(other.radius).max(1.0);
        gap > 1e-12 * scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirclePair {
    /// The generator maps the exterior of `from` ...
    pub from: Circle,
    /// ... onto the interior of `to`.
    pub to: Circle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorSpec {
    Matrix(MoebiusMap),
    FixedPoints { repelling: ComplexPoint, attracting: ComplexPoint, multiplier: Complex64 },
}

impl GeneratorSpec {
    pub fn to_map(&self) -> Result<MoebiusMap, MoebiusError> {
        match *self {
            GeneratorSpec::Matrix(m) => Ok(m),
            GeneratorSpec::FixedPoints { repelling, attracting, multiplier } => {
                MoebiusMap::from_fixed_points_multiplier(repelling, attracting, multiplier)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupSpec {
    pub generators: Vec<GeneratorSpec>,
    /// One pair per generator; isometric circles are used when absent.
    pub circles: Option<Vec<CirclePair>>,
    /// Accept a rank-one group whose limit set contains infinity.
    pub cyclic_diagnostic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    DisksOverlap { first: String, second: String },
    NotLoxodromic { generator: usize, class: MapClass },
    InfinityInsideDisk { generator: usize },
    PairingMismatch { generator: usize, residual: f64 },
    WrongCircleCount { expected: usize, got: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DisksOverlap { first, second } => write!(f, "disks overlap: {first} and {second}"),
            Violation::NotLoxodromic { generator, class } => {
                write!(f, "generator {generator} is not loxodromic ({class:?})")
            }
            Violation::InfinityInsideDisk { generator } => {
                write!(f, "∞ inside a defining disk (generator {generator} has no bounded isometric circle)")
            }
            Violation::PairingMismatch { generator, residual } => write!(
                f,
                "generator {generator} does not map the exterior of its first circle onto the interior of its second (residual {residual:e})"
            ),
            Violation::WrongCircleCount { expected, got } => {
                write!(f, "expected {expected} circle pairs, got {got}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GroupKind {
    /// Disjoint defining disks with infinity in the common exterior.
    Classical,
    /// Same group as a classical one, but the marking has lost the disk
    /// condition; only word-level operations are available.
    NonClassical,
    /// Rank-one diagnostic group whose limit set may contain infinity.
    CyclicDiagnostic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchottkyGroup {
    generators: Vec<MoebiusMap>,
    letters: Vec<MoebiusMap>,
    /// Letter-indexed image disks.
    disks: Vec<Circle>,
    kind: GroupKind,
    basepoint: ComplexPoint,
}

/// A reduced word with its cached map and spherical derivative at the
/// group basepoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    letters: Vec<Letter>,
    map: MoebiusMap,
    basepoint_derivative: f64,
}

impl Word {
    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn map(&self) -> &MoebiusMap {
        &self.map
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn basepoint_derivative(&self) -> f64 {
        self.basepoint_derivative
    }

    pub fn is_reduced(&self) -> bool {
        is_reduced(&self.letters)
    }
}

pub fn is_reduced(letters: &[Letter]) -> bool {
    letters.windows(2).all(|w| w[1] != inverse_letter(w[0]))
}

/// `a b ...` for generators, upper case for inverses; `e` for the identity.
pub fn format_letters(letters: &[Letter]) -> String {
    if letters.is_empty() {
        return "e".to_string();
    }
    letters
        .iter()
        .map(|&l| {
            let base = (b'a' + (l / 2) % 26) as char;
            if l % 2 == 1 { base.to_ascii_uppercase() } else { base }
        })
        .collect()
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_letters(&self.letters))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaEstimate {
    pub delta: f64,
    pub bracket: (f64, f64),
    /// `P_n / P_{n-1}` at `s = delta` for `n = 1..=max_depth`.
    pub shell_ratios: Vec<f64>,
    pub max_depth: usize,
    pub ratio_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSetSample {
    pub points: Vec<ComplexPoint>,
    pub depth: usize,
    /// Seed points, indexed by the letter whose attracting fixed point they are.
    pub seeds: Vec<ComplexPoint>,
    /// Seed used for each point.
    pub seed_of: Vec<Letter>,
    word_of: Vec<u32>,
    word_letters: Vec<Letter>,
}

impl LimitSetSample {
    /// Word whose image of the seed produced point `i`.
    pub fn word_of(&self, i: usize) -> &[Letter] {
        let w = self.word_of[i] as usize;
        &self.word_letters[w * self.depth..(w + 1) * self.depth]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NielsenMove {
    /// Replace generator `i` by its inverse.
    Invert(usize),
    Swap(usize, usize),
    /// Replace generator `i` by `g_i ∘ g_j`.
    Multiply(usize, usize),
    /// `(g_0, g_1, ..., g_{n-1}) -> (g_1, ..., g_{n-1}, g_0)`.
    CyclicPermutation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NielsenOutcome {
    pub group: SchottkyGroup,
    /// Empty when the new marking still satisfies the classical condition.
    pub report: ValidationReport,
}

impl NielsenOutcome {
    pub fn classical_condition_lost(&self) -> bool {
        !self.report.is_valid()
    }
}

fn isometric_pair(g: &MoebiusMap) -> Option<CirclePair> {
    let [a, _, c, d] = g.entries();
    if c.norm() < 1e-12 {
        return None;
    }
    let radius = 1.0 / c.norm();
    Some(CirclePair {
        from: Circle::new(-d / c, radius),
        to: Circle::new(a / c, radius),
    })
}

fn disk_name(letter: usize) -> String {
    if letter % 2 == 0 {
        format!("C{}'", letter / 2)
    } else {
        format!("C{}", letter / 2)
    }
}

fn pairing_residual(g: &MoebiusMap, pair: &CirclePair) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..PAIRING_SAMPLES {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / PAIRING_SAMPLES as f64;
        let image = g.apply(pair.from.point_at(theta).into());
        let dev = match image {
            ComplexPoint::Infinity => f64::INFINITY,
            ComplexPoint::Finite(w) => {
                let radial = (w - pair.to.center).norm() - pair.to.radius;
                radial.abs() * 2.0 / (1.0 + w.norm_sqr())
            }
        };
        worst = worst.max(dev);
    }
    // exterior -> interior
    let outside = pair.from.center + Complex64::new(2.0 * pair.from.radius + 1.0, 0.0);
    if !pair.to.contains(g.apply(outside.into())) {
        worst = worst.max(1.0);
    }
    worst
}

fn validate_parts(generators: &[MoebiusMap], pairs: &[Option<CirclePair>]) -> ValidationReport {
    let mut violations = Vec::new();
    for (i, g) in generators.iter().enumerate() {
        let class = g.classify();
        if !class.is_loxodromic() {
            violations.push(Violation::NotLoxodromic { generator: i, class });
        }
    }
    for (i, (g, pair)) in generators.iter().zip(pairs).enumerate() {
        match pair {
            None => violations.push(Violation::InfinityInsideDisk { generator: i }),
            Some(pair) => {
                let residual = pairing_residual(g, pair);
                if !(residual < PAIRING_TOLERANCE) {
                    violations.push(Violation::PairingMismatch { generator: i, residual });
                }
            }
        }
    }
    let disks: Vec<(usize, Circle)> = pairs
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.map(|p| [(2 * i, p.to), (2 * i + 1, p.from)]))
        .flatten()
        .collect();
    for (x, (li, ci)) in disks.iter().enumerate() {
        for (lj, cj) in disks.iter().skip(x + 1) {
            if !ci.disjoint_from(cj) {
                violations.push(Violation::DisksOverlap { first: disk_name(*li), second: disk_name(*lj) });
            }
        }
    }
    ValidationReport { violations }
}

fn letter_maps(generators: &[MoebiusMap]) -> Vec<MoebiusMap> {
    generators.iter().flat_map(|g| [*g, g.inverse()]).collect()
}

fn disks_from_pairs(pairs: &[CirclePair]) -> Vec<Circle> {
    pairs.iter().flat_map(|p| [p.to, p.from]).collect()
}

fn pairs_from_disks(disks: &[Circle]) -> Vec<CirclePair> {
    disks.chunks(2).map(|d| CirclePair { from: d[1], to: d[0] }).collect()
}

fn diagnostic_basepoint(generator: &MoebiusMap) -> ComplexPoint {
    let fixed = match generator.fixed_points_multiplier() {
        Ok(fp) => [fp.attracting, fp.repelling],
        Err(_) => return ComplexPoint::Infinity,
    };
    let candidates = [
        ComplexPoint::Infinity,
        ComplexPoint::ONE,
        ComplexPoint::I,
        ComplexPoint::new(-1.0, 0.0),
        ComplexPoint::new(0.0, -1.0),
        ComplexPoint::ZERO,
    ];
    let score = |z: &ComplexPoint| fixed.iter().map(|f| chordal(*z, *f)).fold(f64::INFINITY, f64::min);
    let mut best = candidates[0];
    for z in &candidates[1..] {
        if score(z) > score(&best) + 1e-12 {
            best = *z;
        }
    }
    best
}

impl SchottkyGroup {
    pub fn build(spec: &GroupSpec) -> Result<Self, GroupError> {
        let generators = spec
            .generators
            .iter()
            .map(|g| g.to_map())
            .collect::<Result<Vec<_>, _>>()?;
        let rank = generators.len();
        let pairs: Vec<Option<CirclePair>> = match &spec.circles {
            Some(explicit) => {
                if explicit.len() != rank {
                    return Err(GroupError::Invalid(ValidationReport {
                        violations: vec![Violation::WrongCircleCount { expected: rank, got: explicit.len() }],
                    }));
                }
                explicit.iter().copied().map(Some).collect()
            }
            None => generators.iter().map(isometric_pair).collect(),
        };
        let report = validate_parts(&generators, &pairs);
        if report.is_valid() {
            let disks = disks_from_pairs(&pairs.into_iter().flatten().collect::<Vec<_>>());
            return Ok(SchottkyGroup {
                letters: letter_maps(&generators),
                generators,
                disks,
                kind: GroupKind::Classical,
                basepoint: ComplexPoint::Infinity,
            });
        }
        let diagnostic_ok = spec.cyclic_diagnostic
            && rank == 1
            && report.violations.iter().all(|v| {
                matches!(v, Violation::InfinityInsideDisk { .. } | Violation::PairingMismatch { .. })
            });
        if diagnostic_ok {
            return Ok(SchottkyGroup {
                letters: letter_maps(&generators),
                basepoint: diagnostic_basepoint(&generators[0]),
                generators,
                disks: Vec::new(),
                kind: GroupKind::CyclicDiagnostic,
            });
        }
        Err(GroupError::Invalid(report))
    }

    /// The rank-zero group.
    pub fn trivial() -> Self {
        SchottkyGroup {
            generators: Vec::new(),
            letters: Vec::new(),
            disks: Vec::new(),
            kind: GroupKind::Classical,
            basepoint: ComplexPoint::Infinity,
        }
    }

    /// Rank-two group pairing circles of the given radius centred at `-2 -> 2`
    /// and `-2i -> 2i`.
    pub fn standard_test_group(radius: f64) -> Result<Self, GroupError> {
        let pair = |c: Complex64| {
            let from = Circle::new(-c, radius);
            let to = Circle::new(c, radius);
            MoebiusMap::circle_pairing(from.center, radius, to.center, radius)
                .map(|m| (GeneratorSpec::Matrix(m), CirclePair { from, to }))
        };
        let (g1, c1) = pair(Complex64::new(2.0, 0.0))?;
        let (g2, c2) = pair(Complex64::new(0.0, 2.0))?;
        Self::build(&GroupSpec {
            generators: vec![g1, g2],
            circles: Some(vec![c1, c2]),
            cyclic_diagnostic: false,
        })
    }

    /// `<z -> 4z>` in diagnostic mode.
    pub fn cyclic_diagnostic_group() -> Self {
        let g = MoebiusMap::scaling(Complex64::new(4.0, 0.0)).expect("non-singular");
        Self::build(&GroupSpec {
            generators: vec![GeneratorSpec::Matrix(g)],
            circles: None,
            cyclic_diagnostic: true,
        })
        .expect("z -> 4z is loxodromic")
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[MoebiusMap] {
        &self.generators
    }

    pub fn letter_map(&self, l: Letter) -> &MoebiusMap {
        &self.letters[l as usize]
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn basepoint(&self) -> ComplexPoint {
        self.basepoint
    }

    /// Letter-indexed image disks (empty unless classical).
    pub fn disks(&self) -> &[Circle] {
        &self.disks
    }

    pub fn circle_pairs(&self) -> Vec<CirclePair> {
        pairs_from_disks(&self.disks)
    }

    pub fn validate(&self) -> ValidationReport {
        match self.kind {
            GroupKind::CyclicDiagnostic => {
                let pairs: Vec<_> = self.generators.iter().map(isometric_pair).collect();
                validate_parts(&self.generators, &pairs)
            }
            _ => {
                let pairs: Vec<_> = pairs_from_disks(&self.disks).into_iter().map(Some).collect();
                validate_parts(&self.generators, &pairs)
            }
        }
    }

    fn require_disks(&self) -> Result<(), GroupError> {
        match self.kind {
            GroupKind::Classical => Ok(()),
            GroupKind::NonClassical => Err(GroupError::NoDisks("marking is not classical")),
            GroupKind::CyclicDiagnostic => Err(GroupError::NoDisks("is a cyclic diagnostic group")),
        }
    }

    /// Same generators, explicit basepoint.
    pub fn with_basepoint(&self, basepoint: ComplexPoint) -> Self {
        SchottkyGroup { basepoint, ..self.clone() }
    }

    pub fn word(&self, letters: &[Letter]) -> Result<Word, GroupError> {
        let n = self.letters.len();
        if let Some(&bad) = letters.iter().find(|&&l| l as usize >= n) {
            return Err(GroupError::InvalidIndex { index: bad as usize / 2, rank: self.rank() });
        }
        if !is_reduced(letters) {
            return Err(GroupError::InvalidParameter(format!(
                "word {} is not reduced",
                format_letters(letters)
            )));
        }
        let map = letters
            .iter()
            .fold(MoebiusMap::identity(), |acc, &l| acc.compose(&self.letters[l as usize]));
        Ok(Word {
            letters: letters.to_vec(),
            basepoint_derivative: map.spherical_derivative(self.basepoint),
            map,
        })
    }

    /// All reduced words of length `<= max_len`, shell by shell, each shell in
    /// lexicographic letter order.
    pub fn enumerate(&self, max_len: usize) -> WordIter<'_> {
        WordIter::new(self, max_len)
    }

    /// Number of reduced words of length exactly `n`.
    pub fn shell_size(&self, n: usize) -> u64 {
        let k = 2 * self.rank() as u64;
        match (n, k) {
            (0, _) => 1,
            (_, 0) => 0,
            _ => k * (k - 1).pow(n as u32 - 1),
        }
    }

    fn dfs<A>(
        &self,
        letters: &mut Vec<Letter>,
        map: &MoebiusMap,
        max_len: usize,
        acc: &mut A,
        visit: &(impl Fn(&mut A, &[Letter], &MoebiusMap) + Sync),
    ) {
        visit(acc, letters, map);
        if letters.len() == max_len {
            return;
        }
        let forbidden = letters.last().map(|&l| inverse_letter(l));
        for l in 0..self.letters.len() as Letter {
            if Some(l) == forbidden {
                continue;
            }
            let next = map.compose(&self.letters[l as usize]);
            letters.push(l);
            self.dfs(letters, &next, max_len, acc, visit);
            letters.pop();
        }
    }

    /// Depth-first fold over every reduced word of length `<= max_len`.
    ///
    /// Words are split into subtrees by their first one (strict) or two
    /// (fast) letters; subtree accumulators are merged in index order, so
    /// strict results do not depend on the thread count.
    pub fn fold_words<A, I, V, M>(&self, max_len: usize, exec: Exec, init: I, visit: V, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync,
        V: Fn(&mut A, &[Letter], &MoebiusMap) + Sync,
        M: Fn(&mut A, A),
    {
        let split = match exec.mode {
            ExecMode::Strict => 1,
            ExecMode::Fast => 2,
        }
        .min(max_len);
        let mut root = init();
        let mut prefixes: Vec<(Vec<Letter>, MoebiusMap)> = Vec::new();
        {
            // shallow words go to the root accumulator, prefixes of length
            // `split` seed the subtrees
            let mut stack = vec![(Vec::new(), MoebiusMap::identity())];
            while let Some((letters, map)) = stack.pop() {
                if letters.len() == split {
                    prefixes.push((letters, map));
                    continue;
                }
                visit(&mut root, &letters, &map);
                let forbidden = letters.last().map(|&l| inverse_letter(l));
                for l in (0..self.letters.len() as Letter).rev() {
                    if Some(l) == forbidden {
                        continue;
                    }
                    let mut next = letters.clone();
                    next.push(l);
                    stack.push((next, map.compose(&self.letters[l as usize])));
                }
            }
        }
        let run = |(prefix, map): &(Vec<Letter>, MoebiusMap)| {
            let mut acc = init();
            let mut letters = prefix.clone();
            self.dfs(&mut letters, map, max_len, &mut acc, &visit);
            acc
        };
        let parts: Vec<A> = if exec.threads <= 1 {
            prefixes.iter().map(run).collect()
        } else {
            exec.install(|| prefixes.par_iter().map(run).collect())
        };
        for part in parts {
            merge(&mut root, part);
        }
        root
    }

    /// `P_n(s) = sum_{|w| = n} s_w(basepoint)^s` for `n = 0..=max_depth`,
    /// with `s_w` the chordal stretch factor of `w`.
    pub fn shell_sums(&self, s: f64, max_depth: usize, basepoint: ComplexPoint, exec: Exec) -> Vec<f64> {
        let sums = self.fold_words(
            max_depth,
            exec,
            || vec![CompensatedSum::new(); max_depth + 1],
            |acc, letters, map| {
                let d = map.spherical_derivative(basepoint);
                acc[letters.len()].add(if s == 0.0 { 1.0 } else { d.powf(s) });
            },
            |acc, part| acc.iter_mut().zip(&part).for_each(|(a, b)| a.merge(b)),
        );
        sums.iter().map(|s| s.value()).collect()
    }

    /// Critical exponent: the `s` in `[0, 2]` where the deepest shell ratio
    /// `P_N(s) / P_{N-1}(s)` crosses 1, located by bisection to `resolution`.
    pub fn estimate_delta(&self, resolution: f64, max_depth: usize, exec: Exec) -> Result<DeltaEstimate, GroupError> {
        self.estimate_delta_with(resolution, max_depth, DEFAULT_RATIO_TOLERANCE, exec)
    }

    pub fn estimate_delta_with(
        &self,
        resolution: f64,
        max_depth: usize,
        ratio_tolerance: f64,
        exec: Exec,
    ) -> Result<DeltaEstimate, GroupError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GroupError::InvalidParameter(format!("resolution must be positive, got {resolution}")));
        }
        if max_depth < 2 {
            return Err(GroupError::InvalidParameter("max_depth must be at least 2".into()));
        }
        if self.rank() == 0 {
            return Err(GroupError::InvalidParameter("trivial group has no limit set".into()));
        }
        let bp = self.basepoint;
        let (prev, last) = self.fold_words(
            max_depth,
            exec,
            || (Vec::new(), Vec::new()),
            |acc: &mut (Vec<f64>, Vec<f64>), letters, map| {
                if letters.len() + 1 == max_depth {
                    acc.0.push(map.spherical_derivative(bp).ln());
                } else if letters.len() == max_depth {
                    acc.1.push(map.spherical_derivative(bp).ln());
                }
            },
            |acc, part| {
                acc.0.extend(part.0);
                acc.1.extend(part.1);
            },
        );
        let log_ratio = |s: f64| {
            let num: CompensatedSum = last.iter().map(|l| (s * l).exp()).collect();
            let den: CompensatedSum = prev.iter().map(|l| (s * l).exp()).collect();
            num.value().ln() - den.value().ln()
        };
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        let at_top = log_ratio(hi);
        if at_top > 0.0 {
            return Err(GroupError::NoCrossing(at_top.exp()));
        }
        while hi - lo > resolution {
            let mid = 0.5 * (lo + hi);
            if log_ratio(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let delta = 0.5 * (lo + hi);
        let sums = self.shell_sums(delta, max_depth, bp, exec);
        let shell_ratios: Vec<f64> = sums.windows(2).map(|w| w[1] / w[0]).collect();
        let deep = &shell_ratios[shell_ratios.len().saturating_sub(3)..];
        if deep.iter().any(|r| (r - 1.0).abs() > ratio_tolerance) {
            return Err(GroupError::NonGeometric { ratios: shell_ratios });
        }
        Ok(DeltaEstimate { delta, bracket: (lo, hi), shell_ratios, max_depth, ratio_tolerance })
    }

    /// Images of generator fixed points under all reduced words of length
    /// `depth` whose last letter is not the inverse of the seed's letter.
    pub fn limit_set(&self, depth: usize) -> Result<LimitSetSample, GroupError> {
        if depth == 0 {
            return Err(GroupError::InvalidParameter("depth must be at least 1".into()));
        }
        if self.kind == GroupKind::NonClassical {
            return Err(GroupError::NoDisks("marking is not classical"));
        }
        let seeds: Vec<ComplexPoint> = self
            .letters
            .iter()
            .map(|m| m.fixed_points_multiplier().map(|fp| fp.attracting))
            .collect::<Result<_, _>>()?;
        let mut sample = LimitSetSample {
            points: Vec::new(),
            depth,
            seeds: seeds.clone(),
            seed_of: Vec::new(),
            word_of: Vec::new(),
            word_letters: Vec::new(),
        };
        for word in self.enumerate(depth).filter(|w| w.len() == depth) {
            let last = *word.letters.last().expect("depth >= 1");
            let index = (sample.word_letters.len() / depth) as u32;
            sample.word_letters.extend_from_slice(&word.letters);
            for (m, seed) in seeds.iter().enumerate() {
                if inverse_letter(m as Letter) == last {
                    continue;
                }
                sample.points.push(word.map.apply(*seed));
                sample.seed_of.push(m as Letter);
                sample.word_of.push(index);
            }
        }
        Ok(sample)
    }

    /// Level-`n` disk `l_1 ... l_{n-1} (D_{l_n})` of a non-empty reduced word.
    pub fn word_disk(&self, letters: &[Letter]) -> Result<Circle, GroupError> {
        self.require_disks()?;
        let (&last, prefix) = letters
            .split_last()
            .ok_or_else(|| GroupError::InvalidParameter("empty word has no disk".into()))?;
        let prefix = self.word(prefix)?;
        self.disks[last as usize]
            .image_under(prefix.map())
            .ok_or_else(|| GroupError::InvalidParameter("word disk is not bounded".into()))
    }

    /// Maps `z` into the closed common exterior of the defining disks.
    /// Returns the image and the word `w` with `w(z)` equal to it.
    pub fn reduce_to_fundamental_domain(
        &self,
        z: ComplexPoint,
        max_steps: usize,
    ) -> Result<(ComplexPoint, Word), GroupError> {
        self.require_disks()?;
        let mut point = z;
        let mut applied: Vec<Letter> = Vec::new();
        // accumulated chordal stretch; past 1/eps the input position no
        // longer determines the orbit
        let mut stretch = 1.0;
        loop {
            let hit = self.disks.iter().position(|d| d.contains(point));
            let Some(l) = hit else { break };
            if applied.len() == max_steps || stretch > MAX_REDUCTION_STRETCH {
                return Err(GroupError::NearLimitSet(applied.len()));
            }
            let back = inverse_letter(l as Letter);
            let m = &self.letters[back as usize];
            stretch *= m.spherical_derivative(point);
            point = m.apply(point);
            applied.push(back);
        }
        applied.reverse();
        let word = self.word(&applied)?;
        Ok((point, word))
    }

    pub fn in_fundamental_domain(&self, z: ComplexPoint) -> bool {
        !self.disks.iter().any(|d| d.contains(z))
    }

    pub fn nielsen(&self, mv: NielsenMove) -> Result<NielsenOutcome, GroupError> {
        let rank = self.rank();
        let check = |i: usize| {
            if i < rank { Ok(()) } else { Err(GroupError::InvalidIndex { index: i, rank }) }
        };
        let mut gens = self.generators.clone();
        let mut pairs: Vec<Option<CirclePair>> = match self.kind {
            GroupKind::CyclicDiagnostic => gens.iter().map(isometric_pair).collect(),
            _ => pairs_from_disks(&self.disks).into_iter().map(Some).collect(),
        };
        match mv {
            NielsenMove::Invert(i) => {
                check(i)?;
                gens[i] = gens[i].inverse();
                pairs[i] = pairs[i].map(|p| CirclePair { from: p.to, to: p.from });
            }
            NielsenMove::Swap(i, j) => {
                check(i)?;
                check(j)?;
                gens.swap(i, j);
                pairs.swap(i, j);
            }
            NielsenMove::Multiply(i, j) => {
                check(i)?;
                check(j)?;
                if i == j {
                    return Err(GroupError::InvalidParameter("multiply needs two distinct generators".into()));
                }
                gens[i] = gens[i].compose(&gens[j]);
                pairs[i] = isometric_pair(&gens[i]);
            }
            NielsenMove::CyclicPermutation => {
                if rank > 0 {
                    gens.rotate_left(1);
                    pairs.rotate_left(1);
                }
            }
        }
        let report = validate_parts(&gens, &pairs);
        let kind = match self.kind {
            GroupKind::CyclicDiagnostic => GroupKind::CyclicDiagnostic,
            _ if report.is_valid() => GroupKind::Classical,
            _ => GroupKind::NonClassical,
        };
        let disks = match kind {
            GroupKind::Classical => disks_from_pairs(&pairs.into_iter().flatten().collect::<Vec<_>>()),
            _ => Vec::new(),
        };
        let report = if kind == GroupKind::CyclicDiagnostic { ValidationReport::default() } else { report };
        Ok(NielsenOutcome {
            group: SchottkyGroup {
                letters: letter_maps(&gens),
                generators: gens,
                disks,
                kind,
                basepoint: self.basepoint,
            },
            report,
        })
    }

    /// Conjugate every generator by `h`; defining circles are transported
    /// by `h` and the result is validated.
    pub fn conjugate(&self, h: &MoebiusMap) -> Result<Self, GroupError> {
        self.require_disks()?;
        let generators: Vec<GeneratorSpec> =
            self.generators.iter().map(|g| GeneratorSpec::Matrix(g.conjugate_by(h))).collect();
        let circles = self
            .circle_pairs()
            .iter()
            .map(|p| {
                Some(CirclePair { from: p.from.image_under(h)?, to: p.to.image_under(h)? })
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| GroupError::InvalidParameter("conjugator sends a defining disk through ∞".into()))?;
        Self::build(&GroupSpec { generators, circles: Some(circles), cyclic_diagnostic: false })
    }
}

/// Shell-ordered iterator over reduced words.
pub struct WordIter<'a> {
    group: &'a SchottkyGroup,
    max_len: usize,
    len: usize,
    letters: Vec<Letter>,
    maps: Vec<MoebiusMap>,
    started: bool,
    done: bool,
}

impl<'a> WordIter<'a> {
    fn new(group: &'a SchottkyGroup, max_len: usize) -> Self {
        WordIter {
            group,
            max_len,
            len: 0,
            letters: Vec::new(),
            maps: vec![MoebiusMap::identity()],
            started: false,
            done: false,
        }
    }

    fn smallest_from(&mut self, pos: usize) {
        self.letters.truncate(pos);
        self.maps.truncate(pos + 1);
        while self.letters.len() < self.len {
            let forbidden = self.letters.last().map(|&l| inverse_letter(l));
            let l = if forbidden == Some(0) { 1 } else { 0 };
            self.push(l);
        }
    }

    fn push(&mut self, l: Letter) {
        let next = self.maps.last().expect("identity at the root").compose(self.group.letter_map(l));
        self.letters.push(l);
        self.maps.push(next);
    }

    /// Lexicographic successor among reduced words of the current length.
    fn advance(&mut self) -> bool {
        let alphabet = 2 * self.group.rank() as Letter;
        for pos in (0..self.letters.len()).rev() {
            let forbidden = if pos == 0 { None } else { Some(inverse_letter(self.letters[pos - 1])) };
            let mut l = self.letters[pos] + 1;
            if Some(l) == forbidden {
                l += 1;
            }
            if l < alphabet {
                self.letters.truncate(pos);
                self.maps.truncate(pos + 1);
                self.push(l);
                self.smallest_from(pos + 1);
                return true;
            }
        }
        false
    }
}

impl Iterator for WordIter<'_> {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
        } else if !self.advance() {
            self.len += 1;
            if self.len > self.max_len || self.group.rank() == 0 {
                self.done = true;
                return None;
            }
            self.smallest_from(0);
        }
        let map = *self.maps.last().expect("non-empty");
        Some(Word {
            letters: self.letters.clone(),
            basepoint_derivative: map.spherical_derivative(self.group.basepoint),
            map,
        })
    }
}
