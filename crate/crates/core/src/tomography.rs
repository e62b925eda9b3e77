//! Two-qubit state reconstruction: the closed-form frequency-bin matrix and
//! 16-setting time-bin tomography, plus CHSH pooling of Franson fringes.
//!
//! Time-bin projections follow the three-slot detection model of
//! [`crate::timetag_sim::slot_operator`]: a time-basis projection succeeds
//! with weight 1/4 per photon and an energy-basis projection with 1/2, so a
//! pair projection has weight 1/16, 1/8 or 1/4. Each table row is summed over
//! `k` analyzer settings (4, 2 or 1 in the standard layout).

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::FringeFit;
use crate::quantum_state::{chsh_from_visibility, Basis, ChshResult, DensityMatrix};
use crate::timetag_sim::{Outcome, OutcomeTable};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqBinParams {
    pub a: f64,
    pub visibility: f64,
    pub phi: f64,
}

impl FreqBinParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.a) || !(0.0..=1.0).contains(&self.visibility) || !self.phi.is_finite() {
            return Err(Error::domain("need a, V in [0, 1] and finite phi"));
        }
        Ok(())
    }

    /// `V ≤ 2√(a(1−a))`.
    pub fn is_physical(&self) -> bool {
        self.visibility <= 2.0 * (self.a * (1.0 - self.a)).sqrt() + 1e-9
    }

    /// Fidelity to `(|ω_sω_i⟩ + |ω_iω_s⟩)/√2`, `(1 + V·cos φ)/2`.
    pub fn fidelity(&self) -> f64 {
        0.5 * (1.0 + self.visibility * self.phi.cos())
    }
}

/// Frequency-bin density matrix with populations `a`, `1 − a` and coherence
/// `V·e^{−iφ}/2` between them. Unphysical parameters still produce a
/// matrix, with a warning.
pub fn freqbin_density(p: &FreqBinParams) -> Result<DensityMatrix> {
    p.validate()?;
    if !p.is_physical() {
        log::warn!(
            "frequency-bin parameters unphysical: V = {} > 2·sqrt(a(1-a)) = {}",
            p.visibility,
            2.0 * (p.a * (1.0 - p.a)).sqrt()
        );
    }
    let mut m = Matrix4::<Complex64>::zeros();
    m[(0, 0)] = Complex64::new(p.a, 0.0);
    m[(3, 3)] = Complex64::new(1.0 - p.a, 0.0);
    m[(0, 3)] = Complex64::from_polar(0.5 * p.visibility, -p.phi);
    m[(3, 0)] = m[(0, 3)].conj();
    DensityMatrix::new(m, Basis::FreqBin)
}

/// Single-photon analysis basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    One,
    Two,
    D,
    R,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::One, Axis::Two, Axis::D, Axis::R];

    pub fn vector(self) -> [Complex64; 2] {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        match self {
            Axis::One => [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            Axis::Two => [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            Axis::D => [h, h],
            Axis::R => [h, Complex64::new(0.0, FRAC_1_SQRT_2)],
        }
    }

    pub fn is_time(self) -> bool {
        matches!(self, Axis::One | Axis::Two)
    }

    /// Detection weight of this projection in the three-slot scheme.
    pub fn weight(self) -> f64 {
        if self.is_time() {
            0.25
        } else {
            0.5
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::One => "1",
            Axis::Two => "2",
            Axis::D => "D",
            Axis::R => "R",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Axis::One),
            "2" => Ok(Axis::Two),
            "D" | "d" => Ok(Axis::D),
            "R" | "r" => Ok(Axis::R),
            other => Err(Error::parse(None, format!("unknown basis {other:?}"))),
        }
    }
}

/// Rank-one two-photon projector with its detection weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub a: Axis,
    pub b: Axis,
    pub vector: Vector4<Complex64>,
    pub weight: f64,
}

impl Projector {
    pub fn new(a: Axis, b: Axis) -> Self {
        let (va, vb) = (a.vector(), b.vector());
        Projector {
            a,
            b,
            vector: Vector4::new(va[0] * vb[0], va[0] * vb[1], va[1] * vb[0], va[1] * vb[1]),
            weight: a.weight() * b.weight(),
        }
    }

    /// `⟨v|ρ|v⟩`.
    pub fn probability(&self, rho: &DensityMatrix) -> f64 {
        (self.vector.adjoint() * rho.elements() * self.vector)[(0, 0)].re
    }

    /// Default number of analyzer settings contributing to this projection.
    pub fn default_multiplicity(&self) -> u32 {
        match (self.a.is_time(), self.b.is_time()) {
            (true, true) => 4,
            (false, false) => 1,
            _ => 2,
        }
    }
}

/// The 16 projectors in row order `11, 12, 1D, 1R, 21, …, RR`.
pub fn timebin_projectors() -> Vec<Projector> {
    Axis::ALL
        .iter()
        .flat_map(|&a| Axis::ALL.iter().map(move |&b| Projector::new(a, b)))
        .collect()
}

/// One tomography row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    #[serde(with = "axis_string")]
    pub photon1: Axis,
    #[serde(with = "axis_string")]
    pub photon2: Axis,
    /// Total over the contributing settings.
    pub n: f64,
    /// Per-setting counts `(dd, dr, rd, rr)`, `None` where not measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<[Option<f64>; 4]>,
    /// Number of settings summed into `n`.
    pub k: u32,
    /// Detection weight override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
}

mod axis_string {
    use super::Axis;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &Axis, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(a)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Axis, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl CountRow {
    pub fn weight(&self) -> f64 {
        self.w.unwrap_or_else(|| self.photon1.weight() * self.photon2.weight())
    }
}

/// Complete 16-row table of projection counts, in canonical row order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCountTable {
    pub rows: Vec<CountRow>,
}

#[derive(Deserialize)]
struct TableJson {
    rows: Vec<RowJson>,
}

#[derive(Deserialize)]
struct RowJson {
    photon1: String,
    photon2: String,
    n: f64,
    #[serde(default)]
    settings: Option<[Option<f64>; 4]>,
    #[serde(default)]
    k: Option<u32>,
    #[serde(default)]
    w: Option<f64>,
}

impl ProjectionCountTable {
    /// Orders and validates rows: each of the 16 projections exactly once,
    /// finite non-negative counts, `k ≥ 1`, and `n` equal to the per-setting
    /// sum whenever settings are given.
    pub fn new(rows: Vec<CountRow>) -> Result<Self> {
        let mut by_key: BTreeMap<(Axis, Axis), CountRow> = BTreeMap::new();
        for row in rows {
            if !(row.n >= 0.0 && row.n.is_finite()) {
                return Err(Error::validation(format!(
                    "row {}{}: count {} must be finite and >= 0",
                    row.photon1, row.photon2, row.n
                )));
            }
            if row.k == 0 {
                return Err(Error::validation(format!("row {}{}: k must be >= 1", row.photon1, row.photon2)));
            }
            if let Some(w) = row.w {
                if !(w > 0.0 && w <= 1.0) {
                    return Err(Error::validation(format!("row {}{}: weight {w} outside (0, 1]", row.photon1, row.photon2)));
                }
            }
            if let Some(s) = &row.settings {
                let present: Vec<f64> = s.iter().flatten().copied().collect();
                if present.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::validation(format!("row {}{}: invalid setting count", row.photon1, row.photon2)));
                }
                let sum: f64 = present.iter().sum();
                if (sum - row.n).abs() > 1e-9 * row.n.max(1.0) {
                    return Err(Error::validation(format!(
                        "row {}{}: n = {} but settings sum to {sum}",
                        row.photon1, row.photon2, row.n
                    )));
                }
            }
            let key = (row.photon1, row.photon2);
            if by_key.insert(key, row).is_some() {
                return Err(Error::validation(format!("projection {}{} listed twice", key.0, key.1)));
            }
        }
        let mut ordered = Vec::with_capacity(16);
        for p in timebin_projectors() {
            match by_key.remove(&(p.a, p.b)) {
                Some(r) => ordered.push(r),
                None => return Err(Error::validation(format!("projection {}{} missing", p.a, p.b))),
            }
        }
        Ok(ProjectionCountTable { rows: ordered })
    }

    /// Reads the projection-count layout: `photon1,photon2,dd,dr,rd,rr,n`, with `-`
    /// for missing settings and `#` comment lines. The setting columns are
    /// optional; `k` and `w` columns override the inferred multiplicity and
    /// weight.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(c1), Some(c2), Some(cn)) = (col("photon1"), col("photon2"), col("n")) else {
            return Err(Error::parse(Some(1), "header must contain photon1, photon2 and n"));
        };
        let setting_cols: Vec<Option<usize>> = ["dd", "dr", "rd", "rr"].iter().map(|c| col(c)).collect();
        let has_settings = setting_cols.iter().any(Option::is_some);
        let (ck, cw) = (col("k"), col("w"));
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize);
            let field = |i: usize| {
                rec.get(i)
                    .ok_or_else(|| Error::parse(line, format!("missing column {}", i + 1)))
            };
            let number = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("invalid number {s:?}")))
            };
            let photon1: Axis = field(c1)?.parse().map_err(|e: Error| relocate(e, line))?;
            let photon2: Axis = field(c2)?.parse().map_err(|e: Error| relocate(e, line))?;
            let n = number(field(cn)?)?;
            let settings = if has_settings {
                let mut s = [None; 4];
                for (slot, c) in s.iter_mut().zip(&setting_cols) {
                    if let Some(c) = c {
                        let v = field(*c)?;
                        if v != "-" && !v.is_empty() {
                            *slot = Some(number(v)?);
                        }
                    }
                }
                Some(s)
            } else {
                None
            };
            let default_k = match &settings {
                Some(s) => s.iter().flatten().count() as u32,
                None => Projector::new(photon1, photon2).default_multiplicity(),
            };
            let k = match ck {
                Some(c) => number(field(c)?)? as u32,
                None => default_k,
            };
            let w = match cw {
                Some(c) => Some(number(field(c)?)?),
                None => None,
            };
            rows.push(CountRow {
                photon1,
                photon2,
                n,
                settings,
                k,
                w,
            });
        }
        Self::new(rows)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: TableJson = serde_json::from_str(text)?;
        let rows = t
            .rows
            .into_iter()
            .map(|r| {
                let photon1: Axis = r.photon1.parse()?;
                let photon2: Axis = r.photon2.parse()?;
                let k = r.k.unwrap_or_else(|| match &r.settings {
                    Some(s) => s.iter().flatten().count() as u32,
                    None => Projector::new(photon1, photon2).default_multiplicity(),
                });
                Ok(CountRow {
                    photon1,
                    photon2,
                    n: r.n,
                    settings: r.settings,
                    k,
                    w: r.w,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn row(&self, a: Axis, b: Axis) -> &CountRow {
        self.rows
            .iter()
            .find(|r| r.photon1 == a && r.photon2 == b)
            .expect("table holds all 16 rows")
    }

    /// Replaces every count; settings are dropped.
    pub fn with_counts(&self, counts: &[f64]) -> Result<Self> {
        if counts.len() != 16 {
            return Err(Error::domain("need 16 counts"));
        }
        let rows = self
            .rows
            .iter()
            .zip(counts)
            .map(|(r, &n)| CountRow {
                n,
                settings: None,
                ..r.clone()
            })
            .collect();
        Self::new(rows)
    }

    /// Normalized probabilities `p̂_ν = n_ν/(k_ν·w_ν·N)`, with `N` making the
    /// four time-basis probabilities sum to one. Returns `(p̂, N)`.
    pub fn probabilities(&self) -> Result<(Vec<f64>, f64)> {
        let scaled: Vec<f64> = self.rows.iter().map(|r| r.n / (r.k as f64 * r.weight())).collect();
        let pairs: f64 = self
            .rows
            .iter()
            .zip(&scaled)
            .filter(|(r, _)| r.photon1.is_time() && r.photon2.is_time())
            .map(|(_, s)| s)
            .sum();
        if !(pairs > 0.0) {
            return Err(Error::Singular("time-basis counts sum to zero; normalization undefined".into()));
        }
        Ok((scaled.iter().map(|s| s / pairs).collect(), pairs))
    }
}

fn relocate(e: Error, line: Option<usize>) -> Error {
    match e {
        Error::Parse { message, .. } => Error::Parse { line, message },
        other => other,
    }
}

/// Orthonormal Hermitian basis of 4×4 matrices under `Tr(A·B)`.
fn hermitian_basis() -> Vec<Matrix4<Complex64>> {
    let mut out = Vec::with_capacity(16);
    for j in 0..4 {
        let mut m = Matrix4::zeros();
        m[(j, j)] = Complex64::new(1.0, 0.0);
        out.push(m);
    }
    let h = FRAC_1_SQRT_2;
    for j in 0..4 {
        for k in (j + 1)..4 {
            let mut re = Matrix4::zeros();
            re[(j, k)] = Complex64::new(h, 0.0);
            re[(k, j)] = Complex64::new(h, 0.0);
            out.push(re);
            let mut im = Matrix4::zeros();
            im[(j, k)] = Complex64::new(0.0, -h);
            im[(k, j)] = Complex64::new(0.0, h);
            out.push(im);
        }
    }
    out
}

/// Real 16×16 map from Hermitian-basis coordinates to projector probabilities.
fn measurement_matrix(projectors: &[Projector]) -> DMatrix<f64> {
    let basis = hermitian_basis();
    DMatrix::from_fn(projectors.len(), 16, |i, m| {
        let v = &projectors[i].vector;
        (v.adjoint() * basis[m] * v)[(0, 0)].re
    })
}

/// Linear-inversion estimate: solves `Tr(Π_ν·ρ) = p̂_ν` by least squares.
/// The result is Hermitian with unit trace but may have negative eigenvalues.
pub fn reconstruct_linear(table: &ProjectionCountTable) -> Result<DensityMatrix> {
    let (p, _) = table.probabilities()?;
    let projectors = timebin_projectors();
    let a = measurement_matrix(&projectors);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::Singular(format!("measurement matrix condition {smax:.3e}/{smin:.3e}")));
    }
    let coords = svd
        .solve(&DVector::from_vec(p), 0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let basis = hermitian_basis();
    let mut m = Matrix4::<Complex64>::zeros();
    for (c, b) in coords.iter().zip(&basis) {
        m += b * Complex64::new(*c, 0.0);
    }
    let rho = DensityMatrix::new(m, Basis::TimeBin)?;
    log::debug!(
        "linear inversion: trace {:.6}, min eigenvalue {:.4}",
        rho.trace(),
        rho.min_eigenvalue()
    );
    Ok(rho)
}

/// Frobenius-nearest unit-trace positive semidefinite matrix: the eigenvalues
/// are projected onto the probability simplex and the eigenvectors kept.
pub fn project_physical(rho: &DensityMatrix) -> Result<DensityMatrix> {
    let eig = SymmetricEigen::new(*rho.elements());
    let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let projected = simplex_projection(&lambda);
    let mut m = Matrix4::<Complex64>::zeros();
    for (k, &l) in projected.iter().enumerate() {
        if l > 0.0 {
            let v = eig.eigenvectors.column(k);
            m += v * v.adjoint() * Complex64::new(l, 0.0);
        }
    }
    DensityMatrix::new(m, rho.basis())
}

/// Euclidean projection onto `{x ≥ 0, Σx = 1}`.
pub fn simplex_projection(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// Expected row counts `k_ν·w_ν·N·Tr(Π_ν·ρ)` for `pairs_per_setting = N`,
/// using the default multiplicities.
pub fn expected_counts(rho: &DensityMatrix, pairs_per_setting: f64) -> Result<ProjectionCountTable> {
    let rows = timebin_projectors()
        .iter()
        .map(|p| {
            let k = p.default_multiplicity();
            CountRow {
                photon1: p.a,
                photon2: p.b,
                n: k as f64 * p.weight * pairs_per_setting * p.probability(rho),
                settings: None,
                k,
                w: None,
            }
        })
        .collect();
    ProjectionCountTable::new(rows)
}

/// Energy-basis analyzer setting of one UMZI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Analyzer {
    D,
    R,
}

impl Analyzer {
    /// UMZI phase realizing this basis at port 1 (middle slot projects on
    /// `(|1⟩ + e^{−iθ}|2⟩)/√2`).
    pub fn phase(self) -> f64 {
        match self {
            Analyzer::D => 0.0,
            Analyzer::R => -PI / 2.0,
        }
    }

    fn axis(self) -> Axis {
        match self {
            Analyzer::D => Axis::D,
            Analyzer::R => Axis::R,
        }
    }
}

/// Builds a tomography table from port-1/port-1 outcome counts recorded at
/// the four analyzer settings. Time-basis rows add up every setting;
/// energy-basis rows only the settings whose analyzer matches.
pub fn table_from_outcomes(runs: &BTreeMap<(Analyzer, Analyzer), OutcomeTable>) -> Result<ProjectionCountTable> {
    let order = [
        (Analyzer::D, Analyzer::D),
        (Analyzer::D, Analyzer::R),
        (Analyzer::R, Analyzer::D),
        (Analyzer::R, Analyzer::R),
    ];
    for key in &order {
        let run = runs
            .get(key)
            .ok_or_else(|| Error::validation(format!("missing analyzer setting {key:?}")))?;
        if (run.alpha - key.0.phase()).abs() > 1e-9 || (run.beta - key.1.phase()).abs() > 1e-9 {
            return Err(Error::validation(format!("run for {key:?} used phases ({}, {})", run.alpha, run.beta)));
        }
    }
    let slot = |axis: Axis| match axis {
        Axis::One => 1,
        Axis::Two => 3,
        _ => 2,
    };
    let matches = |axis: Axis, analyzer: Analyzer| axis.is_time() || axis == analyzer.axis();
    let rows = timebin_projectors()
        .iter()
        .map(|p| {
            let mut settings = [None; 4];
            for (s, key) in settings.iter_mut().zip(&order) {
                if matches(p.a, key.0) && matches(p.b, key.1) {
                    let o = Outcome {
                        port_a: 1,
                        port_b: 1,
                        slot_a: slot(p.a),
                        slot_b: slot(p.b),
                    };
                    *s = Some(runs[key].get(o) as f64);
                }
            }
            CountRow {
                photon1: p.a,
                photon2: p.b,
                n: settings.iter().flatten().sum(),
                k: settings.iter().flatten().count() as u32,
                settings: Some(settings),
                w: None,
            }
        })
        .collect();
    ProjectionCountTable::new(rows)
}

/// Both CHSH poolings of four Franson fringes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshPooling {
    /// Mean of the four visibilities.
    pub mean: ChshResult,
    /// Amplitude of `E(x) = Σ(−1)^{i+j}R_ij(x)/ΣR_ij(x)` built from the
    /// fitted curves.
    pub correlation_fit: ChshResult,
}

fn fringe_sigma(f: &FringeFit) -> f64 {
    f.bootstrap_sigma
        .as_ref()
        .and_then(|s| s.get(1).copied())
        .unwrap_or_else(|| f.visibility_sigma())
}

/// Pools four fringes keyed by `(port_A, port_B)` ∈ {1,2}². Fringe periods
/// must agree within 5%.
pub fn chsh_from_fringes(fits: &BTreeMap<(u8, u8), FringeFit>) -> Result<ChshPooling> {
    let keys = [(1u8, 1u8), (1, 2), (2, 1), (2, 2)];
    let mut ordered = Vec::with_capacity(4);
    for k in keys {
        ordered.push(
            fits.get(&k)
                .ok_or_else(|| Error::validation(format!("missing fringe for ports {k:?}")))?,
        );
    }
    let periods: Vec<f64> = ordered.iter().map(|f| f.period).collect();
    let pmax = periods.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pmin = periods.iter().copied().fold(f64::INFINITY, f64::min);
    let pmean = periods.iter().sum::<f64>() / 4.0;
    if (pmax - pmin) / pmean > 0.05 {
        return Err(Error::validation(format!(
            "fringe periods disagree: spread {:.1}% of the mean",
            100.0 * (pmax - pmin) / pmean
        )));
    }
    let sig: Vec<f64> = ordered.iter().map(|f| fringe_sigma(f)).collect();
    let v_mean = ordered.iter().map(|f| f.visibility).sum::<f64>() / 4.0;
    let s_mean = sig.iter().map(|s| s * s).sum::<f64>().sqrt() / 4.0;
    let mean = chsh_from_visibility(v_mean, finite(s_mean))?;

    let curves: Vec<FringeFit> = ordered.iter().map(|f| (*f).clone()).collect();
    let v_joint = correlation_amplitude(&curves, pmean);
    let mut var = 0.0;
    for k in 0..4 {
        let h = 1e-6;
        let mut up = curves.clone();
        up[k].visibility = (up[k].visibility + h).min(1.0);
        let mut dn = curves.clone();
        dn[k].visibility = (dn[k].visibility - h).max(0.0);
        let d = (correlation_amplitude(&up, pmean) - correlation_amplitude(&dn, pmean))
            / (up[k].visibility - dn[k].visibility);
        var += (d * sig[k]).powi(2);
    }
    let correlation_fit = chsh_from_visibility(v_joint.min(1.0), finite(var.sqrt()))?;
    Ok(ChshPooling { mean, correlation_fit })
}

fn finite(s: f64) -> Option<f64> {
    s.is_finite().then_some(s)
}

/// Fits `E(x) = a·cos(k·x) + b·sin(k·x)` to the correlation coefficient of
/// the four curves over one period and returns `√(a² + b²)`. Ports `(1,2)`
/// and `(2,1)` enter with negative sign.
fn correlation_amplitude(curves: &[FringeFit], period: f64) -> f64 {
    let n = 720;
    let k = TAU / period;
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..n {
        let x = period * i as f64 / n as f64;
        let r: Vec<f64> = curves.iter().map(|c| c.eval(x).max(0.0)).collect();
        let total: f64 = r.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let e = (r[0] - r[1] - r[2] + r[3]) / total;
        a += e * (k * x).cos();
        b += e * (k * x).sin();
    }
    2.0 * a.hypot(b) / n as f64
}

/// Per-row Poisson resampling of a table.
pub fn resample_table(table: &ProjectionCountTable, seed: u64) -> Result<ProjectionCountTable> {
    let counts: Vec<f64> = table.rows.iter().map(|r| r.n).collect();
    table.with_counts(&crate::estimators::poisson_resample(&counts, seed))
}

/// Sample standard deviation of `stat` over Poisson resamples of `table`.
pub fn bootstrap_table<F>(table: &ProjectionCountTable, n_resamples: usize, seed: u64, stat: F) -> Result<f64>
where
    F: Fn(&ProjectionCountTable) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    let seeds = crate::timetag_sim::derive_seeds(seed, n_resamples);
    let values: Vec<f64> = seeds
        .par_iter()
        .map(|&s| resample_table(table, s).and_then(|t| stat(&t)))
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    if n < 2.0 {
        return Err(Error::domain("bootstrap needs at least two resamples"));
    }
    let mean = values.iter().sum::<f64>() / n;
    Ok((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// Both reconstructions of a table and their fidelities to a target.
#[derive(Clone, Debug)]
pub struct TimebinReport {
    pub linear: DensityMatrix,
    pub physical: DensityMatrix,
    pub fidelity_linear: f64,
    pub fidelity_physical: f64,
    pub pairs_per_setting: f64,
}

pub fn analyze_timebin(table: &ProjectionCountTable, target: &crate::quantum_state::PureState) -> Result<TimebinReport> {
    let (_, pairs) = table.probabilities()?;
    let linear = reconstruct_linear(table)?;
    let physical = project_physical(&linear)?;
    Ok(TimebinReport {
        fidelity_linear: crate::quantum_state::fidelity(&linear, target)?,
        fidelity_physical: crate::quantum_state::fidelity(&physical, target)?,
        linear,
        physical,
        pairs_per_setting: pairs,
    })
}
