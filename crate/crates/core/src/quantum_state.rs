//! Two-qubit states shared by every analysis.
//!
//! The basis order is fixed once, here, and used everywhere:
//!
//! * time-bin: `|11⟩, |12⟩, |21⟩, |22⟩` (first label is the signal photon's
//!   time bin, second the idler's; `|1⟩` early, `|2⟩` late)
//! * frequency-bin: `|ω_s ω_i⟩, |ω_s ω_s⟩, |ω_i ω_i⟩, |ω_i ω_s⟩` where the
//!   first label is the frequency found in spatial mode 1. The two middle
//!   slots are never populated by the sources modelled here.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest anti-Hermitian part tolerated silently at construction.
pub const HERMITICITY_WARN: f64 = 1e-9;

/// Smallest eigenvalue still accepted as physical.
pub const EIGENVALUE_FLOOR: f64 = -1e-9;

/// Trace tolerance for matrices produced by this crate.
pub const TRACE_TOLERANCE: f64 = 1e-9;

/// Trace tolerance applied when computing fidelities. Reference matrices are
/// rounded to four decimals and need not sum to one exactly.
pub const FIDELITY_TRACE_TOLERANCE: f64 = 1e-2;

/// Which encoding a density matrix's basis refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    #[serde(rename = "timebin")]
    TimeBin,
    #[serde(rename = "freqbin")]
    FreqBin,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::TimeBin => f.write_str("timebin"),
            Basis::FreqBin => f.write_str("freqbin"),
        }
    }
}

/// A 4×4 Hermitian operator describing a two-qubit state.
///
/// Construction always symmetrizes to exact Hermiticity. Trace and positivity
/// are not enforced: linear-inversion tomography legitimately produces
/// slightly negative eigenvalues, and those matrices must stay representable.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    elements: Matrix4<Complex64>,
    basis: Basis,
}

impl DensityMatrix {
    pub fn new(elements: Matrix4<Complex64>, basis: Basis) -> Result<Self> {
        if elements.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::validation("density matrix has non-finite entries"));
        }
        let adjoint = elements.adjoint();
        let asymmetry = (elements - adjoint)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if asymmetry > HERMITICITY_WARN {
            log::warn!("symmetrizing density matrix with anti-Hermitian part {asymmetry:.3e}");
        }
        let elements = (elements + adjoint).scale(0.5);
        Ok(DensityMatrix { elements, basis })
    }

    /// Builds from row-major entries.
    pub fn from_rows(rows: [[Complex64; 4]; 4], basis: Basis) -> Result<Self> {
        Self::new(Matrix4::from_fn(|i, j| rows[i][j]), basis)
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn pure(psi: &PureState, basis: Basis) -> Self {
        let v = psi.amplitudes();
        let m = v * v.adjoint();
        // Outer products are Hermitian up to rounding only.
        DensityMatrix {
            elements: (m + m.adjoint()).scale(0.5),
            basis,
        }
    }

    pub fn maximally_mixed(basis: Basis) -> Self {
        DensityMatrix {
            elements: Matrix4::identity().scale(0.25),
            basis,
        }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn elements(&self) -> &Matrix4<Complex64> {
        &self.elements
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.elements[(row, col)]
    }

    pub fn trace(&self) -> f64 {
        self.elements.trace().re
    }

    pub fn diagonal(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.elements[(i, i)].re)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.elements).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2], ev[3]]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_normalized(&self) -> bool {
        (self.trace() - 1.0).abs() <= TRACE_TOLERANCE
    }

    /// Unit trace and no eigenvalue below [`EIGENVALUE_FLOOR`].
    pub fn is_physical(&self) -> bool {
        self.is_normalized() && self.min_eigenvalue() >= EIGENVALUE_FLOOR
    }

    /// Frobenius norm of the difference.
    pub fn distance(&self, other: &DensityMatrix) -> f64 {
        (self.elements - other.elements).norm()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DensityMatrixJson::from(self)).expect("plain numeric data")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DensityMatrixJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

/// Wire form: two 4×4 real arrays plus a basis tag.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityMatrixJson {
    pub basis: Basis,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&DensityMatrix> for DensityMatrixJson {
    fn from(rho: &DensityMatrix) -> Self {
        let part = |f: fn(&Complex64) -> f64| {
            (0..4)
                .map(|i| (0..4).map(|j| f(&rho.elements[(i, j)])).collect())
                .collect()
        };
        DensityMatrixJson {
            basis: rho.basis,
            re: part(|z| z.re),
            im: part(|z| z.im),
        }
    }
}

impl TryFrom<DensityMatrixJson> for DensityMatrix {
    type Error = Error;

    fn try_from(raw: DensityMatrixJson) -> Result<Self> {
        let shape_ok = |m: &Vec<Vec<f64>>| m.len() == 4 && m.iter().all(|r| r.len() == 4);
        if !shape_ok(&raw.re) || !shape_ok(&raw.im) {
            return Err(Error::parse(None, "\"re\" and \"im\" must both be 4x4 arrays"));
        }
        let m = Matrix4::from_fn(|i, j| Complex64::new(raw.re[i][j], raw.im[i][j]));
        DensityMatrix::new(m, raw.basis)
    }
}

/// A normalized two-qubit pure state in the fixed basis order.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amplitudes: Vector4<Complex64>,
}

impl PureState {
    /// Rejects amplitudes whose squared norm differs from one by more than 1e-12.
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        let v = Vector4::from(amplitudes);
        let norm2 = v.norm_squared();
        if (norm2 - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "pure state not normalized (squared norm {norm2})"
            )));
        }
        Ok(PureState { amplitudes: v })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amplitudes: [Complex64; 4]) -> Result<Self> {
        let v = Vector4::from(amplitudes);
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::validation("cannot normalize a zero or non-finite vector"));
        }
        Ok(PureState {
            amplitudes: v.unscale(norm),
        })
    }

    pub fn amplitudes(&self) -> &Vector4<Complex64> {
        &self.amplitudes
    }
}

/// Canonical target states.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BellState {
    /// `(|11⟩ + |22⟩)/√2`
    PhiPlus,
    /// `(|11⟩ − |22⟩)/√2`
    PhiMinus,
    /// `(|12⟩ + |21⟩)/√2`
    PsiPlus,
    /// `(|12⟩ − |21⟩)/√2`
    PsiMinus,
    /// `(|ω_s ω_i⟩ + |ω_i ω_s⟩)/√2` in the frequency-bin order.
    PsiSwapFreq,
}

impl BellState {
    pub fn state(self) -> PureState {
        let h = Complex64::new(1.0 / SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let amps = match self {
            BellState::PhiPlus | BellState::PsiSwapFreq => [h, z, z, h],
            BellState::PhiMinus => [h, z, z, -h],
            BellState::PsiPlus => [z, h, h, z],
            BellState::PsiMinus => [z, h, -h, z],
        };
        PureState { amplitudes: Vector4::from(amps) }
    }

    pub fn basis(self) -> Basis {
        match self {
            BellState::PsiSwapFreq => Basis::FreqBin,
            _ => Basis::TimeBin,
        }
    }
}

impl FromStr for BellState {
    type Err = Error;

    fn from_str(name: &str) -> Result<Self> {
        match name {
            "phi_plus" => Ok(BellState::PhiPlus),
            "phi_minus" => Ok(BellState::PhiMinus),
            "psi_plus" => Ok(BellState::PsiPlus),
            "psi_minus" => Ok(BellState::PsiMinus),
            "psi_swap_freq" => Ok(BellState::PsiSwapFreq),
            other => Err(Error::domain(format!("unknown state name {other:?}"))),
        }
    }
}

/// Looks up a canonical state by name.
pub fn bell_state(name: &str) -> Result<PureState> {
    name.parse::<BellState>().map(BellState::state)
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > FIDELITY_TRACE_TOLERANCE {
        return Err(Error::validation(format!("density matrix trace {tr} is not 1")));
    }
    let v = psi.amplitudes();
    let overlap = (v.adjoint() * rho.elements() * v)[(0, 0)];
    if overlap.im.abs() > 1e-9 {
        return Err(Error::validation(format!(
            "fidelity has imaginary part {:.3e}; matrix not Hermitian",
            overlap.im
        )));
    }
    Ok(overlap.re)
}

/// CHSH value obtained from a two-photon fringe visibility.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub s_value: f64,
    /// Propagated standard deviation, when the visibility carried one.
    pub sigma: Option<f64>,
    pub visibility: f64,
}

impl ChshResult {
    /// Local-realistic bound exceeded.
    pub fn violates_local_bound(&self) -> bool {
        self.s_value > 2.0
    }

    /// Number of standard deviations above 2.
    pub fn violation_sigmas(&self) -> Option<f64> {
        self.sigma.map(|s| (self.s_value - 2.0) / s)
    }
}

/// `S = 2√2·V`.
pub fn chsh_from_visibility(visibility: f64, sigma: Option<f64>) -> Result<ChshResult> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::domain(format!("visibility {visibility} outside [0, 1]")));
    }
    if let Some(s) = sigma {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::domain(format!("visibility sigma {s} must be finite and >= 0")));
        }
    }
    let factor = 2.0 * SQRT_2;
    Ok(ChshResult {
        s_value: factor * visibility,
        sigma: sigma.map(|s| factor * s),
        visibility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::reference_timebin_matrix;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn projector_onto_itself_has_unit_fidelity() {
        let psi = bell_state("phi_plus").unwrap();
        let rho = DensityMatrix::pure(&psi, Basis::TimeBin);
        assert!((fidelity(&rho, &psi).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reference_timebin_matrix_fidelity() {
        // (ρ11 + ρ44)/2 + Re ρ14 evaluated on the reference entries.
        let f = fidelity(&reference_timebin_matrix(), &bell_state("phi_plus").unwrap()).unwrap();
        assert!((f - 0.8884).abs() < 1e-12, "{f}");
    }

    #[test]
    fn maximally_mixed_overlap_is_quarter() {
        let rho = DensityMatrix::maximally_mixed(Basis::TimeBin);
        for name in ["phi_plus", "phi_minus", "psi_plus", "psi_minus"] {
            let f = fidelity(&rho, &bell_state(name).unwrap()).unwrap();
            assert!((f - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn fidelity_rejects_wrong_trace() {
        let m = Matrix4::identity().scale(0.5).map(|x: f64| c(x, 0.0));
        let rho = DensityMatrix::new(m, Basis::TimeBin).unwrap();
        assert!(matches!(
            fidelity(&rho, &bell_state("phi_plus").unwrap()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn construction_symmetrizes() {
        let mut m = Matrix4::<Complex64>::zeros();
        m[(0, 0)] = c(0.5, 0.0);
        m[(3, 3)] = c(0.5, 0.0);
        m[(0, 3)] = c(0.4, 0.1);
        m[(3, 0)] = c(0.2, 0.0);
        let rho = DensityMatrix::new(m, Basis::TimeBin).unwrap();
        let e = rho.elements();
        assert_eq!(e[(0, 3)], e[(3, 0)].conj());
        assert!((e[(0, 3)] - c(0.3, 0.05)).norm() < 1e-15);
    }

    #[test]
    fn chsh_from_reference_visibilities() {
        let s1 = chsh_from_visibility(0.9175, None).unwrap().s_value;
        let s2 = chsh_from_visibility(0.9574, None).unwrap().s_value;
        assert!((s1 - 2.595).abs() < 1e-3, "{s1}");
        assert!((s2 - 2.708).abs() < 1e-3, "{s2}");
        let bound = chsh_from_visibility(1.0 / SQRT_2, None).unwrap().s_value;
        assert!((bound - 2.0).abs() < 1e-15);
    }

    #[test]
    fn chsh_sigma_propagates_linearly() {
        let r = chsh_from_visibility(0.9574, Some(0.0086)).unwrap();
        assert!((r.sigma.unwrap() - 2.0 * SQRT_2 * 0.0086).abs() < 1e-15);
        assert!((r.s_value - 2.0 * SQRT_2 * r.visibility).abs() < 1e-12);
    }

    #[test]
    fn chsh_rejects_out_of_range() {
        assert!(chsh_from_visibility(1.01, None).is_err());
        assert!(chsh_from_visibility(-0.1, None).is_err());
    }

    #[test]
    fn bell_state_lookup() {
        let h = 1.0 / SQRT_2;
        let phi = bell_state("phi_plus").unwrap();
        let expect = [h, 0.0, 0.0, h];
        for (a, e) in phi.amplitudes().iter().zip(expect) {
            assert!((a - c(e, 0.0)).norm() < 1e-15);
        }
        let freq = bell_state("psi_swap_freq").unwrap();
        assert_eq!(freq.amplitudes(), phi.amplitudes());
        assert_eq!(BellState::PsiSwapFreq.basis(), Basis::FreqBin);
        assert!(matches!(bell_state("ghz"), Err(Error::Domain(_))));
    }

    #[test]
    fn json_round_trip_and_tag() {
        let rho = reference_timebin_matrix();
        let text = rho.to_json();
        assert!(text.contains("\"timebin\""));
        let back = DensityMatrix::from_json(&text).unwrap();
        assert!(back.distance(&rho) < 1e-15);
        assert!(DensityMatrix::from_json(r#"{"basis":"timebin","re":[[1]],"im":[[0]]}"#).is_err());
        assert!(DensityMatrix::from_json(r#"{"basis":"qutrit","re":[],"im":[]}"#).is_err());
    }

    #[test]
    fn pure_state_validation() {
        assert!(PureState::new([c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).is_err());
        assert!(PureState::normalized([c(0.0, 0.0); 4]).is_err());
        let p = PureState::normalized([c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!((p.amplitudes().norm_squared() - 1.0).abs() < 1e-15);
    }

    fn random_state() -> impl Strategy<Value = PureState> {
        prop::array::uniform8(-1.0f64..1.0).prop_filter_map("nonzero", |x| {
            PureState::normalized(std::array::from_fn(|k| c(x[2 * k], x[2 * k + 1]))).ok()
        })
    }

    fn random_physical() -> impl Strategy<Value = DensityMatrix> {
        (prop::collection::vec(random_state(), 4), prop::array::uniform4(0.0f64..1.0)).prop_map(
            |(states, w)| {
                let total: f64 = w.iter().sum::<f64>() + 1e-12;
                let m = states
                    .iter()
                    .zip(w)
                    .fold(Matrix4::zeros(), |acc, (s, wk)| {
                        acc + DensityMatrix::pure(s, Basis::TimeBin).elements().scale(wk / total)
                    });
                DensityMatrix::new(m, Basis::TimeBin).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn fidelity_bounded(rho in random_physical(), psi in random_state()) {
            let f = fidelity(&rho, &psi).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
        }

        #[test]
        fn fidelity_ignores_orthogonal_perturbation(
            rho in random_physical(),
            psi in random_state(),
            x in prop::array::uniform32(-1.0f64..1.0),
            eps in 0.0f64..0.1,
        ) {
            // H = QXQ (traceless within the ψ⊥ block) + |ψ⟩⟨φ| + |φ⟩⟨ψ| with φ ⊥ ψ.
            let v = *psi.amplitudes();
            let proj = v * v.adjoint();
            let q = Matrix4::<Complex64>::identity() - proj;
            let raw = Matrix4::from_fn(|i, j| c(x[4 * i + j], x[16 + 4 * i + j]));
            let herm = (raw + raw.adjoint()).scale(0.5);
            let mut block = q * herm * q;
            let t = block.trace();
            block -= q * (t / c(3.0, 0.0));
            let phi = q * Vector4::from_fn(|i, _| c(x[i], x[i + 4]));
            let cross = v * phi.adjoint() + phi * v.adjoint();
            let h = block + cross;
            let perturbed = DensityMatrix::new(rho.elements() + h.scale(eps), Basis::TimeBin).unwrap();
            let f0 = fidelity(&rho, &psi).unwrap();
            let f1 = fidelity(&perturbed, &psi).unwrap();
            prop_assert!((f0 - f1).abs() < 1e-12);
        }

        #[test]
        fn chsh_monotonic_and_threshold(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let sl = chsh_from_visibility(lo, None).unwrap();
            let sh = chsh_from_visibility(hi, None).unwrap();
            prop_assert!(sl.s_value < sh.s_value);
            prop_assert_eq!(sh.violates_local_bound(), hi > 1.0 / SQRT_2);
        }
    }
}
