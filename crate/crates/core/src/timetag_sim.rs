//! Monte-Carlo time tags for a CW-pumped pair source, a TDC-style
//! coincidence histogrammer, and sampling of time-bin measurement outcomes.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector4;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::counting_model::SourceModel;
use crate::error::{Error, Result};
use crate::quantum_state::DensityMatrix;

/// Single-photon detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Hz
    pub dark_rate: f64,
    /// Gaussian timing jitter, standard deviation in seconds.
    pub jitter_sigma: f64,
    /// Non-paralyzable dead time in seconds.
    pub dead_time: f64,
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::domain(format!("detector efficiency {} outside [0, 1]", self.efficiency)));
        }
        for (name, v) in [
            ("dark_rate", self.dark_rate),
            ("jitter_sigma", self.jitter_sigma),
            ("dead_time", self.dead_time),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// One detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventRecord {
    pub channel: u16,
    pub timestamp_ps: i64,
}

/// Events of a two-detector CW run. Channel 1 is signal, channel 2 idler.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CwEvents {
    pub signal: Vec<i64>,
    pub idler: Vec<i64>,
}

pub const SIGNAL_CHANNEL: u16 = 1;
pub const IDLER_CHANNEL: u16 = 2;

impl CwEvents {
    /// Both streams merged and sorted by timestamp (channel breaks ties).
    pub fn records(&self) -> Vec<EventRecord> {
        let mut out: Vec<EventRecord> = self
            .signal
            .iter()
            .map(|&t| EventRecord {
                channel: SIGNAL_CHANNEL,
                timestamp_ps: t,
            })
            .chain(self.idler.iter().map(|&t| EventRecord {
                channel: IDLER_CHANNEL,
                timestamp_ps: t,
            }))
            .collect();
        out.sort_by_key(|e| (e.timestamp_ps, e.channel));
        out
    }

    /// Splits merged records back into the two channels.
    pub fn from_records(records: &[EventRecord]) -> Result<Self> {
        let mut ev = CwEvents {
            signal: Vec::new(),
            idler: Vec::new(),
        };
        for r in records {
            match r.channel {
                SIGNAL_CHANNEL => ev.signal.push(r.timestamp_ps),
                IDLER_CHANNEL => ev.idler.push(r.timestamp_ps),
                c => return Err(Error::validation(format!("unexpected channel {c}"))),
            }
        }
        Ok(ev)
    }
}

/// Writes `channel,timestamp_ps` CSV.
pub fn events_to_csv(records: &[EventRecord]) -> String {
    let mut out = String::with_capacity(16 * records.len() + 24);
    out.push_str("channel,timestamp_ps\n");
    for r in records {
        out.push_str(&format!("{},{}\n", r.channel, r.timestamp_ps));
    }
    out
}

pub fn events_from_csv(text: &str) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["channel", "timestamp_ps"] {
        return Err(Error::parse(Some(1), "expected header channel,timestamp_ps"));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<EventRecord>() {
        out.push(rec?);
    }
    Ok(out)
}

/// Simulates a CW run of `duration` seconds at pump power `power_mw`.
///
/// Pairs are emitted at `model.pair_rate(P)`; each photon survives the optical
/// path (`η_s`, `η_i`) and then its detector's efficiency. Noise photons arrive
/// at `noise_coeff·P·η^r` and are thinned by the detector efficiency. Dark
/// counts come from the detectors, so the model's own dark rates are ignored.
/// Timestamps are integer picoseconds; dead time is enforced last.
pub fn simulate_cw(
    model: &SourceModel,
    detectors: (&DetectorModel, &DetectorModel),
    power_mw: f64,
    duration: f64,
    seed: u64,
) -> Result<CwEvents> {
    model.validate()?;
    detectors.0.validate()?;
    detectors.1.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::domain(format!("duration {duration} s must be > 0")));
    }
    if !(power_mw >= 0.0 && power_mw.is_finite()) {
        return Err(Error::domain(format!("pump power {power_mw} mW must be >= 0")));
    }
    let (ds, di) = detectors;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = model.pair_rate(power_mw);
    let ps = model.eta_s * ds.efficiency;
    let pi = model.eta_i * di.efficiency;
    let (noise_s, noise_i) = model.noise_rates(power_mw);
    let t_end = duration * 1e12;

    let both = poisson_times(&mut rng, r * ps * pi, t_end);
    let signal_only = poisson_times(&mut rng, r * ps * (1.0 - pi), t_end);
    let idler_only = poisson_times(&mut rng, r * (1.0 - ps) * pi, t_end);
    let noise_s = poisson_times(&mut rng, noise_s * model.eta_s_r * ds.efficiency, t_end);
    let noise_i = poisson_times(&mut rng, noise_i * model.eta_i_r * di.efficiency, t_end);
    let dark_s = poisson_times(&mut rng, ds.dark_rate, t_end);
    let dark_i = poisson_times(&mut rng, di.dark_rate, t_end);

    let mut jit_s = Jitter::new(ds.jitter_sigma * 1e12)?;
    let mut jit_i = Jitter::new(di.jitter_sigma * 1e12)?;
    let mut sig = Vec::with_capacity(both.len() + signal_only.len() + noise_s.len() + dark_s.len());
    let mut idl = Vec::with_capacity(both.len() + idler_only.len() + noise_i.len() + dark_i.len());
    for &t in &both {
        sig.push(jit_s.apply(&mut rng, t));
        idl.push(jit_i.apply(&mut rng, t));
    }
    for &t in signal_only.iter().chain(&noise_s) {
        sig.push(jit_s.apply(&mut rng, t));
    }
    for &t in idler_only.iter().chain(&noise_i) {
        idl.push(jit_i.apply(&mut rng, t));
    }
    sig.extend(dark_s.iter().map(|t| t.round() as i64));
    idl.extend(dark_i.iter().map(|t| t.round() as i64));
    sig.sort_unstable();
    idl.sort_unstable();
    let dead_s = (ds.dead_time * 1e12).round() as i64;
    let dead_i = (di.dead_time * 1e12).round() as i64;
    Ok(CwEvents {
        signal: enforce_dead_time(&sig, dead_s),
        idler: enforce_dead_time(&idl, dead_i),
    })
}

struct Jitter(Option<Normal<f64>>);

impl Jitter {
    fn new(sigma_ps: f64) -> Result<Self> {
        if sigma_ps == 0.0 {
            return Ok(Jitter(None));
        }
        Normal::new(0.0, sigma_ps)
            .map(|n| Jitter(Some(n)))
            .map_err(|e| Error::domain(e.to_string()))
    }

    fn apply(&mut self, rng: &mut ChaCha8Rng, t: f64) -> i64 {
        let dt = self.0.as_ref().map_or(0.0, |n| n.sample(rng));
        (t + dt).round() as i64
    }
}

/// Arrival times (ps) of a homogeneous Poisson process on `[0, t_end)`.
fn poisson_times(rng: &mut ChaCha8Rng, rate_hz: f64, t_end_ps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(rate_hz > 0.0) {
        return out;
    }
    let gap = Exp::new(rate_hz * 1e-12).expect("positive rate");
    let mut t = gap.sample(rng);
    while t < t_end_ps {
        out.push(t);
        t += gap.sample(rng);
    }
    out
}

/// Drops every event arriving less than `dead` after the last kept one.
pub fn enforce_dead_time(sorted: &[i64], dead: i64) -> Vec<i64> {
    let mut out = Vec::with_capacity(sorted.len());
    let mut last: Option<i64> = None;
    for &t in sorted {
        if last.is_none_or(|l| t - l >= dead) {
            out.push(t);
            last = Some(t);
        }
    }
    out
}

/// Histogram of `t_b − t_a` delays. Bin `k` covers
/// `[offset + k·bin_width, offset + (k+1)·bin_width)` in picoseconds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width: i64,
    pub offset: i64,
    pub counts: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn span(&self) -> i64 {
        self.bin_width * self.counts.len() as i64
    }

    pub fn bin_start(&self, k: usize) -> i64 {
        self.offset + k as i64 * self.bin_width
    }

    /// Writes `delay_ps,count` CSV with the left edge of every bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delay_ps,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.bin_start(k), c));
        }
        out
    }

    /// Parses `delay_ps,count` CSV; delays must be evenly spaced and increasing.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["delay_ps", "count"] {
            return Err(Error::parse(Some(1), "expected header delay_ps,count"));
        }
        let mut delays = Vec::new();
        let mut counts = Vec::new();
        for rec in rdr.deserialize::<(i64, u64)>() {
            let (d, c) = rec?;
            delays.push(d);
            counts.push(c);
        }
        if delays.len() < 2 {
            return Err(Error::parse(None, "histogram needs at least two bins"));
        }
        let width = delays[1].checked_sub(delays[0]).filter(|w| *w > 0);
        let Some(width) = width else {
            return Err(Error::parse(Some(3), "delays must increase"));
        };
        for (k, pair) in delays.windows(2).enumerate() {
            if pair[1].checked_sub(pair[0]) != Some(width) {
                return Err(Error::parse(Some(k + 3), "delays must be evenly spaced"));
            }
        }
        Ok(CoincidenceHistogram {
            bin_width: width,
            offset: delays[0],
            counts,
        })
    }
}

fn check_sorted(ts: &[i64], name: &str) -> Result<()> {
    if let Some(i) = ts.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::validation(format!("{name} stream is not time-sorted at index {}", i + 1)));
    }
    Ok(())
}

/// Histograms all delays `t_b − t_a` within `[−span/2, span/2)` in one merge
/// pass over the two sorted streams.
pub fn histogram_coincidences(a: &[i64], b: &[i64], bin_width: i64, span: i64) -> Result<CoincidenceHistogram> {
    if bin_width <= 0 || span <= 0 || span % (2 * bin_width) != 0 {
        return Err(Error::domain(format!(
            "span ({span} ps) must be a positive even multiple of the bin width ({bin_width} ps)"
        )));
    }
    check_sorted(a, "first")?;
    check_sorted(b, "second")?;
    let offset = -span / 2;
    let nbins = (span / bin_width) as usize;
    let mut counts = vec![0u64; nbins];
    let mut lo = 0usize;
    for &ta in a {
        let start = ta + offset;
        while lo < b.len() && b[lo] < start {
            lo += 1;
        }
        for &tb in &b[lo..] {
            let d = tb - ta - offset;
            if d >= span {
                break;
            }
            counts[(d / bin_width) as usize] += 1;
        }
    }
    Ok(CoincidenceHistogram {
        bin_width,
        offset,
        counts,
    })
}

/// Coincidences in the peak window and mean accidentals per offset window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowCounts {
    pub c_c: f64,
    pub a_cc: f64,
    /// Summed counts over all offset windows.
    pub a_total: u64,
    pub n_offsets: usize,
}

/// Sums the histogram over `[center − window/2, center + window/2)` and
/// averages the same-width windows displaced by each of `accidental_offsets`.
/// All windows must sit on bin edges inside the histogram, and no offset
/// window may overlap the peak window.
pub fn window_counts(
    hist: &CoincidenceHistogram,
    window: i64,
    center: i64,
    accidental_offsets: &[i64],
) -> Result<WindowCounts> {
    if window <= 0 || window % hist.bin_width != 0 {
        return Err(Error::domain(format!(
            "window ({window} ps) must be a positive multiple of the bin width ({} ps)",
            hist.bin_width
        )));
    }
    if accidental_offsets.is_empty() {
        return Err(Error::domain("at least one accidental window is required"));
    }
    let sum_from = |lo: i64| -> Result<u64> {
        let rel = lo - hist.offset;
        if rel % hist.bin_width != 0 {
            return Err(Error::domain(format!("window edge {lo} ps is not on a bin edge")));
        }
        if rel < 0 || rel + window > hist.span() {
            return Err(Error::domain(format!("window starting at {lo} ps leaves the histogram")));
        }
        let k = (rel / hist.bin_width) as usize;
        let n = (window / hist.bin_width) as usize;
        Ok(hist.counts[k..k + n].iter().sum())
    };
    if let Some(off) = accidental_offsets.iter().find(|o| o.abs() < window) {
        return Err(Error::validation(format!(
            "accidental window at offset {off} ps overlaps the peak window"
        )));
    }
    let peak_lo = center - window / 2;
    let c_c = sum_from(peak_lo)?;
    let mut a_total = 0;
    for &off in accidental_offsets {
        a_total += sum_from(peak_lo + off)?;
    }
    Ok(WindowCounts {
        c_c: c_c as f64,
        a_cc: a_total as f64 / accidental_offsets.len() as f64,
        a_total,
        n_offsets: accidental_offsets.len(),
    })
}

/// Pump pulse pattern for time-bin operation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    /// Hz
    pub rep_rate: f64,
    /// ps between the two pulses of a pair
    pub pulse_interval: f64,
    /// ps
    pub pulse_width: f64,
    /// dB, when characterized
    pub extinction_ratio: Option<f64>,
}

impl PulseTrain {
    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate > 0.0 && self.pulse_interval > 0.0 && self.pulse_width > 0.0) {
            return Err(Error::domain("pulse train parameters must be > 0"));
        }
        if !(self.pulse_interval * 1e-12 < 1.0 / self.rep_rate) {
            return Err(Error::domain("pulse interval must be shorter than the repetition period"));
        }
        if !(self.pulse_width < self.pulse_interval) {
            return Err(Error::domain("pulse width must be shorter than the pulse interval"));
        }
        Ok(())
    }
}

/// One cell of the time-bin outcome space. Ports and slots are 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outcome {
    pub port_a: u8,
    pub port_b: u8,
    pub slot_a: u8,
    pub slot_b: u8,
}

impl Outcome {
    pub fn all() -> impl Iterator<Item = Outcome> {
        (1..=2).flat_map(|port_a| {
            (1..=2).flat_map(move |port_b| {
                (1..=3).flat_map(move |slot_a| {
                    (1..=3).map(move |slot_b| Outcome {
                        port_a,
                        port_b,
                        slot_a,
                        slot_b,
                    })
                })
            })
        })
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.port_a, self.port_b, self.slot_a, self.slot_b)
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::parse(None, format!("outcome key {s:?} must look like (1,2,2,3)")))?;
        let parts: Vec<u8> = inner
            .split(',')
            .map(|p| p.trim().parse::<u8>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(None, format!("outcome key {s:?}: {e}")))?;
        let [port_a, port_b, slot_a, slot_b] = parts[..] else {
            return Err(Error::parse(None, format!("outcome key {s:?} needs four fields")));
        };
        if !(1..=2).contains(&port_a) || !(1..=2).contains(&port_b) || !(1..=3).contains(&slot_a) || !(1..=3).contains(&slot_b) {
            return Err(Error::parse(None, format!("outcome key {s:?} out of range")));
        }
        Ok(Outcome {
            port_a,
            port_b,
            slot_a,
            slot_b,
        })
    }
}

/// Single-photon measurement operator `weight·|v⟩⟨v|` for a port/slot.
///
/// Slot 1 projects on the early bin, slot 3 on the late bin, each with
/// weight 1/4. Slot 2 projects on `(|1⟩ + s·e^{−iθ}|2⟩)/√2` with weight 1/2,
/// where `s = +1` at port 1 and `−1` at port 2. Summed over both ports and
/// all slots the operators give the identity.
pub fn slot_operator(port: u8, slot: u8, theta: f64) -> (f64, [Complex64; 2]) {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    match slot {
        1 => (0.25, [one, zero]),
        3 => (0.25, [zero, one]),
        _ => {
            let s = if port == 1 { 1.0 } else { -1.0 };
            (
                0.5,
                [
                    Complex64::new(FRAC_1_SQRT_2, 0.0),
                    Complex64::from_polar(s * FRAC_1_SQRT_2, -theta),
                ],
            )
        }
    }
}

/// `Tr(ρ·M_A⊗M_B)` for every outcome, with analyzer phases `alpha`, `beta`.
pub fn outcome_probabilities(rho: &DensityMatrix, alpha: f64, beta: f64) -> BTreeMap<Outcome, f64> {
    Outcome::all()
        .map(|o| {
            let (wa, va) = slot_operator(o.port_a, o.slot_a, alpha);
            let (wb, vb) = slot_operator(o.port_b, o.slot_b, beta);
            let v = Vector4::new(va[0] * vb[0], va[0] * vb[1], va[1] * vb[0], va[1] * vb[1]);
            let p = (v.adjoint() * rho.elements() * v)[(0, 0)].re;
            (o, wa * wb * p)
        })
        .collect()
}

/// Sampled counts for one analyzer setting.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeTable {
    pub alpha: f64,
    pub beta: f64,
    pub n_pairs: u64,
    /// Pairs that reached no outcome cell.
    pub lost: u64,
    pub counts: BTreeMap<Outcome, u64>,
}

#[derive(Serialize, Deserialize)]
struct OutcomeTableJson {
    alpha: f64,
    beta: f64,
    n_pairs: u64,
    lost: u64,
    counts: BTreeMap<String, u64>,
}

impl OutcomeTable {
    pub fn get(&self, o: Outcome) -> u64 {
        self.counts.get(&o).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        let j = OutcomeTableJson {
            alpha: self.alpha,
            beta: self.beta,
            n_pairs: self.n_pairs,
            lost: self.lost,
            counts: self.counts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        };
        serde_json::to_string_pretty(&j).expect("outcome table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: OutcomeTableJson = serde_json::from_str(text)?;
        let mut counts = BTreeMap::new();
        for (k, v) in j.counts {
            let o: Outcome = k.parse()?;
            if counts.insert(o, v).is_some() {
                return Err(Error::parse(None, format!("duplicate outcome {o}")));
            }
        }
        Ok(OutcomeTable {
            alpha: j.alpha,
            beta: j.beta,
            n_pairs: j.n_pairs,
            lost: j.lost,
            counts,
        })
    }
}

/// Draws `n_pairs` pairs from the outcome distribution of `rho` and adds
/// Poisson background with mean `background` counts in every cell.
pub fn sample_timebin_outcomes(
    rho: &DensityMatrix,
    alpha: f64,
    beta: f64,
    n_pairs: u64,
    background: f64,
    seed: u64,
) -> Result<OutcomeTable> {
    if !rho.is_physical() {
        return Err(Error::validation("outcome sampling needs a physical density matrix"));
    }
    if !(background >= 0.0 && background.is_finite()) {
        return Err(Error::domain("background must be finite and >= 0"));
    }
    let probs = outcome_probabilities(rho, alpha, beta);
    let total: f64 = probs.values().sum();
    if total > 1.0 + 1e-9 || probs.values().any(|&p| p < -1e-9) {
        return Err(Error::validation(format!(
            "outcome probabilities inconsistent (sum {total})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = n_pairs;
    let mut mass_left = 1.0f64;
    let mut counts = BTreeMap::new();
    for (o, p) in probs {
        let p = p.max(0.0);
        let k = if remaining == 0 || mass_left <= 0.0 {
            0
        } else {
            let q = (p / mass_left).clamp(0.0, 1.0);
            Binomial::new(remaining, q)
                .map_err(|e| Error::domain(e.to_string()))?
                .sample(&mut rng)
        };
        remaining -= k;
        mass_left -= p;
        let bg = if background > 0.0 {
            Poisson::new(background).map_err(|e| Error::domain(e.to_string()))?.sample(&mut rng) as u64
        } else {
            0
        };
        counts.insert(o, k + bg);
    }
    Ok(OutcomeTable {
        alpha,
        beta,
        n_pairs,
        lost: remaining,
        counts,
    })
}

/// Uniform random `u64` seeds derived from a master seed.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.random()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum_state::{BellState, Basis};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn detector(eff: f64, dark: f64, jitter: f64, dead: f64) -> DetectorModel {
        DetectorModel {
            efficiency: eff,
            dark_rate: dark,
            jitter_sigma: jitter,
            dead_time: dead,
        }
    }

    fn source() -> SourceModel {
        SourceModel {
            pair_coeff: 7.0e5,
            noise_coeff_s: 1.7e4,
            noise_coeff_i: 1.7e4,
            eta_s: 0.4,
            eta_i: 0.37,
            eta_s_r: 0.4,
            eta_i_r: 0.37,
            dark_s: 0.0,
            dark_i: 0.0,
        }
    }

    #[test]
    fn dark_only_count() {
        let d = detector(0.7, 150.0, 40e-12, 30e-9);
        let ev = simulate_cw(&source(), (&d, &d), 0.0, 10.0, 7).unwrap();
        let n = ev.signal.len() as f64;
        assert!((n - 1500.0).abs() < 3.0 * 1500f64.sqrt(), "{n}");
    }

    #[test]
    fn zero_efficiency_leaves_only_darks() {
        let d = detector(0.0, 0.0, 40e-12, 30e-9);
        let ev = simulate_cw(&source(), (&d, &d), 1.0, 1.0, 1).unwrap();
        assert!(ev.signal.is_empty() && ev.idler.is_empty());
    }

    #[test]
    fn deterministic_under_seed() {
        let d = detector(0.7, 150.0, 40e-12, 30e-9);
        let a = simulate_cw(&source(), (&d, &d), 0.1, 0.5, 42).unwrap();
        let b = simulate_cw(&source(), (&d, &d), 0.1, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_cw(&source(), (&d, &d), 0.1, 0.5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn identical_streams_spike_at_zero() {
        let ts: Vec<i64> = (0..1000).map(|k| k * 1_000_000).collect();
        let h = histogram_coincidences(&ts, &ts, 10, 2000).unwrap();
        assert_eq!(h.total(), 1000);
        let zero_bin = (-h.offset / h.bin_width) as usize;
        assert_eq!(h.counts[zero_bin], 1000);
    }

    #[test]
    fn unsorted_input_rejected() {
        assert!(matches!(
            histogram_coincidences(&[5, 3], &[1, 2], 1, 10),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn flat_accidental_floor() {
        let d = detector(1.0, 0.0, 0.0, 0.0);
        let noise = SourceModel {
            pair_coeff: 0.0,
            noise_coeff_s: 2e5,
            noise_coeff_i: 3e5,
            eta_s: 1.0,
            eta_i: 1.0,
            eta_s_r: 1.0,
            eta_i_r: 1.0,
            dark_s: 0.0,
            dark_i: 0.0,
        };
        let t = 2.0;
        let ev = simulate_cw(&noise, (&d, &d), 1.0, t, 3).unwrap();
        let h = histogram_coincidences(&ev.signal, &ev.idler, 1000, 200_000).unwrap();
        let expected = 2e5 * 3e5 * 1e-9 * t;
        let mean = h.total() as f64 / h.counts.len() as f64;
        let sigma = (expected / h.counts.len() as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * sigma, "{mean} vs {expected}");
        let w = window_counts(&h, 10_000, 0, &[50_000, -50_000, 70_000]).unwrap();
        assert!((w.c_c / w.a_cc - 1.0).abs() < 0.1);
    }

    #[test]
    fn jitter_peak_width() {
        let sigma = 100e-12 / 2.0;
        let d = detector(1.0, 0.0, sigma, 0.0);
        let pairs = SourceModel {
            pair_coeff: 1e5,
            noise_coeff_s: 0.0,
            noise_coeff_i: 0.0,
            eta_s: 1.0,
            eta_i: 1.0,
            eta_s_r: 0.0,
            eta_i_r: 0.0,
            dark_s: 0.0,
            dark_i: 0.0,
        };
        let ev = simulate_cw(&pairs, (&d, &d), 1.0, 1.0, 11).unwrap();
        // ±500 ps keeps the accidental floor's share of the variance below 0.2%
        let h = histogram_coincidences(&ev.signal, &ev.idler, 1, 1000).unwrap();
        let n = h.total() as f64;
        let var = h
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let x = h.bin_start(k) as f64 + 0.5;
                c as f64 * x * x
            })
            .sum::<f64>()
            / n;
        let expected = 2.0 * (sigma * 1e12).powi(2);
        assert!((var / expected - 1.0).abs() < 0.02, "{var} vs {expected}");
    }

    #[test]
    fn delta_peak_has_no_accidentals() {
        let mut h = CoincidenceHistogram {
            bin_width: 100,
            offset: -5000,
            counts: vec![0; 100],
        };
        h.counts[50] = 42;
        let w = window_counts(&h, 300, 50, &[1000, -1500]).unwrap();
        assert_eq!(w.c_c, 42.0);
        assert_eq!(w.a_cc, 0.0);
        assert!(matches!(
            crate::counting_model::car(w.c_c, w.a_cc),
            Err(Error::ZeroAccidentals)
        ));
    }

    #[test]
    fn overlapping_windows_rejected() {
        let h = CoincidenceHistogram {
            bin_width: 100,
            offset: -5000,
            counts: vec![1; 100],
        };
        assert!(matches!(window_counts(&h, 300, 0, &[200]), Err(Error::Validation(_))));
        assert!(window_counts(&h, 300, 50, &[4900]).is_err());
        assert!(window_counts(&h, 250, 0, &[1000]).is_err());
    }

    #[test]
    fn histogram_csv_round_trip() {
        let h = CoincidenceHistogram {
            bin_width: 10,
            offset: -30,
            counts: vec![1, 5, 9, 2, 0, 3],
        };
        assert_eq!(CoincidenceHistogram::from_csv(&h.to_csv()).unwrap(), h);
        assert!(CoincidenceHistogram::from_csv("delay_ps,count\n0,1\n10,2\n25,3\n").is_err());
    }

    #[test]
    fn events_csv_round_trip() {
        let ev = CwEvents {
            signal: vec![3, 10, 400],
            idler: vec![3, 99],
        };
        let recs = ev.records();
        let back = events_from_csv(&events_to_csv(&recs)).unwrap();
        assert_eq!(CwEvents::from_records(&back).unwrap(), ev);
    }

    fn phi_plus() -> DensityMatrix {
        DensityMatrix::pure(&BellState::PhiPlus.state(), Basis::TimeBin)
    }

    #[test]
    fn operators_are_complete() {
        for rho in [phi_plus(), DensityMatrix::maximally_mixed(Basis::TimeBin)] {
            for (a, b) in [(0.0, 0.0), (0.3, -1.2)] {
                let total: f64 = outcome_probabilities(&rho, a, b).values().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn franson_fringe_signs() {
        let p = outcome_probabilities(&phi_plus(), 0.0, 0.0);
        let at = |pa, pb, sa, sb| {
            p[&Outcome {
                port_a: pa,
                port_b: pb,
                slot_a: sa,
                slot_b: sb,
            }]
        };
        assert!((at(1, 1, 2, 2) - 0.25 * 0.5).abs() < 1e-12);
        assert!(at(1, 2, 2, 2).abs() < 1e-12);
        assert!(at(1, 1, 1, 3).abs() < 1e-15);
        // 11 against DD at one port pair
        assert!((at(1, 1, 1, 1) / at(1, 1, 2, 2) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn marginals_match_reduced_state() {
        let rho = phi_plus();
        let p = outcome_probabilities(&rho, 0.4, 1.1);
        // reduced state of Φ⁺ is I/2: each of A's six cells gets weight·½ summed over B
        for pa in 1..=2u8 {
            for sa in 1..=3u8 {
                let m: f64 = p
                    .iter()
                    .filter(|(o, _)| o.port_a == pa && o.slot_a == sa)
                    .map(|(_, v)| v)
                    .sum();
                let (w, _) = slot_operator(pa, sa, 0.4);
                assert!((m - w * 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_conserves_pairs() {
        let a = sample_timebin_outcomes(&phi_plus(), 0.2, 0.1, 100_000, 0.0, 5).unwrap();
        let b = sample_timebin_outcomes(&phi_plus(), 0.2, 0.1, 100_000, 0.0, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts.values().sum::<u64>() + a.lost, 100_000);
        assert_eq!(a.lost, 0);
        let back = OutcomeTable::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    fn middle_visibility(background: f64, seed: u64) -> f64 {
        let n = 400_000;
        let t = sample_timebin_outcomes(&phi_plus(), 0.0, 0.0, n, background, seed).unwrap();
        let u = sample_timebin_outcomes(&phi_plus(), PI / 2.0, PI / 2.0, n, background, seed + 1).unwrap();
        let o = Outcome {
            port_a: 1,
            port_b: 1,
            slot_a: 2,
            slot_b: 2,
        };
        let (max, min) = (t.get(o) as f64, u.get(o) as f64);
        (max - min) / (max + min)
    }

    #[test]
    fn sampled_visibility_drops_with_background() {
        let v0 = middle_visibility(0.0, 1);
        assert!(v0 > 0.999, "{v0}");
        let v1 = middle_visibility(2000.0, 1);
        let v2 = middle_visibility(10000.0, 1);
        assert!(v0 > v1 && v1 > v2, "{v0} {v1} {v2}");
    }

    #[test]
    fn outcome_key_parsing() {
        assert!("(1,2,3,1)".parse::<Outcome>().is_ok());
        assert!("(3,2,3,1)".parse::<Outcome>().is_err());
        assert!("1,2,3,1".parse::<Outcome>().is_err());
        assert!("(1,2,3)".parse::<Outcome>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn dead_time_never_violated(seed in any::<u64>(), dead_ns in 0.0f64..100.0) {
            let d = detector(0.8, 1e4, 50e-12, dead_ns * 1e-9);
            let ev = simulate_cw(&source(), (&d, &d), 0.8, 0.05, seed).unwrap();
            let dead = (dead_ns * 1e3).round() as i64;
            for s in [&ev.signal, &ev.idler] {
                prop_assert!(s.windows(2).all(|w| w[1] - w[0] >= dead));
            }
        }

        #[test]
        fn histogram_matches_brute_force(
            mut a in proptest::collection::vec(-5000i64..5000, 0..60),
            mut b in proptest::collection::vec(-5000i64..5000, 0..60),
            bw in 1i64..50,
            half_bins in 1i64..40,
        ) {
            a.sort();
            b.sort();
            let span = 2 * half_bins * bw;
            let h = histogram_coincidences(&a, &b, bw, span).unwrap();
            let mut brute = vec![0u64; (span / bw) as usize];
            for &x in &a {
                for &y in &b {
                    let d = y - x + span / 2;
                    if (0..span).contains(&d) {
                        brute[(d / bw) as usize] += 1;
                    }
                }
            }
            prop_assert_eq!(h.counts, brute);
        }
    }
}
