//! `paircraft` command-line front end.
//!
//! Exit codes: 0 success, 1 analysis or validation failure, 2 usage error.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use paircraft::config::RunConfig;
use paircraft::counting_model::{car, fit_power_sweep, invert_rates, CountPrediction, NoiseTerms};
use paircraft::estimators::{
    bootstrap_beating, bootstrap_fringe, correlation_coefficient, fit_beating, fit_cosine, FringeFit,
    DEFAULT_RESAMPLES,
};
use paircraft::formats::{self, BEATING_HEADER, FRANSON_HEADER, FRINGE_HEADER, POWER_SWEEP_HEADER};
use paircraft::quantum_state::{fidelity, BellState, DensityMatrix, DensityMatrixJson};
use paircraft::reproduce::{self, CAR_OFFSET_START_PS, CAR_OFFSET_WINDOWS};
use paircraft::spectral_model::{
    antibunching_phase, apply_umzi, beating_scan, build_cw_state, fringe_scan, scan_to_csv, span_covering,
    Detection, FilterSpec, SpectralState, TemporalFilter, UmziConfig,
};
use paircraft::timetag_sim::{
    derive_seeds, events_from_csv, events_to_csv, histogram_coincidences, sample_timebin_outcomes, simulate_cw,
    window_counts, CoincidenceHistogram, CwEvents,
};
use paircraft::tomography::{
    analyze_timebin, bootstrap_table, chsh_from_fringes, freqbin_density, project_physical, reconstruct_linear,
    table_from_outcomes, Analyzer, FreqBinParams, ProjectionCountTable,
};
use paircraft::{fixtures, Error};

#[derive(Parser)]
#[command(name = "paircraft", version, about = "Simulate and analyze entangled photon-pair experiments")]
struct Cli {
    /// Flat `key = value` run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic detector data.
    #[command(subcommand)]
    Simulate(Simulate),
    /// Fit and reduce measured or simulated data.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Reconstruct two-photon density matrices.
    #[command(subcommand)]
    Tomo(Tomo),
    /// Evaluate the spectral engine over a parameter range.
    #[command(subcommand)]
    Scan(Scan),
    /// Run the acceptance pipeline on the bundled data.
    #[command(subcommand)]
    Reproduce(Reproduce),
}

#[derive(Args)]
struct Output {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SeedArg {
    /// Overrides PAIRCRAFT_SEED and the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Simulate {
    /// Time tags of the calibrated CW source on the configured channels.
    Cw {
        /// Pump power, mW.
        #[arg(long)]
        power: f64,
        /// Integration time, s.
        #[arg(long)]
        duration: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        output: Output,
    },
    /// Time-bin outcome counts at the four analyzer settings.
    Timebin {
        /// Density matrix JSON; defaults to the projected reference state.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Pairs per analyzer setting.
        #[arg(long)]
        pairs: Option<u64>,
        /// Mean background counts per outcome cell.
        #[arg(long, default_value_t = 0.0)]
        background: f64,
        /// Also write the derived projection-count table (JSON).
        #[arg(long)]
        table_out: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum Analyze {
    /// Coincidence histogram, window counts and CAR.
    Car {
        /// Event CSV (`channel,timestamp_ps`).
        #[arg(long, conflicts_with = "histogram", required_unless_present = "histogram")]
        events: Option<PathBuf>,
        /// Histogram CSV (`delay_ps,count`).
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// Histogram bin width, ps.
        #[arg(long, default_value_t = 10)]
        bin_ps: i64,
        /// Accidental windows on each side of the peak.
        #[arg(long, default_value_t = CAR_OFFSET_WINDOWS)]
        offsets: i64,
        /// Delay of the first accidental window, ps.
        #[arg(long, default_value_t = CAR_OFFSET_START_PS)]
        offset_start_ps: i64,
        /// Write the histogram built from events.
        #[arg(long)]
        histogram_out: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Power sweep: singles fits, CAR and rate inversion per power.
    Power {
        /// CSV `power_mw,n_s,n_i,c_c,a_cc` with rates in Hz.
        #[arg(long)]
        sweep: PathBuf,
        /// Per-power curve CSV.
        #[arg(long)]
        curve_out: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Cosine fit of one fringe (`x,count`).
    Fringe {
        #[arg(long = "in")]
        input: PathBuf,
        /// Fixed period, rad; fitted when omitted.
        #[arg(long)]
        period: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        output: Output,
    },
    /// Four-port Franson fringes, correlation coefficient and CHSH.
    Franson {
        /// CSV `phase,a1b1,a1b2,a2b1,a2b2`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Fringe period in the phase variable, rad.
        #[arg(long, default_value_t = TAU)]
        period: f64,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        /// Correlation coefficient per phase (`phase,e`).
        #[arg(long)]
        correlation_out: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        output: Output,
    },
    /// Quantum-beating fit (`tau_ps,count`).
    Beating {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum Tomo {
    /// Linear and projected reconstruction of a time-bin table.
    Timebin {
        /// Projection counts, CSV or JSON.
        #[arg(long, conflicts_with = "outcomes", required_unless_present = "outcomes")]
        counts: Option<PathBuf>,
        /// Outcome runs written by `simulate timebin`.
        #[arg(long)]
        outcomes: Option<PathBuf>,
        /// Franson fringes (`phase,a1b1,a1b2,a2b1,a2b2`) for the CHSH value.
        #[arg(long)]
        fringes: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        output: Output,
    },
    /// Frequency-bin density matrix from beating parameters.
    Freqbin {
        #[arg(long, default_value_t = fixtures::reference_freqbin_params().a)]
        a: f64,
        #[arg(long, default_value_t = fixtures::reference_freqbin_params().visibility)]
        visibility: f64,
        #[arg(long, default_value_t = fixtures::reference_freqbin_params().phi)]
        phi: f64,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum Scan {
    /// Same-port (or cross-port) coincidences versus UMZI phase.
    Fringe {
        #[arg(long, default_value_t = 64)]
        points: usize,
        #[arg(long)]
        cross: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Beating coincidences versus relative delay.
    Beating {
        #[arg(long, default_value_t = -15.0, allow_negative_numbers = true)]
        start_ps: f64,
        #[arg(long, default_value_t = 15.0, allow_negative_numbers = true)]
        stop_ps: f64,
        #[arg(long, default_value_t = 0.2)]
        step_ps: f64,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum Reproduce {
    /// Criteria 1-8 with a pass/fail table.
    Paper {
        /// Write the outcomes as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Run only these criteria (comma-separated ids).
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=8))]
        only: Vec<u8>,
        #[command(flatten)]
        seed: SeedArg,
    },
}

enum Failure {
    /// Analysis ran and a check did not pass; already reported.
    Reported,
    Error(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Error(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Reported) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            let kind = e.downcast_ref::<Error>().map_or("error", Error::kind);
            let report = json!({ "error": kind, "message": format!("{e:#}") });
            eprintln!("{report}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: Option<&FsPath>) -> anyhow::Result<RunConfig> {
    let cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    Ok(cfg.with_env_seed()?)
}

fn read(path: &FsPath) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(output: &Output, text: &str) -> anyhow::Result<()> {
    match &output.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(output: &Output, value: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(output, &text)
}

fn write_file(path: &FsPath, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn density_json(rho: &DensityMatrix) -> Value {
    serde_json::to_value(DensityMatrixJson::from(rho)).expect("density matrix serializes")
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(cli.config.as_deref())?;
    let seed_of = |s: &SeedArg| s.seed.unwrap_or(cfg.seed);
    match cli.command {
        Command::Simulate(Simulate::Cw {
            power,
            duration,
            seed,
            output,
        }) => {
            let (ds, di) = (cfg.signal_detector(), cfg.idler_detector());
            let events = simulate_cw(&fixtures::reference_optical_source_model(), (&ds, &di), power, duration, seed_of(&seed))?;
            emit(&output, &events_to_csv(&events.records()))?;
        }
        Command::Simulate(Simulate::Timebin {
            state,
            pairs,
            background,
            table_out,
            seed,
            output,
        }) => {
            let reference = analyze_timebin(&fixtures::timebin_counts(), &BellState::PhiPlus.state())?;
            let rho = match state {
                Some(p) => DensityMatrix::from_json(&read(&p)?)?,
                None => reference.physical.clone(),
            };
            let pairs = pairs.unwrap_or(reference.pairs_per_setting.round() as u64);
            let settings = [
                (Analyzer::D, Analyzer::D),
                (Analyzer::D, Analyzer::R),
                (Analyzer::R, Analyzer::D),
                (Analyzer::R, Analyzer::R),
            ];
            let seeds = derive_seeds(seed_of(&seed), settings.len());
            let runs = settings
                .iter()
                .zip(seeds)
                .map(|(&(a, b), s)| sample_timebin_outcomes(&rho, a.phase(), b.phase(), pairs, background, s))
                .collect::<paircraft::Result<Vec<_>>>()?;
            if let Some(p) = table_out {
                let keyed: BTreeMap<_, _> = settings.iter().copied().zip(runs.iter().cloned()).collect();
                write_file(&p, &table_from_outcomes(&keyed)?.to_json())?;
            }
            let mut text = formats::outcome_runs_to_json(&runs);
            text.push('\n');
            emit(&output, &text)?;
        }
        Command::Analyze(a) => analyze(a, &cfg, seed_of)?,
        Command::Tomo(t) => tomo(t, seed_of)?,
        Command::Scan(s) => scan(s, &cfg)?,
        Command::Reproduce(Reproduce::Paper { json, only, seed }) => {
            let seed = seed_of(&seed);
            println!("running acceptance criteria (seed {seed})");
            let outcomes = if only.is_empty() {
                reproduce::run_all(seed)
            } else {
                only.iter()
                    .map(|&id| reproduce::run_criterion(id, seed))
                    .collect::<paircraft::Result<Vec<_>>>()?
            };
            for o in &outcomes {
                println!("{}", o.line());
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} passed, {failed} failed", outcomes.len() - failed);
            if let Some(p) = json {
                write_file(&p, &(serde_json::to_string_pretty(&outcomes).map_err(anyhow::Error::from)? + "\n"))?;
            }
            if failed > 0 {
                return Err(Failure::Reported);
            }
        }
    }
    Ok(())
}

fn car_report(hist: &CoincidenceHistogram, window_s: f64, offsets: i64, start: i64) -> anyhow::Result<Value> {
    let window = (window_s * 1e12).round() as i64;
    if offsets < 1 || start < window {
        bail!("need at least one accidental window starting at least one window away from the peak");
    }
    let list: Vec<i64> = (0..offsets)
        .flat_map(|j| {
            let o = start + j * window;
            [o, -o]
        })
        .collect();
    let w = window_counts(hist, window, 0, &list)?;
    let value = car(w.c_c, w.a_cc)?;
    let sigma = value * (1.0 / w.c_c + 1.0 / w.a_total as f64).sqrt();
    Ok(json!({
        "window_ps": window,
        "coincidences": w.c_c,
        "accidentals_mean": w.a_cc,
        "accidentals_total": w.a_total,
        "accidental_windows": w.n_offsets,
        "car": value,
        "car_sigma": sigma,
    }))
}

fn fit_with_bootstrap(x: &[f64], y: &[f64], period: Option<f64>, resamples: usize, seed: u64) -> anyhow::Result<FringeFit> {
    let mut fit = fit_cosine(x, y, period)?;
    if resamples >= 2 {
        fit.bootstrap_sigma = Some(bootstrap_fringe(&fit, x, y, resamples, seed)?);
    }
    Ok(fit)
}

fn analyze(cmd: Analyze, cfg: &RunConfig, seed_of: impl Fn(&SeedArg) -> u64) -> Outcome {
    match cmd {
        Analyze::Car {
            events,
            histogram,
            bin_ps,
            offsets,
            offset_start_ps,
            histogram_out,
            output,
        } => {
            let window = (cfg.window * 1e12).round() as i64;
            let (hist, singles) = match (events, histogram) {
                (Some(p), _) => {
                    let ev = CwEvents::from_records(&events_from_csv(&read(&p)?)?)?;
                    let reach = offset_start_ps + offsets.max(1) * window;
                    let span = 2 * (reach + 2 * bin_ps);
                    let hist = histogram_coincidences(&ev.signal, &ev.idler, bin_ps, span)?;
                    if let Some(out) = histogram_out {
                        write_file(&out, &hist.to_csv())?;
                    }
                    (hist, Some((ev.signal.len(), ev.idler.len())))
                }
                (None, Some(p)) => (CoincidenceHistogram::from_csv(&read(&p)?)?, None),
                (None, None) => unreachable!("clap requires one input"),
            };
            let mut report = car_report(&hist, cfg.window, offsets, offset_start_ps)?;
            if let Some((s, i)) = singles {
                report["singles_signal"] = json!(s);
                report["singles_idler"] = json!(i);
            }
            emit_json(&output, &report)?;
        }
        Analyze::Power {
            sweep,
            curve_out,
            output,
        } => {
            let cols = formats::read_columns(&read(&sweep)?, &POWER_SWEEP_HEADER)?;
            let (p, ns, ni, cc, acc) = (&cols[0], &cols[1], &cols[2], &cols[3], &cols[4]);
            let fit_s = fit_power_sweep(p, ns, 2)?;
            let fit_i = fit_power_sweep(p, ni, 2)?;
            let mut rows = Vec::new();
            let mut curve = vec![Vec::new(); 7];
            for k in 0..p.len() {
                let obs = CountPrediction {
                    n_s: ns[k],
                    n_i: ni[k],
                    c_c: cc[k],
                    a_cc: acc[k],
                    window: cfg.window,
                };
                let noise = NoiseTerms {
                    signal: fit_s.linear_part(p[k]),
                    idler: fit_i.linear_part(p[k]),
                };
                let inv = invert_rates(&obs, fit_s.constant(), fit_i.constant(), noise);
                let car_k = car(cc[k], acc[k]).ok();
                rows.push(json!({
                    "power_mw": p[k],
                    "car": car_k,
                    "inversion": inv.as_ref().ok(),
                    "inversion_error": inv.as_ref().err().map(|e| e.to_string()),
                }));
                let inv = inv.ok();
                let vals = [
                    p[k],
                    car_k.unwrap_or(f64::NAN),
                    inv.map_or(f64::NAN, |r| r.pair_rate),
                    inv.map_or(f64::NAN, |r| r.eta_s),
                    inv.map_or(f64::NAN, |r| r.eta_i),
                    fit_s.linear_part(p[k]),
                    fit_i.linear_part(p[k]),
                ];
                for (c, v) in curve.iter_mut().zip(vals) {
                    c.push(v);
                }
            }
            if let Some(out) = curve_out {
                let header = ["power_mw", "car", "pair_rate", "eta_s", "eta_i", "noise_s", "noise_i"];
                write_file(&out, &formats::write_columns(&header, &curve))?;
            }
            emit_json(
                &output,
                &json!({ "signal_fit": fit_s, "idler_fit": fit_i, "points": rows }),
            )?;
        }
        Analyze::Fringe {
            input,
            period,
            resamples,
            seed,
            output,
        } => {
            let cols = formats::read_columns(&read(&input)?, &FRINGE_HEADER)?;
            let fit = fit_with_bootstrap(&cols[0], &cols[1], period, resamples, seed_of(&seed))?;
            emit_json(&output, &json!({ "fit": fit, "visibility_sigma": fit.visibility_sigma() }))?;
        }
        Analyze::Franson {
            input,
            period,
            resamples,
            correlation_out,
            seed,
            output,
        } => {
            let (fits, report) = franson(&read(&input)?, period, resamples, seed_of(&seed), correlation_out.as_deref())?;
            let pooled = chsh_from_fringes(&fits)?;
            let mut report = report;
            report["chsh"] = serde_json::to_value(&pooled).map_err(anyhow::Error::from)?;
            emit_json(&output, &report)?;
        }
        Analyze::Beating {
            input,
            resamples,
            seed,
            output,
        } => {
            let cols = formats::read_columns(&read(&input)?, &BEATING_HEADER)?;
            let tau: Vec<f64> = cols[0].iter().map(|t| t * 1e-12).collect();
            let mut fit = fit_beating(&tau, &cols[1])?;
            if resamples >= 2 {
                fit.bootstrap_sigma = Some(bootstrap_beating(&fit, &tau, &cols[1], resamples, seed_of(&seed))?);
            }
            let sigma: Vec<f64> = (0..6).map(|k| fit.sigma(k)).collect();
            emit_json(
                &output,
                &json!({
                    "fit": fit,
                    "sigma": sigma,
                    "omega_over_2pi_hz": fit.params.omega / TAU,
                }),
            )?;
        }
    }
    Ok(())
}

type FransonFits = BTreeMap<(u8, u8), FringeFit>;

fn franson(
    text: &str,
    period: f64,
    resamples: usize,
    seed: u64,
    correlation_out: Option<&FsPath>,
) -> anyhow::Result<(FransonFits, Value)> {
    let cols = formats::read_columns(text, &FRANSON_HEADER)?;
    let ports = [(1u8, 1u8), (1, 2), (2, 1), (2, 2)];
    let seeds = derive_seeds(seed, 4);
    let mut fits = BTreeMap::new();
    let mut named = serde_json::Map::new();
    for (k, &pp) in ports.iter().enumerate() {
        let fit = fit_with_bootstrap(&cols[0], &cols[k + 1], Some(period), resamples, seeds[k])?;
        named.insert(FRANSON_HEADER[k + 1].to_string(), serde_json::to_value(&fit)?);
        fits.insert(pp, fit);
    }
    let e: Vec<f64> = (0..cols[0].len())
        .map(|i| correlation_coefficient([[cols[1][i], cols[2][i]], [cols[3][i], cols[4][i]]]))
        .collect::<paircraft::Result<_>>()?;
    if let Some(p) = correlation_out {
        write_file(p, &formats::write_columns(&["phase", "e"], &[cols[0].clone(), e]))?;
    }
    Ok((fits, json!({ "fits": named })))
}

fn tomo(cmd: Tomo, seed_of: impl Fn(&SeedArg) -> u64) -> Outcome {
    match cmd {
        Tomo::Timebin {
            counts,
            outcomes,
            fringes,
            resamples,
            seed,
            output,
        } => {
            let table = match (counts, outcomes) {
                (Some(p), _) => {
                    let text = read(&p)?;
                    if text.trim_start().starts_with('{') {
                        ProjectionCountTable::from_json(&text)?
                    } else {
                        ProjectionCountTable::from_csv(&text)?
                    }
                }
                (None, Some(p)) => {
                    let runs = formats::outcome_runs_from_json(&read(&p)?)?;
                    let mut keyed = BTreeMap::new();
                    for run in runs {
                        let pick = |phase: f64| {
                            [Analyzer::D, Analyzer::R]
                                .into_iter()
                                .find(|a| (a.phase() - phase).abs() < 1e-9)
                                .ok_or_else(|| anyhow::anyhow!("analyzer phase {phase} is neither D nor R"))
                        };
                        keyed.insert((pick(run.alpha)?, pick(run.beta)?), run);
                    }
                    table_from_outcomes(&keyed)?
                }
                (None, None) => unreachable!("clap requires one input"),
            };
            let target = BellState::PhiPlus.state();
            let report = analyze_timebin(&table, &target)?;
            let sigma = if resamples >= 2 {
                Some(bootstrap_table(&table, resamples, seed_of(&seed), |t| {
                    fidelity(&project_physical(&reconstruct_linear(t)?)?, &target)
                })?)
            } else {
                None
            };
            let mut out = json!({
                "target": "phi_plus",
                "pairs_per_setting": report.pairs_per_setting,
                "fidelity": report.fidelity_physical,
                "fidelity_sigma": sigma,
                "fidelity_linear": report.fidelity_linear,
                "linear_is_physical": report.linear.is_physical(),
                "diagonal": report.physical.diagonal(),
                "physical": density_json(&report.physical),
                "linear": density_json(&report.linear),
            });
            if let Some(p) = fringes {
                let (fits, _) = franson(&read(&p)?, TAU, resamples, seed_of(&seed), None)?;
                out["chsh"] = serde_json::to_value(chsh_from_fringes(&fits)?).map_err(anyhow::Error::from)?;
            }
            emit_json(&output, &out)?;
        }
        Tomo::Freqbin {
            a,
            visibility,
            phi,
            output,
        } => {
            let params = FreqBinParams { a, visibility, phi };
            let rho = freqbin_density(&params)?;
            let f = fidelity(&rho, &BellState::PsiSwapFreq.state())?;
            emit_json(
                &output,
                &json!({
                    "parameters": params,
                    "physical": params.is_physical(),
                    "fidelity": f,
                    "density": density_json(&rho),
                }),
            )?;
        }
    }
    Ok(())
}

/// Filters from the configured wavelengths with the idler mirrored about the
/// pump half-frequency, and a CW state covering both bands.
fn spectral_setup(cfg: &RunConfig) -> anyhow::Result<(Detection, SpectralState)> {
    let signal = FilterSpec::from_wavelength(cfg.signal_nm, cfg.filter_bandwidth_hz)?;
    let idler_nominal = FilterSpec::from_wavelength(cfg.idler_nm, cfg.filter_bandwidth_hz)?;
    let omega_p0 = 0.5 * (signal.center + idler_nominal.center);
    let det = Detection {
        signal,
        idler: signal.mirrored(omega_p0),
        eta_s: 1.0,
        eta_i: 1.0,
        window: cfg.window,
    };
    let step = signal.bandwidth / cfg.grid_points_per_band as f64;
    let span = span_covering(omega_p0, &[det.signal, det.idler], step, 4);
    let state = build_cw_state(omega_p0, span, (span / step).ceil() as usize, 1.0, &[det.signal, det.idler])?;
    Ok((det, state))
}

fn scan(cmd: Scan, cfg: &RunConfig) -> Outcome {
    let (det, input) = spectral_setup(cfg)?;
    match cmd {
        Scan::Fringe { points, cross, output } => {
            if points < 2 {
                return Err(Failure::Error(anyhow::anyhow!("need at least two phase points")));
            }
            let phases: Vec<f64> = (0..points).map(|k| TAU * k as f64 / points as f64).collect();
            let pts = fringe_scan(&input, cfg.umzi_delay, &phases, &det, cross)?;
            emit(&output, &scan_to_csv(&pts))?;
        }
        Scan::Beating {
            start_ps,
            stop_ps,
            step_ps,
            output,
        } => {
            if !(step_ps > 0.0 && stop_ps >= start_ps) {
                return Err(Failure::Error(anyhow::anyhow!("need step_ps > 0 and stop_ps >= start_ps")));
            }
            let n = ((stop_ps - start_ps) / step_ps + 1e-9).floor() as usize + 1;
            let delays: Vec<f64> = (0..n).map(|k| (start_ps + step_ps * k as f64) * 1e-12).collect();
            let phi = antibunching_phase(input.grid().omega_p0(), cfg.umzi_delay);
            let anti = apply_umzi(&input, &UmziConfig::new(cfg.umzi_delay, phi), TemporalFilter::CentralPeak)?;
            let pts = beating_scan(&anti, &delays, &det, 0.0)?;
            emit(&output, &scan_to_csv(&pts))?;
        }
    }
    Ok(())
}
