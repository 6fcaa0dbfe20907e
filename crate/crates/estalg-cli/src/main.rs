//! Command-line front end: load models, run closures, simulations, identity
//! verification, and the classical estimation-algebra suite.
//!
//! Exit codes are a stable contract:
//!   0 success, 1 input error, 2 closure cap exceeded, 3 filter degeneracy,
//!   4 symbolic degree guard, 5 verification-suite failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use estalg::classical::{self, ClassicalError};
use estalg::io;
use estalg::lie_engine::{self, LieError};
use estalg::operators::Operator;
use estalg::presets;
use estalg::qfilter::{self, FilterError, FilterState, Form};
use estalg::superops::{KForm, MeasurementScheme, ModelSpec};
use estalg::verify;

const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug)]
enum CliError {
    Input(String),
    CapExceeded(String),
    Degeneracy(String),
    DegreeGuard(String),
    VerifyFailed(usize),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::CapExceeded(_) => 2,
            CliError::Degeneracy(_) => 3,
            CliError::DegreeGuard(_) => 4,
            CliError::VerifyFailed(_) => 5,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m)
            | CliError::CapExceeded(m)
            | CliError::Degeneracy(m)
            | CliError::DegreeGuard(m) => write!(f, "{m}"),
            CliError::VerifyFailed(n) => write!(f, "{n} identity check(s) failed"),
        }
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<LieError> for CliError {
    fn from(e: LieError) -> Self {
        match e {
            LieError::CapExceeded { .. } => CliError::CapExceeded(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        match e {
            FilterError::Degeneracy { .. }
            | FilterError::VanishingNorm { .. }
            | FilterError::NonFinite { .. } => {
                CliError::Degeneracy(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ClassicalError> for CliError {
    fn from(e: ClassicalError) -> Self {
        match e {
            ClassicalError::DegreeGuard { .. } => CliError::DegreeGuard(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "estalg",
    about = "Quantum filtering, zeta super-operator calculus, and estimation Lie algebras",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum FormatArg {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum PictureArg {
    #[default]
    Density,
    Pure,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum FormArg {
    #[default]
    Ito,
    Strat,
    Both,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum KFormArg {
    /// K(G,Theta) = -1/2 sum (L^dag L + e^{2i theta} L^2) - iH (the form the
    /// split identity derives)
    #[default]
    Derived,
    /// In-text closed form with the flipped square sign (negative control)
    #[value(name = "paper-2.3")]
    Paper23,
    /// Closed form with a half-weighted square term (negative control)
    #[value(name = "paper-eq-Kcomplete")]
    PaperEqKcomplete,
}

impl From<KFormArg> for KForm {
    fn from(a: KFormArg) -> Self {
        match a {
            KFormArg::Derived => KForm::Derived,
            KFormArg::Paper23 => KForm::SignFlipped,
            KFormArg::PaperEqKcomplete => KForm::HalfWeight,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the operator and estimation Lie algebras of a model and, for
    /// complete homodyne schemes, check their zeta equivalence.
    Closure {
        #[arg(long, conflicts_with = "preset")]
        model: Option<PathBuf>,
        #[arg(long, requires = "model")]
        scheme: Option<PathBuf>,
        /// Embedded preset (qubit-decay, qubit-driven, qubit-shifted,
        /// oscillator-trunc-10, oscillator-trunc-16)
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Basis-dimension cap (default: the ambient real dimension)
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate (or replay) a homodyne record and integrate the filter.
    Simulate {
        #[arg(long, conflicts_with = "preset")]
        model: Option<PathBuf>,
        #[arg(long, requires = "model")]
        scheme: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Initial density matrix JSON (defaults to the preset's state, or
        /// the maximally mixed state)
        #[arg(long)]
        rho0: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        picture: PictureArg,
        #[arg(long, value_enum, default_value_t)]
        form: FormArg,
        /// Replay a previously saved record CSV (sidecar JSON expected next
        /// to it)
        #[arg(long)]
        record: Option<PathBuf>,
        /// Trajectories; above 1, emits ensemble means instead of a path
        #[arg(long, default_value_t = 1)]
        ensemble: usize,
        /// Output path prefix
        #[arg(long, default_value = "estalg-sim")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// Run the seeded identity suite (zeta calculus, Lindblad forms,
    /// Stratonovich split).
    Verify {
        /// Comma-separated Hilbert dimensions
        #[arg(long, default_value = "2,3,4,6")]
        dims: String,
        /// Random models per dimension
        #[arg(long, default_value_t = 25)]
        seeds: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// Closed form of K(G, Theta) fed to the split identity
        #[arg(long = "k-form", value_enum, default_value_t)]
        k_form: KFormArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classical polynomial filtering model: DMZ generator, gauge field,
    /// potential, Benes class, and the symbolic estimation algebra.
    Classical {
        #[arg(long, conflicts_with = "preset")]
        model: Option<PathBuf>,
        /// Embedded preset (kalman-1d, cubic-sensor, rotational-2d)
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 40)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Closure { model, scheme, preset, tol, cap, out } => {
            cmd_closure(model, scheme, preset, tol, cap, out)
        }
        Cmd::Simulate {
            model,
            scheme,
            preset,
            rho0,
            dt,
            horizon,
            seed,
            picture,
            form,
            record,
            ensemble,
            out,
            format,
        } => cmd_simulate(
            model, scheme, preset, rho0, dt, horizon, seed, picture, form, record, ensemble, out,
            format,
        ),
        Cmd::Verify { dims, seeds, tol, k_form, seed, out } => {
            cmd_verify(&dims, seeds, tol, k_form.into(), seed, out)
        }
        Cmd::Classical { model, preset, cap, out } => cmd_classical(model, preset, cap, out),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

struct QuantumInputs {
    model: ModelSpec<f64>,
    scheme: MeasurementScheme<f64>,
    rho0: Operator<f64>,
}

fn load_quantum_inputs(
    model: &Option<PathBuf>,
    scheme: &Option<PathBuf>,
    preset: &Option<String>,
    rho0_path: &Option<PathBuf>,
) -> Result<QuantumInputs, CliError> {
    let mut inputs = match (model, preset) {
        (Some(path), None) => {
            let model = io::parse_model(&read_file(path)?)?;
            let scheme = match scheme {
                Some(spath) => io::parse_scheme(&read_file(spath)?)?,
                None => return Err(CliError::Input("--scheme is required with --model".into())),
            };
            scheme.validate_for(&model).map_err(io::IoError::from)?;
            let d = model.dim();
            let rho0 = Operator::identity(d).scale_re(1.0 / d as f64);
            QuantumInputs { model, scheme, rho0 }
        }
        (None, Some(name)) => {
            let p = presets::quantum(name).ok_or_else(|| {
                CliError::Input(format!(
                    "unknown quantum preset {name:?}; available: {}",
                    presets::QUANTUM_PRESETS.join(", ")
                ))
            })??;
            QuantumInputs { model: p.model, scheme: p.scheme, rho0: p.rho0 }
        }
        _ => {
            return Err(CliError::Input(
                "exactly one of --model or --preset is required".into(),
            ))
        }
    };
    if let Some(path) = rho0_path {
        let rows: io::MatrixJson = serde_json::from_str(&read_file(path)?)
            .map_err(io::IoError::from)?;
        inputs.rho0 = io::matrix_from_json(&rows, "rho0")?;
    }
    Ok(inputs)
}

fn cmd_closure(
    model: Option<PathBuf>,
    scheme: Option<PathBuf>,
    preset: Option<String>,
    tol: f64,
    cap: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let inputs = load_quantum_inputs(&model, &scheme, &preset, &None)?;
    let (model, scheme) = (inputs.model, inputs.scheme);
    let est = lie_engine::estimation_algebra(&model, &scheme, tol, cap)?;
    let complete = scheme.is_complete(model.channels());

    let mut ops_report = None;
    let mut theorem = None;
    if complete {
        let ops = lie_engine::operator_algebra(&model, &scheme, tol, cap)?;
        if ops.is_finite() && est.is_finite() {
            let thm = lie_engine::verify_theorem_main(&model, &scheme, tol.max(1e-8), cap)?;
            theorem = Some(json!({
                "dim_ops": thm.dim_ops,
                "dim_superops": thm.dim_superops,
                "kernel_dim": thm.kernel_dim,
                "max_inclusion_defect": thm.max_inclusion_defect,
                "pass": thm.pass,
            }));
        }
        ops_report = Some(ops);
    }

    let cap_hit = !est.is_finite() || ops_report.as_ref().is_some_and(|r| !r.is_finite());
    let report = json!({
        "estimation_algebra": io::closure_report_to_json(&est),
        "operator_algebra": ops_report.as_ref().map(io::closure_report_to_json),
        "theorem_main": theorem,
    });
    write_output(&out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    if cap_hit {
        return Err(CliError::CapExceeded(format!(
            "closure hit the dimension cap (estimation algebra dimension {})",
            est.dimension()
        )));
    }
    Ok(())
}

/// Population observables E_kk, the default simulate output.
fn population_observables(d: usize) -> (Vec<Operator<f64>>, Vec<String>) {
    let obs = (0..d).map(|k| Operator::matrix_unit(d, k, k)).collect();
    let labels = (0..d).map(|k| format!("pop{k}")).collect();
    (obs, labels)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model: Option<PathBuf>,
    scheme: Option<PathBuf>,
    preset: Option<String>,
    rho0: Option<PathBuf>,
    dt: f64,
    horizon: f64,
    seed: u64,
    picture: PictureArg,
    form: FormArg,
    record_path: Option<PathBuf>,
    ensemble: usize,
    out: PathBuf,
    format: FormatArg,
) -> Result<(), CliError> {
    let inputs = load_quantum_inputs(&model, &scheme, &preset, &rho0)?;
    let (model, scheme, rho0) = (inputs.model, inputs.scheme, inputs.rho0);
    let d = model.dim();
    let (observables, labels) = population_observables(d);

    if ensemble > 1 {
        return cmd_simulate_ensemble(
            &model, &scheme, &rho0, dt, horizon, seed, ensemble, &observables, &labels, &out,
        );
    }

    let record = match &record_path {
        Some(path) => {
            let sidecar_path = sidecar_path(path);
            let sidecar: io::RecordSidecar =
                serde_json::from_str(&read_file(&sidecar_path)?).map_err(io::IoError::from)?;
            io::record_from_csv(&read_file(path)?, &sidecar)?
        }
        None => qfilter::generate_record(&model, &scheme, &rho0, horizon, dt, seed)?,
    };

    let initial = match picture {
        PictureArg::Density => FilterState::Density(rho0.clone()),
        PictureArg::Pure => FilterState::pure_from_density(&rho0, 1e-8)
            .map_err(|e| CliError::Input(format!("pure picture needs a pure rho0: {e}")))?,
    };

    // save the record next to the filter output (unless we replayed one)
    if record_path.is_none() {
        let sidecar = io::RecordSidecar {
            seed,
            dt: record.dt,
            horizon: record.horizon,
            model_hash: io::model_hash(&model, &scheme),
        };
        write_file(&with_suffix(&out, ".record.csv"), &io::record_to_csv(&record))?;
        write_file(
            &with_suffix(&out, ".record.json"),
            &serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
        )?;
    }

    let run = |f: Form| qfilter::run_filter(&record, &model, &scheme, &initial, f, &observables);
    match form {
        FormArg::Ito | FormArg::Strat => {
            let f = if matches!(form, FormArg::Ito) { Form::Ito } else { Form::Strat };
            let output = run(f)?;
            let path = with_suffix(&out, ".filter.csv");
            match format {
                FormatArg::Csv => write_file(&path, &io::filter_output_to_csv(&output, &labels))?,
                FormatArg::Json => write_file(
                    &with_suffix(&out, ".filter.json"),
                    &filter_output_json(&output, &labels),
                )?,
            }
        }
        FormArg::Both => {
            let ito = run(Form::Ito)?;
            let strat = run(Form::Strat)?;
            let csv = both_forms_csv(&ito, &strat, &labels);
            match format {
                FormatArg::Csv => write_file(&with_suffix(&out, ".filter.csv"), &csv)?,
                FormatArg::Json => write_file(
                    &with_suffix(&out, ".filter.json"),
                    &both_forms_json(&ito, &strat, &labels),
                )?,
            }
        }
    }
    Ok(())
}

fn sidecar_path(record: &Path) -> PathBuf {
    if record.extension().is_some_and(|e| e == "csv") {
        record.with_extension("json")
    } else {
        let mut p = record.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn filter_output_json(out: &qfilter::FilterOutput<f64>, labels: &[String]) -> String {
    let pi: serde_json::Map<String, serde_json::Value> = labels
        .iter()
        .zip(&out.expectations)
        .map(|(label, series)| {
            (
                label.clone(),
                json!({
                    "re": series.iter().map(|z| z.re).collect::<Vec<_>>(),
                    "im": series.iter().map(|z| z.im).collect::<Vec<_>>(),
                }),
            )
        })
        .collect();
    serde_json::to_string_pretty(&json!({
        "t": out.times,
        "sigma_I": out.sigma_norm,
        "pi": pi,
        "positivity_repairs": out.positivity_repairs,
        "max_negative_eig": out.max_negative_eig,
    }))
    .expect("filter output serializes")
}

fn both_forms_csv(
    ito: &qfilter::FilterOutput<f64>,
    strat: &qfilter::FilterOutput<f64>,
    labels: &[String],
) -> String {
    let mut s = String::from("t,sigma_I_ito,sigma_I_strat");
    for label in labels {
        s.push_str(&format!(",Re_pi_{label}_ito,Im_pi_{label}_ito"));
    }
    for label in labels {
        s.push_str(&format!(",Re_pi_{label}_strat,Im_pi_{label}_strat"));
    }
    s.push_str(",pi_discrepancy\n");
    for k in 0..ito.times.len() {
        s.push_str(&io::fmt_f64(ito.times[k]));
        s.push(',');
        s.push_str(&io::fmt_f64(ito.sigma_norm[k]));
        s.push(',');
        s.push_str(&io::fmt_f64(strat.sigma_norm[k]));
        for series in &ito.expectations {
            s.push(',');
            s.push_str(&io::fmt_f64(series[k].re));
            s.push(',');
            s.push_str(&io::fmt_f64(series[k].im));
        }
        for series in &strat.expectations {
            s.push(',');
            s.push_str(&io::fmt_f64(series[k].re));
            s.push(',');
            s.push_str(&io::fmt_f64(series[k].im));
        }
        let disc = ito
            .expectations
            .iter()
            .zip(&strat.expectations)
            .map(|(a, b)| (a[k] - b[k]).norm())
            .fold(0.0f64, f64::max);
        s.push(',');
        s.push_str(&io::fmt_f64(disc));
        s.push('\n');
    }
    s
}

fn both_forms_json(
    ito: &qfilter::FilterOutput<f64>,
    strat: &qfilter::FilterOutput<f64>,
    labels: &[String],
) -> String {
    let disc: Vec<f64> = (0..ito.times.len())
        .map(|k| {
            ito.expectations
                .iter()
                .zip(&strat.expectations)
                .map(|(a, b)| (a[k] - b[k]).norm())
                .fold(0.0f64, f64::max)
        })
        .collect();
    serde_json::to_string_pretty(&json!({
        "ito": serde_json::from_str::<serde_json::Value>(&filter_output_json(ito, labels)).unwrap(),
        "strat": serde_json::from_str::<serde_json::Value>(&filter_output_json(strat, labels)).unwrap(),
        "pi_discrepancy": disc,
    }))
    .expect("serializes")
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate_ensemble(
    model: &ModelSpec<f64>,
    scheme: &MeasurementScheme<f64>,
    rho0: &Operator<f64>,
    dt: f64,
    horizon: f64,
    seed: u64,
    ensemble: usize,
    observables: &[Operator<f64>],
    labels: &[String],
    out: &Path,
) -> Result<(), CliError> {
    let sample_times: Vec<f64> = (0..=10).map(|k| horizon * k as f64 / 10.0).collect();
    let mut s = String::from("t");
    for label in labels {
        s.push_str(&format!(",mean_pi_{label},stderr_pi_{label}"));
    }
    s.push('\n');
    let mut per_obs = Vec::new();
    for x in observables {
        let stats = qfilter::ensemble_mean_expectation(
            model,
            scheme,
            rho0,
            x,
            horizon,
            dt,
            seed,
            ensemble,
            &sample_times,
        )?;
        per_obs.push(stats);
    }
    for (k, &t) in sample_times.iter().enumerate() {
        s.push_str(&io::fmt_f64(t));
        for stats in &per_obs {
            s.push(',');
            s.push_str(&io::fmt_f64(stats.mean[k]));
            s.push(',');
            s.push_str(&io::fmt_f64(stats.std_error[k]));
        }
        s.push('\n');
    }
    write_file(&with_suffix(out, ".ensemble.csv"), &s)
}

fn cmd_verify(
    dims: &str,
    seeds: usize,
    tol: f64,
    k_form: KForm,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let dims: Vec<usize> = dims
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Input(format!("bad dimension {s:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    for &d in &dims {
        if !(1..=estalg::MAX_DIM).contains(&d) {
            return Err(CliError::Input(format!("dimension {d} outside 1..={}", estalg::MAX_DIM)));
        }
    }
    let reports = verify::run_identity_suite::<f64>(&dims, seeds, tol, k_form, seed);
    for r in &reports {
        println!(
            "{} {:<45} max defect {:>12.3e}  (tol {:.1e})",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.max_defect,
            r.tolerance
        );
    }
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    if let Some(path) = &out {
        write_file(path, &json)?;
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}

fn cmd_classical(
    model: Option<PathBuf>,
    preset: Option<String>,
    cap: usize,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let model = match (model, preset) {
        (Some(path), None) => io::parse_classical_model(&read_file(&path)?)?,
        (None, Some(name)) => presets::classical(&name).ok_or_else(|| {
            CliError::Input(format!(
                "unknown classical preset {name:?}; available: {}",
                presets::CLASSICAL_PRESETS.join(", ")
            ))
        })??,
        _ => return Err(CliError::Input("exactly one of --model or --preset is required".into())),
    };

    let dmz = classical::dmz_generator(&model);
    let field = classical::gauge_field(&model);
    let phi = classical::potential_phi(&model);
    let benes = classical::benes_class(&model);
    let exact = classical::is_exact(&model);
    let closure = classical::classical_closure(&model, cap)?;

    let report = json!({
        "dmz": dmz.to_string(),
        "gauge_field": field
            .iter()
            .map(|row| row.iter().map(|p| p.to_string()).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "potential": phi.to_string(),
        "potential_degree": phi.degree(),
        "is_exact": exact,
        "benes": { "is_benes": benes.is_benes, "reasons": benes.reasons },
        "closure": {
            "outcome": if closure.is_finite() { "finite" } else { "cap_exceeded" },
            "dimension": closure.dimension(),
            "growth_trace": closure.growth_trace,
            "bracket_count": closure.bracket_count,
            "basis": closure.basis().map(|b| b.iter().map(|op| op.to_string()).collect::<Vec<_>>()),
        },
    });
    write_output(&out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    if !closure.is_finite() {
        return Err(CliError::CapExceeded(format!(
            "classical closure hit the cap at dimension {}",
            closure.dimension()
        )));
    }
    Ok(())
}
