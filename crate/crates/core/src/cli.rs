//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::datamodel::Sector;
use crate::design::{build_design, ModelSpec};
use crate::error::{GravityError, Result};
use crate::glm::{fit_with_status, Estimator, EstimatorOptions, FitStatus};
use crate::ingest::{self, AggregationLevel, Bundle, SectorFilter, DEFAULT_RELIGION_FLOOR};
use crate::remoteness::{bilateral_years, exporter_remoteness_series};
use crate::report::{
    impact_markdown, unix_now, write_impact, write_substitution, OutputDir, RunManifest,
    IMPACT_FILE, MANIFEST_FILE, SUBSTITUTION_FILE, SUMMARY_FILE,
};
use crate::scenario::{run_comparison, ScenarioConfig, ScenarioInputs, ScenarioKind, TariffIncidence};
use crate::synth::{self, files, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "gravimetric", version, about = "Gravity-model estimation and trade-policy scenarios")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read and join the inputs, print the merge report.
    Validate {
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Fit a gravity model per sector.
    Estimate(EstimateArgs),
    /// Compute an exporter's yearly remoteness index.
    Remoteness(RemotenessArgs),
    /// Re-estimate under a trade-policy scenario and report impacts.
    Scenario(ScenarioArgs),
    /// Write a seeded synthetic input bundle.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Directory with flows.csv, attrs.csv and optional bilateral.csv,
    /// tariffs.csv, sectors.csv, distances.csv, remoteness.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub flows: Option<PathBuf>,
    #[arg(long)]
    pub attrs: Option<PathBuf>,
    #[arg(long)]
    pub bilateral: Option<PathBuf>,
    #[arg(long)]
    pub tariffs: Option<PathBuf>,
    #[arg(long)]
    pub sectors: Option<PathBuf>,
    #[arg(long)]
    pub distances: Option<PathBuf>,
    #[arg(long = "remoteness-file")]
    pub remoteness: Option<PathBuf>,
    /// Floor for zero religion shares before taking logs.
    #[arg(long, default_value_t = DEFAULT_RELIGION_FLOOR)]
    pub religion_floor: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LevelArg {
    YearCountry,
    YearCountrySector,
    YearCountryCn8,
}

impl From<LevelArg> for AggregationLevel {
    fn from(l: LevelArg) -> Self {
        match l {
            LevelArg::YearCountry => AggregationLevel::YearCountry,
            LevelArg::YearCountrySector => AggregationLevel::YearCountrySector,
            LevelArg::YearCountryCn8 => AggregationLevel::YearCountryCn8,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, default_value = "ppml")]
    pub estimator: Estimator,
    /// Model spec (.toml or .json); defaults to the basic model.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// `all` for the pooled fit plus every mapped sector, or one sector name.
    #[arg(long, default_value = "all")]
    pub sector: String,
    #[arg(long, value_enum, default_value = "year-country")]
    pub level: LevelArg,
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    /// Exporter whose remoteness is derived when no remoteness file is given.
    #[arg(long, default_value = "IE")]
    pub exporter: String,
    /// Worker threads; 0 uses every logical CPU.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Omit timestamps from the manifest.
    #[arg(long)]
    pub reproducible: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RemotenessArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[arg(long)]
    pub exporter: String,
    /// Output CSV; a `<stem>.manifest.json` is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub reproducible: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub kind: ScenarioKind,
    /// Baseline GNI* in EUR bn; adds the GNI* adjustment block.
    #[arg(long)]
    pub gni: Option<f64>,
    #[arg(long, default_value = "multiplicative")]
    pub incidence: TariffIncidence,
    /// Restrict export-value totals to one year.
    #[arg(long)]
    pub report_year: Option<i32>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// TOML config; defaults are used for absent keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub reproducible: bool,
}

/// Resolved input file set; `None` means the optional file is absent.
#[derive(Debug, Clone, Default)]
pub struct InputPaths {
    pub flows: PathBuf,
    pub attrs: PathBuf,
    pub bilateral: Option<PathBuf>,
    pub tariffs: Option<PathBuf>,
    pub sectors: Option<PathBuf>,
    pub distances: Option<PathBuf>,
    pub remoteness: Option<PathBuf>,
}

impl InputPaths {
    pub fn all(&self) -> Vec<&Path> {
        let mut v = vec![self.flows.as_path(), self.attrs.as_path()];
        for p in [&self.bilateral, &self.tariffs, &self.sectors, &self.distances, &self.remoteness]
            .into_iter()
            .flatten()
        {
            v.push(p);
        }
        v
    }
}

impl InputArgs {
    /// Explicit paths win; otherwise standard names under `--data`. Optional
    /// files missing from `--data` are skipped, explicit ones must exist.
    pub fn resolve(&self) -> Result<InputPaths> {
        let from_dir = |name: &str| self.data.as_ref().map(|d| d.join(name));
        let required = |explicit: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
            explicit
                .clone()
                .or_else(|| from_dir(name))
                .ok_or_else(|| GravityError::InvalidSpec(format!("no path for {name}; pass --data or --{}", name.trim_end_matches(".csv"))))
        };
        let optional = |explicit: &Option<PathBuf>, name: &str| -> Option<PathBuf> {
            explicit
                .clone()
                .or_else(|| from_dir(name).filter(|p| p.exists()))
        };
        Ok(InputPaths {
            flows: required(&self.flows, files::FLOWS)?,
            attrs: required(&self.attrs, files::ATTRS)?,
            bilateral: optional(&self.bilateral, files::BILATERAL),
            tariffs: optional(&self.tariffs, files::TARIFFS),
            sectors: optional(&self.sectors, files::SECTORS),
            distances: optional(&self.distances, files::DISTANCES),
            remoteness: optional(&self.remoteness, files::REMOTENESS),
        })
    }
}

pub fn load_bundle(paths: &InputPaths) -> Result<Bundle> {
    Ok(Bundle {
        flows: ingest::read_trade_flows(&paths.flows)?,
        attrs: ingest::read_attributes(&paths.attrs)?,
        bilateral: paths
            .bilateral
            .as_deref()
            .map(ingest::read_bilateral)
            .transpose()?
            .unwrap_or_default(),
        tariffs: paths
            .tariffs
            .as_deref()
            .map(ingest::read_tariffs)
            .transpose()?
            .unwrap_or_default(),
        sectors: paths.sectors.as_deref().map(ingest::read_sector_map).transpose()?,
        distances: paths.distances.as_deref().map(ingest::read_distances).transpose()?,
        remoteness: paths.remoteness.as_deref().map(ingest::read_remoteness).transpose()?,
    })
}

/// Outcome of a command: files may be written even when the exit code is non-zero.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub messages: Vec<String>,
}

impl Outcome {
    fn ok() -> Self {
        Outcome {
            exit_code: 0,
            messages: Vec::new(),
        }
    }

    fn flag(&mut self, code: i32, message: String) {
        self.exit_code = self.exit_code.max(code);
        self.messages.push(message);
    }
}

pub fn run(cli: Cli, argv: Vec<String>) -> Result<Outcome> {
    match cli.command {
        Command::Validate { inputs } => cmd_validate(&inputs),
        Command::Estimate(args) => cmd_estimate(&args, argv),
        Command::Remoteness(args) => cmd_remoteness(&args, argv),
        Command::Scenario(args) => cmd_scenario(&args, argv),
        Command::Synth(args) => cmd_synth(&args, argv),
    }
}

/// Parses `argv`, runs the command, prints diagnostics, and returns the exit code.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli, argv) {
        Ok(outcome) => {
            for m in &outcome.messages {
                eprintln!("{m}");
            }
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn cmd_validate(inputs: &InputArgs) -> Result<Outcome> {
    let paths = inputs.resolve()?;
    let bundle = load_bundle(&paths)?;
    let (_, report) = bundle.dataset(SectorFilter::All, AggregationLevel::YearCountry, inputs.religion_floor)?;
    println!("{report}");
    if let Some(map) = &bundle.sectors {
        for f in &bundle.flows {
            crate::datamodel::sector_of(&f.cn8, map)?;
        }
        println!("sector rules:          {}", map.len());
    }
    if !bundle.tariffs.is_empty() {
        crate::scenario::TariffSchedule::new(&bundle.tariffs)?;
        println!("tariff lines:          {}", bundle.tariffs.len());
    }
    Ok(Outcome::ok())
}

fn load_spec(path: Option<&Path>, estimator: Estimator) -> Result<ModelSpec> {
    let spec = match path {
        Some(p) => ModelSpec::from_file(p)?,
        None => ModelSpec::basic(),
    };
    Ok(spec.with_response(estimator.response_scale()))
}

fn sector_list(choice: &str, bundle: &Bundle) -> Result<Vec<Sector>> {
    if choice.eq_ignore_ascii_case("all") {
        let mut v = vec![Sector::AllSectors];
        if bundle.sectors.is_some() {
            v.extend(Sector::MAPPED);
        }
        return Ok(v);
    }
    let s: Sector = choice.parse().map_err(GravityError::InvalidSpec)?;
    Ok(vec![s])
}

/// Fills in the exporter's remoteness from bilateral trade and distances
/// when the spec needs it and no remoteness file was supplied.
pub fn ensure_remoteness(bundle: &mut Bundle, spec: &ModelSpec, exporter: &str) -> Result<()> {
    if !spec.remoteness_terms || bundle.remoteness.is_some() {
        return Ok(());
    }
    let Some(distances) = &bundle.distances else {
        return Ok(());
    };
    if bundle.bilateral.is_empty() {
        return Ok(());
    }
    let years = bilateral_years(&bundle.bilateral);
    bundle.remoteness = Some(exporter_remoteness_series(exporter, &years, &bundle.bilateral, distances)?);
    Ok(())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| GravityError::Internal(format!("thread pool: {e}")))
}

fn base_manifest(argv: Vec<String>, paths: &InputPaths, reproducible: bool) -> Result<RunManifest> {
    let mut m = RunManifest::new(argv);
    for p in paths.all() {
        m.add_input(p)?;
    }
    if !reproducible {
        m.started_unix_s = Some(unix_now());
    }
    Ok(m)
}

fn finish_manifest(mut m: RunManifest, out: &mut OutputDir<'_>, reproducible: bool) -> Result<()> {
    m.outputs = out.written.clone();
    if !reproducible {
        m.finished_unix_s = Some(unix_now());
    }
    let json = m.to_json()?;
    out.write(MANIFEST_FILE, json.as_bytes())
}

fn status_message(sector: Sector, status: FitStatus) -> Option<String> {
    match status {
        FitStatus::Ok => None,
        FitStatus::NotConverged => Some(format!("{}: fit did not converge", sector.slug())),
        FitStatus::HessianNotPositiveDefinite => Some(format!(
            "{}: HessianNotPositiveDefinite: coefficients written, standard errors withheld",
            sector.slug()
        )),
    }
}

pub fn cmd_estimate(args: &EstimateArgs, argv: Vec<String>) -> Result<Outcome> {
    let fa = &args.fit;
    let paths = args.inputs.resolve()?;
    let mut bundle = load_bundle(&paths)?;
    let spec = load_spec(fa.spec.as_deref(), fa.estimator)?;
    ensure_remoteness(&mut bundle, &spec, &fa.exporter)?;
    let options = EstimatorOptions {
        max_iterations: fa.max_iterations,
        ..EstimatorOptions::default()
    };
    options.validate()?;
    let sectors = sector_list(&fa.sector, &bundle)?;
    let level = AggregationLevel::from(fa.level);

    let results: Vec<(Sector, Result<_>)> = pool(fa.jobs)?.install(|| {
        sectors
            .par_iter()
            .map(|&sector| {
                let r = bundle
                    .dataset(SectorFilter::from(sector), level, args.inputs.religion_floor)
                    .and_then(|(data, _)| build_design(&data, &spec))
                    .and_then(|design| fit_with_status(fa.estimator, &design, &options));
                (sector, r)
            })
            .collect()
    });

    let mut out = OutputDir::create(&fa.out)?;
    let mut outcome = Outcome::ok();
    for (sector, r) in results {
        match r {
            Ok((fit, status)) => {
                out.write_fit(None, sector, &fit, status)?;
                if let Some(m) = status_message(sector, status) {
                    outcome.flag(status.exit_code(), m);
                }
            }
            Err(e) => outcome.flag(e.exit_code(), format!("{}: {e}", sector.slug())),
        }
    }
    let mut manifest = base_manifest(argv, &paths, fa.reproducible)?;
    if let Some(p) = &fa.spec {
        manifest.config_paths.push(p.display().to_string());
    }
    manifest.spec_echo = Some(spec);
    manifest.settings.insert("estimator".into(), fa.estimator.to_string());
    manifest.settings.insert("level".into(), format!("{level:?}"));
    finish_manifest(manifest, &mut out, fa.reproducible)?;
    Ok(outcome)
}

pub fn cmd_remoteness(args: &RemotenessArgs, argv: Vec<String>) -> Result<Outcome> {
    let paths = args.inputs.resolve_remoteness()?;
    let bilateral = ingest::read_bilateral(&paths.0)?;
    let distances = ingest::read_distances(&paths.1)?;
    let years = bilateral_years(&bilateral);
    let series = exporter_remoteness_series(&args.exporter, &years, &bilateral, &distances)?;

    let mut buf = Vec::new();
    ingest::write_remoteness(&mut buf, &series)?;
    let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = args
        .out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| GravityError::InvalidSpec("--out must name a file".into()))?;
    let mut out = OutputDir::create(dir)?;
    out.write(&name, &buf)?;

    let mut m = RunManifest::new(argv);
    m.add_input(&paths.0)?;
    m.add_input(&paths.1)?;
    m.settings.insert("exporter".into(), args.exporter.clone());
    if !args.reproducible {
        m.started_unix_s = Some(unix_now());
        m.finished_unix_s = m.started_unix_s;
    }
    m.outputs = out.written.clone();
    let stem = args.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(name);
    out.write(&format!("{stem}.manifest.json"), m.to_json()?.as_bytes())?;
    Ok(Outcome::ok())
}

impl InputArgs {
    fn resolve_remoteness(&self) -> Result<(PathBuf, PathBuf)> {
        let pick = |explicit: &Option<PathBuf>, name: &str| {
            explicit
                .clone()
                .or_else(|| self.data.as_ref().map(|d| d.join(name)))
                .ok_or_else(|| GravityError::InvalidSpec(format!("no path for {name}")))
        };
        Ok((pick(&self.bilateral, files::BILATERAL)?, pick(&self.distances, files::DISTANCES)?))
    }
}

pub fn cmd_scenario(args: &ScenarioArgs, argv: Vec<String>) -> Result<Outcome> {
    let fa = &args.fit;
    let paths = args.inputs.resolve()?;
    let mut bundle = load_bundle(&paths)?;
    let spec = load_spec(fa.spec.as_deref(), fa.estimator)?;
    ensure_remoteness(&mut bundle, &spec, &fa.exporter)?;
    let mut config = ScenarioConfig::new(spec.clone(), fa.estimator);
    config.options.max_iterations = fa.max_iterations;
    config.options.validate()?;
    config.level = fa.level.into();
    config.religion_floor = args.inputs.religion_floor;
    config.incidence = args.incidence;
    config.report_year = args.report_year;
    let sectors = sector_list(&fa.sector, &bundle)?;

    let inputs = ScenarioInputs {
        flows: &bundle.flows,
        attrs: &bundle.attrs,
        tariffs: &bundle.tariffs,
        sectors: bundle.sectors.as_ref(),
        remoteness: bundle.remoteness.as_deref(),
    };
    let run = pool(fa.jobs)?.install(|| run_comparison(args.kind, &inputs, &config, &sectors, args.gni))?;

    let mut out = OutputDir::create(&fa.out)?;
    let mut outcome = Outcome::ok();
    for (sector, e) in &run.failures {
        outcome.flag(e.exit_code(), format!("{}: {e}", sector.slug()));
    }
    for sf in &run.fits {
        for (prefix, fit, status) in [
            ("baseline", &sf.baseline, sf.baseline_status),
            ("soft", &sf.soft, sf.soft_status),
            (args.kind.slug(), &sf.scenario, sf.scenario_status),
        ] {
            if prefix == "soft" && args.kind == ScenarioKind::SoftBrexit {
                continue;
            }
            out.write_fit(Some(prefix), sf.sector, fit, status)?;
            if let Some(m) = status_message(sf.sector, status) {
                outcome.flag(status.exit_code(), format!("{prefix}/{m}"));
            }
        }
    }
    out.write_with(IMPACT_FILE, |b| write_impact(b, &run.report))?;
    out.write(
        SUMMARY_FILE,
        impact_markdown(&run.report, &run.soft_totals, &run.scenario_totals).as_bytes(),
    )?;
    if args.kind == ScenarioKind::LongTermHardBrexit {
        out.write_with(SUBSTITUTION_FILE, |b| write_substitution(b, &run.transformed.substitution_log))?;
    }
    if run.transformed.n_missing_rate > 0 {
        outcome.messages.push(format!(
            "warning: {} tariffed rows had no HS6 rate; rate 0 applied",
            run.transformed.n_missing_rate
        ));
    }

    let mut manifest = base_manifest(argv, &paths, fa.reproducible)?;
    if let Some(p) = &fa.spec {
        manifest.config_paths.push(p.display().to_string());
    }
    manifest.spec_echo = Some(spec);
    manifest.settings.insert("estimator".into(), fa.estimator.to_string());
    manifest.settings.insert("scenario".into(), args.kind.slug().into());
    manifest.settings.insert("incidence".into(), args.incidence.label().into());
    if let Some(g) = args.gni {
        manifest.settings.insert("gni_star_bn".into(), g.to_string());
    }
    finish_manifest(manifest, &mut out, fa.reproducible)?;
    Ok(outcome)
}

pub fn cmd_synth(args: &SynthArgs, argv: Vec<String>) -> Result<Outcome> {
    let mut config = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| GravityError::io(p, e))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| GravityError::InvalidSpec(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let bundle = synth::generate_bundle(&config)?;
    synth::write_bundle(&bundle, &args.out)?;

    let mut m = RunManifest::new(argv);
    if let Some(p) = &args.config {
        m.config_paths.push(p.display().to_string());
        m.add_input(p)?;
    }
    m.seed = Some(config.seed);
    m.rng = Some(synth::RNG_ALGORITHM.into());
    m.settings.insert(
        "synth_config".into(),
        serde_json::to_string(&config).map_err(|e| GravityError::Internal(e.to_string()))?,
    );
    let mut out = OutputDir::create(&args.out)?;
    for name in [
        files::FLOWS,
        files::ATTRS,
        files::BILATERAL,
        files::TARIFFS,
        files::SECTORS,
        files::DISTANCES,
        files::REMOTENESS,
    ] {
        let p = args.out.join(name);
        if p.exists() {
            out.written.insert(name.into(), crate::report::sha256_file(&p)?);
        }
    }
    if !args.reproducible {
        m.started_unix_s = Some(unix_now());
    }
    finish_manifest(m, &mut out, args.reproducible)?;
    Ok(Outcome::ok())
}
