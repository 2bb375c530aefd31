//! Subcommand implementations.

use crate::config::{Config, ConfigError};
use crate::output::{out_path, parse_grid, sanitize_fragment, write_atomic};
use spinamp_core::constants::{
    DEFAULT_HERMITE_BETA, DEFAULT_HERMITE_TAU_WINDOW, DEFAULT_MAX_SPINS,
};
use spinamp_core::{
    build_timeline, calibrate_duration, cycle_survival, excitation_profile, mixing, run_protocol,
    run_trajectory, DensityMatrix, DifferenceCurve, Error as CoreError, EvolutionSchedule,
    ExactProtocol, FieldPoint, FlipFlopMode, GainCurve, HamiltonianSettings, MixingProtocol,
    ProtocolConfig, PulseFamily, ResponseFactor, Segment, ShapedPulse, SpinSystem, Survival,
    T1Map, T1Point,
};
use std::fmt;
use std::path::{Path, PathBuf};

/// Errors split by exit code: configuration problems exit 2, numerical or
/// I/O failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failure(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn core_err(e: CoreError) -> CliError {
    match e {
        CoreError::CalibrationFailed(_)
        | CoreError::NonHermitian { .. }
        | CoreError::NonUnitary { .. }
        | CoreError::NonPhysicalObservable { .. }
        | CoreError::InvalidState(_) => CliError::Failure(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Failure(format!("i/o: {e}"))
}

pub struct Ctx {
    pub out_dir: PathBuf,
    pub digits: usize,
    pub jobs: usize,
}

impl Ctx {
    fn write(&self, name: &str, content: &str) -> Result<PathBuf, CliError> {
        let path = out_path(&self.out_dir, name);
        write_atomic(&path, content).map_err(io_err)?;
        Ok(path)
    }
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

// ---------------------------------------------------------------------------
// gain

pub fn cmd_gain(
    ctx: &Ctx,
    m: u32,
    n_max: u32,
    mode: &str,
    eta: f64,
    eps0: f64,
) -> Result<(), CliError> {
    if m < 1 {
        return Err(CliError::Config("pool size m must be >= 1".into()));
    }
    let (name, csv) = match mode {
        "closed" => (
            format!("gain_m{m}_closed.csv"),
            GainCurve::closed_form(m, n_max).to_csv(ctx.digits),
        ),
        "iterate" => (
            format!("gain_m{m}_iterate.csv"),
            DifferenceCurve::iterated(m, n_max, eps0, eta)
                .map_err(core_err)?
                .to_csv(ctx.digits),
        ),
        other => {
            return Err(CliError::Config(format!(
                "unknown mode '{other}', expected closed or iterate"
            )))
        }
    };
    let path = ctx.write(&name, &csv)?;
    announce(&[path]);
    Ok(())
}

// ---------------------------------------------------------------------------
// pulses

pub struct PulseArgs {
    pub family: String,
    pub peak_khz: f64,
    pub n_samples: usize,
    pub beta: f64,
    pub tau_window: f64,
    pub duration_s: Option<f64>,
}

impl PulseArgs {
    fn family(&self) -> Result<PulseFamily, CliError> {
        match self.family.as_str() {
            "hermite" => Ok(PulseFamily::Hermite { beta: self.beta, tau_window: self.tau_window }),
            "constant" => Ok(PulseFamily::Constant),
            other => Err(CliError::Config(format!(
                "unknown pulse family '{other}', expected hermite or constant"
            ))),
        }
    }

    /// Build the pulse, calibrating the duration when none is given.
    fn build(&self) -> Result<ShapedPulse, CliError> {
        let family = self.family()?;
        let duration = match self.duration_s {
            Some(d) => d,
            None => calibrate_duration(&family, self.peak_khz, self.n_samples).map_err(core_err)?,
        };
        family.build(self.peak_khz, duration, self.n_samples).map_err(core_err)
    }

    fn tag(&self) -> String {
        sanitize_fragment(&format!("{}{}khz", self.family, self.peak_khz))
    }
}

pub fn cmd_pulse_profile(ctx: &Ctx, args: &PulseArgs, offsets: &str) -> Result<(), CliError> {
    let offsets = parse_offsets(offsets)?;
    let pulse = args.build()?;
    let profile = excitation_profile(&pulse, &offsets).map_err(core_err)?;
    let tag = args.tag();
    let p1 = ctx.write(&format!("profile_{tag}.csv"), &profile.to_csv(ctx.digits))?;
    let p2 = ctx.write(&format!("pulse_{tag}.csv"), &pulse.to_csv(ctx.digits))?;
    announce(&[p1, p2]);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_spectrum(
    ctx: &Ctx,
    args: &PulseArgs,
    offsets: &str,
    m: u32,
    steps: u32,
    eps0: f64,
    eta: f64,
) -> Result<(), CliError> {
    let offsets = parse_offsets(offsets)?;
    let pulse = args.build()?;
    let profile = excitation_profile(&pulse, &offsets).map_err(core_err)?;
    let rows = mixing::response_spectrum(&profile.response_factors(), m, steps, eps0, eta)
        .map_err(core_err)?;
    let name = format!("spectrum_{}_N{steps}.csv", args.tag());
    let path = ctx.write(&name, &mixing::spectrum_csv(&rows, ctx.digits))?;
    announce(&[path]);
    Ok(())
}

fn parse_offsets(spec: &str) -> Result<Vec<f64>, CliError> {
    let tokens = parse_grid(spec)?;
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad offset '{t}'")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// exact trajectories

const EXACT_SCHEMA: &[(&str, &[&str])] = &[
    ("system", &["file"]),
    (
        "protocol",
        &[
            "duration_s",
            "sample_interval_s",
            "field_g",
            "frame_mhz",
            "flip_flop",
            "threshold_ratio",
            "init_polarizations",
        ],
    ),
    (
        "pulse",
        &["family", "peak_khz", "n_samples", "beta", "tau_window", "duration_s", "offset_khz", "target"],
    ),
    ("output", &["prefix"]),
];

fn load_system(cfg: &Config, config_dir: &Path) -> Result<SpinSystem, CliError> {
    let file = cfg.require("system", "file")?;
    let path = config_dir.join(&file.value);
    let system = SpinSystem::load(&path).map_err(core_err)?;
    if system.site_count() > DEFAULT_MAX_SPINS {
        return Err(CliError::Config(format!(
            "system has {} spins, above the exact-engine limit of {DEFAULT_MAX_SPINS}",
            system.site_count()
        )));
    }
    Ok(system)
}

fn pulse_args_from_config(cfg: &Config) -> Result<PulseArgs, CliError> {
    Ok(PulseArgs {
        family: cfg
            .get_str("pulse", "family")
            .ok_or_else(|| ConfigError::general("missing key 'family' in [pulse]"))?
            .to_string(),
        peak_khz: cfg.require_f64("pulse", "peak_khz")?,
        n_samples: cfg.get_u32("pulse", "n_samples")?.unwrap_or(128) as usize,
        beta: cfg.get_f64("pulse", "beta")?.unwrap_or(DEFAULT_HERMITE_BETA),
        tau_window: cfg.get_f64("pulse", "tau_window")?.unwrap_or(DEFAULT_HERMITE_TAU_WINDOW),
        duration_s: cfg.get_f64("pulse", "duration_s")?,
    })
}

fn parse_flip_flop(cfg: &Config) -> Result<FlipFlopMode, CliError> {
    match cfg.get_str("protocol", "flip_flop") {
        None | Some("auto") => Ok(FlipFlopMode::Auto),
        Some("on") => Ok(FlipFlopMode::ForceOn),
        Some("off") => Ok(FlipFlopMode::ForceOff),
        Some(other) => Err(CliError::Config(format!(
            "bad flip_flop '{other}', expected auto, on, or off"
        ))),
    }
}

pub fn cmd_exact(ctx: &Ctx, config_path: &Path) -> Result<(), CliError> {
    let cfg = Config::load(config_path)?;
    cfg.validate_schema(EXACT_SCHEMA)?;
    let config_dir = config_path.parent().unwrap_or(Path::new("."));
    let system = load_system(&cfg, config_dir)?;

    let duration_s = cfg.require_f64("protocol", "duration_s")?;
    let sample_interval_s = cfg.require_f64("protocol", "sample_interval_s")?;
    let field = FieldPoint::gauss(cfg.require_f64("protocol", "field_g")?).map_err(core_err)?;
    let mut settings = HamiltonianSettings::new(field).with_mode(parse_flip_flop(&cfg)?);
    if let Some(frame) = cfg.get_f64("protocol", "frame_mhz")? {
        settings = settings.with_frame_mhz(frame);
    }
    if let Some(th) = cfg.get_f64("protocol", "threshold_ratio")? {
        settings = settings.with_threshold(th);
    }

    let pol_spec = cfg.require("protocol", "init_polarizations")?;
    let pols = parse_polarizations(&pol_spec.value, system.site_count())
        .map_err(|m| ConfigError::at(pol_spec.line, m))?;
    let rho0 = DensityMatrix::thermal_product(&pols).map_err(core_err)?;

    let mut segments = Vec::new();
    if cfg.has_section("pulse") {
        let args = pulse_args_from_config(&cfg)?;
        let offset_khz = cfg.get_f64("pulse", "offset_khz")?.unwrap_or(0.0);
        let pulse = args.build()?.with_carrier_offset(offset_khz);
        let target = match cfg.get_str("pulse", "target") {
            Some(label) => label.to_string(),
            None => system.site_species(system.rare_index()).label.clone(),
        };
        segments.push(Segment::Pulse { pulse, target_species: target, settings: settings.clone() });
    }
    segments.push(Segment::Free { duration_s, settings });
    let schedule = EvolutionSchedule::new(segments).map_err(core_err)?;

    let trajectory =
        run_trajectory(&system, &rho0, &schedule, sample_interval_s).map_err(core_err)?;
    let prefix = sanitize_fragment(cfg.get_str("output", "prefix").unwrap_or("run"));
    let path = ctx.write(&format!("{prefix}_trajectory.csv"), &trajectory.to_csv(ctx.digits))?;
    announce(&[path]);
    Ok(())
}

fn parse_polarizations(spec: &str, sites: usize) -> Result<Vec<f64>, String> {
    let values: Result<Vec<f64>, _> =
        spec.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let values = values.map_err(|_| format!("bad init_polarizations '{spec}'"))?;
    match values.len() {
        1 => Ok(vec![values[0]; sites]),
        n if n == sites => Ok(values),
        n => Err(format!("init_polarizations has {n} entries for {sites} sites")),
    }
}

// ---------------------------------------------------------------------------
// protocols and sweeps

const PROTOCOL_SCHEMA: &[(&str, &[&str])] = &[
    ("system", &["m", "eps0", "file"]),
    (
        "pulse",
        &["f", "family", "peak_khz", "n_samples", "beta", "tau_window", "duration_s", "offset_khz", "target"],
    ),
    (
        "timeline",
        &[
            "eta",
            "shuttle_up_s",
            "low_dwell_s",
            "shuttle_down_s",
            "high_dwell_s",
            "low_field_g",
            "high_field_g",
            "t1_low_s",
            "t1_high_s",
            "t1_interpolate",
        ],
    ),
    ("protocol", &["backend", "steps", "q", "threshold_ratio"]),
    ("output", &["prefix"]),
];

const TIMING_KEYS: [&str; 6] = [
    "shuttle_up_s",
    "low_dwell_s",
    "shuttle_down_s",
    "high_dwell_s",
    "low_field_g",
    "high_field_g",
];

fn survival_from_config(cfg: &Config) -> Result<Survival, CliError> {
    if let Some(eta) = cfg.get_f64("timeline", "eta")? {
        return Ok(Survival::Eta(eta));
    }
    for key in TIMING_KEYS {
        cfg.require("timeline", key)?;
    }
    let timeline = build_timeline(
        cfg.require_f64("timeline", "shuttle_up_s")?,
        cfg.require_f64("timeline", "low_dwell_s")?,
        cfg.require_f64("timeline", "shuttle_down_s")?,
        cfg.require_f64("timeline", "high_dwell_s")?,
        FieldPoint::gauss(cfg.require_f64("timeline", "low_field_g")?).map_err(core_err)?,
        FieldPoint::gauss(cfg.require_f64("timeline", "high_field_g")?).map_err(core_err)?,
    )
    .map_err(core_err)?;
    let t1 = T1Map::two_point(
        T1Point {
            field_gauss: cfg.require_f64("timeline", "low_field_g")?,
            t1_s: cfg.require_f64("timeline", "t1_low_s")?,
        },
        T1Point {
            field_gauss: cfg.require_f64("timeline", "high_field_g")?,
            t1_s: cfg.require_f64("timeline", "t1_high_s")?,
        },
    )
    .map_err(core_err)?
    .with_log_interpolation(cfg.get_bool("timeline", "t1_interpolate")?.unwrap_or(false));
    Ok(Survival::FromTimeline { timeline, t1 })
}

fn build_protocol(cfg: &Config, config_dir: &Path) -> Result<ProtocolConfig, CliError> {
    cfg.validate_schema(PROTOCOL_SCHEMA)?;
    let backend = cfg
        .get_str("protocol", "backend")
        .ok_or_else(|| ConfigError::general("missing key 'backend' in [protocol]"))?;
    let steps = cfg.require_u32("protocol", "steps")?;
    let q = cfg.get_f64("protocol", "q")?.unwrap_or(1.0);
    let survival = survival_from_config(cfg)?;

    match backend {
        "mixing" => {
            let m = cfg.require_u32("system", "m")?;
            let eps0 = cfg.require_f64("system", "eps0")?;
            let response = if let Some(f) = cfg.get_f64("pulse", "f")? {
                if cfg.has_key("pulse", "family") {
                    return Err(CliError::Config(
                        "give either 'f' or a pulse family in [pulse], not both".into(),
                    ));
                }
                ResponseFactor::Explicit(f)
            } else if cfg.has_section("pulse") {
                let args = pulse_args_from_config(cfg)?;
                let offset_khz = cfg.get_f64("pulse", "offset_khz")?.unwrap_or(0.0);
                ResponseFactor::FromPulse { pulse: args.build()?, offset_khz }
            } else {
                return Err(CliError::Config(
                    "mixing backend needs a [pulse] section with 'f' or a pulse family".into(),
                ));
            };
            Ok(ProtocolConfig::Mixing(MixingProtocol { m, eps0, steps, q, response, survival }))
        }
        "exact" => {
            let system = load_system(cfg, config_dir)?;
            let eps0 = cfg.require_f64("system", "eps0")?;
            if !cfg.has_section("pulse") || !cfg.has_key("pulse", "family") {
                return Err(CliError::Config(
                    "exact backend needs a [pulse] section with a pulse family".into(),
                ));
            }
            let args = pulse_args_from_config(cfg)?;
            let offset_khz = cfg.get_f64("pulse", "offset_khz")?.unwrap_or(0.0);
            let pulse = args.build()?.with_carrier_offset(offset_khz);
            let target = cfg.get_str("pulse", "target").map(|s| s.to_string());
            let low_field =
                FieldPoint::gauss(cfg.require_f64("timeline", "low_field_g")?).map_err(core_err)?;
            let high_field = FieldPoint::gauss(cfg.require_f64("timeline", "high_field_g")?)
                .map_err(core_err)?;
            let low_dwell_s = cfg.require_f64("timeline", "low_dwell_s")?;
            let threshold_ratio = cfg.get_f64("protocol", "threshold_ratio")?.unwrap_or(1.0);
            Ok(ProtocolConfig::Exact(ExactProtocol {
                system,
                eps0,
                steps,
                pulse,
                target_species: target,
                low_field,
                high_field,
                low_dwell_s,
                survival,
                threshold_ratio,
            }))
        }
        other => Err(CliError::Config(format!(
            "bad backend '{other}', expected mixing or exact"
        ))),
    }
}

fn run_protocol_to_files(
    ctx: &Ctx,
    cfg: &Config,
    config_dir: &Path,
    suffix: &str,
) -> Result<Vec<PathBuf>, CliError> {
    let protocol = build_protocol(cfg, config_dir)?;
    let result = run_protocol(&protocol).map_err(core_err)?;
    let prefix = sanitize_fragment(cfg.get_str("output", "prefix").unwrap_or("run"));
    let base = if suffix.is_empty() { prefix } else { format!("{prefix}_{suffix}") };
    let csv_path = ctx.write(&format!("{base}_protocol.csv"), &result.to_csv(ctx.digits))?;
    let summary_path =
        ctx.write(&format!("{base}_summary.txt"), &result.summary_text(ctx.digits))?;
    Ok(vec![csv_path, summary_path])
}

/// Flag overrides applied on top of the parsed config.
#[derive(Debug, Default, Clone)]
pub struct ProtocolOverrides {
    pub steps: Option<u32>,
    pub m: Option<u32>,
    pub eps0: Option<f64>,
    pub eta: Option<f64>,
    pub q: Option<f64>,
    pub f: Option<f64>,
    pub offset_khz: Option<f64>,
}

impl ProtocolOverrides {
    fn apply(&self, cfg: &mut Config) {
        if let Some(v) = self.steps {
            cfg.set("protocol", "steps", v.to_string());
        }
        if let Some(v) = self.m {
            cfg.set("system", "m", v.to_string());
        }
        if let Some(v) = self.eps0 {
            cfg.set("system", "eps0", v.to_string());
        }
        if let Some(v) = self.eta {
            cfg.set("timeline", "eta", v.to_string());
        }
        if let Some(v) = self.q {
            cfg.set("protocol", "q", v.to_string());
        }
        if let Some(v) = self.f {
            cfg.set("pulse", "f", v.to_string());
        }
        if let Some(v) = self.offset_khz {
            cfg.set("pulse", "offset_khz", v.to_string());
        }
    }
}

pub fn cmd_protocol(
    ctx: &Ctx,
    config_path: &Path,
    overrides: &ProtocolOverrides,
) -> Result<(), CliError> {
    let mut cfg = Config::load(config_path)?;
    overrides.apply(&mut cfg);
    let config_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let paths = run_protocol_to_files(ctx, &cfg, &config_dir, "")?;
    announce(&paths);
    Ok(())
}

const SWEEPABLE_KEYS: [&str; 8] = [
    "system.m",
    "system.eps0",
    "protocol.steps",
    "protocol.q",
    "timeline.eta",
    "pulse.f",
    "pulse.offset_khz",
    "pulse.peak_khz",
];

struct SweepAxis {
    section: String,
    key: String,
    values: Vec<String>,
}

fn parse_sweep_param(spec: &str) -> Result<SweepAxis, CliError> {
    let (key, grid) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("bad --param '{spec}', expected key=grid")))?;
    let key = key.trim();
    if !SWEEPABLE_KEYS.contains(&key) {
        return Err(CliError::Config(format!(
            "'{key}' is not sweepable; choose one of {SWEEPABLE_KEYS:?}"
        )));
    }
    let (section, leaf) = key.split_once('.').unwrap();
    let values = parse_grid(grid)?;
    Ok(SweepAxis { section: section.to_string(), key: leaf.to_string(), values })
}

pub fn cmd_sweep(ctx: &Ctx, config_path: &Path, params: &[String]) -> Result<(), CliError> {
    if params.is_empty() {
        return Err(CliError::Config("empty sweep".into()));
    }
    if params.len() > 2 {
        return Err(CliError::Config("sweeps nest at most two parameters".into()));
    }
    let axes: Vec<SweepAxis> =
        params.iter().map(|p| parse_sweep_param(p)).collect::<Result<_, _>>()?;
    let base = Config::load(config_path)?;
    let config_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();

    // cartesian product over one or two axes
    let mut points: Vec<Vec<(usize, String)>> = Vec::new();
    match axes.len() {
        1 => {
            for v in &axes[0].values {
                points.push(vec![(0, v.clone())]);
            }
        }
        _ => {
            for v0 in &axes[0].values {
                for v1 in &axes[1].values {
                    points.push(vec![(0, v0.clone()), (1, v1.clone())]);
                }
            }
        }
    }

    let run_point = |assignment: &Vec<(usize, String)>| -> Result<Vec<PathBuf>, CliError> {
        let mut cfg = base.clone();
        let mut suffix_parts = Vec::new();
        for (axis_idx, value) in assignment {
            let axis = &axes[*axis_idx];
            cfg.set(&axis.section, &axis.key, value.clone());
            suffix_parts.push(format!("{}{}", axis.key, sanitize_fragment(value)));
        }
        run_protocol_to_files(ctx, &cfg, &config_dir, &suffix_parts.join("_"))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs)
        .build()
        .map_err(|e| CliError::Failure(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<PathBuf>, CliError>> = pool.install(|| {
        use rayon::prelude::*;
        points.par_iter().map(run_point).collect()
    });
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    announce(&all);
    Ok(())
}

// ---------------------------------------------------------------------------
// eta

#[allow(clippy::too_many_arguments)]
pub fn cmd_eta(
    ctx: &Ctx,
    shuttle_up_s: f64,
    low_dwell_s: f64,
    shuttle_down_s: f64,
    high_dwell_s: f64,
    low_field_g: f64,
    high_field_g: f64,
    t1_low_s: f64,
    t1_high_s: f64,
    log_interpolate: bool,
) -> Result<(), CliError> {
    let timeline = build_timeline(
        shuttle_up_s,
        low_dwell_s,
        shuttle_down_s,
        high_dwell_s,
        FieldPoint::gauss(low_field_g).map_err(core_err)?,
        FieldPoint::gauss(high_field_g).map_err(core_err)?,
    )
    .map_err(core_err)?;
    let t1 = T1Map::two_point(
        T1Point { field_gauss: low_field_g, t1_s: t1_low_s },
        T1Point { field_gauss: high_field_g, t1_s: t1_high_s },
    )
    .map_err(core_err)?
    .with_log_interpolation(log_interpolate);
    let eta = cycle_survival(&timeline, &t1).map_err(core_err)?;
    println!("{}", spinamp_core::report::format_sig(eta, ctx.digits));
    Ok(())
}
