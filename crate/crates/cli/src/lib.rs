//! The `stn` command-line tool.

pub mod config;
pub mod wav;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use stn::decompose::{analyze, decompose, MaskParams};
use stn::masks::TransitionBounds;
use stn::noise::noise_tonalness_histogram;
use stn::optimize::{make_synthetic_mixture, optimize_stage1_with, optimize_stage2_with};
use stn::spectral::{stft, StftConfig};
use stn::structure_tensor::st_features;
use stn::tsm::tsm_stretch;
use stn::{Error, Result};

use config::{load_config_file, RunConfig};
use wav::{read_wav, write_wav, AudioBuffer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides any configuration key, e.g. `--set stage1.window=4096`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a WAV file into sines, transients and noise.
    Decompose {
        input: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        stages: Option<usize>,
        /// Output prefix; defaults to the input path without extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        bit_depth: Option<String>,
    },
    /// Time-stretch a WAV file.
    Tsm {
        input: PathBuf,
        #[arg(long)]
        factor: Option<f64>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; defaults to `<input stem>_tsm.wav`.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        bit_depth: Option<String>,
    },
    /// Tonalness histogram of white noise, as CSV.
    NoiseHist {
        /// Window length; repeat for several. Defaults to 8192 and 512.
        #[arg(long)]
        window: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Length of each instance, seconds.
        #[arg(long, default_value_t = 1.0)]
        length: f64,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Search enhanced-mask transition bounds on a synthetic mixture.
    OptimizeBounds {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Seed of the search.
        #[arg(long)]
        seed: Option<u64>,
        /// Seed of the synthetic mixture.
        #[arg(long, default_value_t = 0)]
        mix_seed: u64,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        /// CSV of the best fitness per generation; stdout if omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Where to write the chosen bounds as a config fragment; stderr if
        /// omitted.
        #[arg(long)]
        fragment: Option<PathBuf>,
    },
    /// Write the masks of one stage as CSV matrices (bins × frames).
    MasksDump {
        input: PathBuf,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        stages: Option<usize>,
        #[arg(long, default_value_t = 1)]
        stage: usize,
        /// Also write the structure-tensor features of the stage input.
        #[arg(long)]
        features: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Parser, Debug)]
#[command(name = "stn", version, about = "Sines/transients/noise decomposition and time stretching")]
struct Invocation {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_) => EXIT_USAGE,
        Error::Format { .. } | Error::Io { .. } => EXIT_IO,
        Error::Numeric(_) => EXIT_NUMERIC,
    }
}

/// Runs the tool on `argv` (including the program name) and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let inv = match Invocation::try_parse_from(argv) {
        Ok(inv) => inv,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(inv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn flag<T: ToString>(map: &mut BTreeMap<String, String>, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), v.to_string());
    }
}

fn load(common: &Common, flags: BTreeMap<String, String>) -> Result<RunConfig> {
    let file = match &common.config {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    let mut cli = BTreeMap::new();
    for item in &common.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("--set expects KEY=VALUE, got {item:?}")))?;
        cli.insert(k.trim().to_string(), v.trim().to_string());
    }
    cli.extend(flags);
    RunConfig::new(&[file, cli])
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn check_finite(what: &str, x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} contains non-finite samples")))
    }
}

fn read_input(path: &Path) -> Result<AudioBuffer> {
    let buf = read_wav(path)?;
    for c in &buf.channels {
        check_finite("input", c)?;
    }
    if buf.frames() == 0 {
        return Err(Error::Parameter(format!("{} has no samples", path.display())));
    }
    Ok(buf)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn default_prefix(input: &Path) -> PathBuf {
    input.with_extension("")
}

fn run(inv: Invocation) -> Result<()> {
    let common = inv.common;
    match inv.command {
        Command::Decompose {
            input,
            method,
            stages,
            output,
            bit_depth,
        } => {
            let mut flags = BTreeMap::new();
            flag(&mut flags, "method", &method);
            flag(&mut flags, "stages", &stages);
            flag(&mut flags, "output.bit_depth", &bit_depth);
            let cfg = load(&common, flags)?;
            let audio = read_input(&input)?;
            let plan = cfg.plan(audio.sample_rate)?;
            let mut parts: [Vec<Vec<f64>>; 3] = Default::default();
            for ch in &audio.channels {
                let c = decompose(ch, &plan)?;
                for (slot, v) in parts.iter_mut().zip([c.sines, c.transients, c.noise]) {
                    check_finite("decomposition", &v)?;
                    slot.push(v);
                }
            }
            let prefix = output.unwrap_or_else(|| default_prefix(&input));
            let depth = cfg.bit_depth()?;
            for (name, channels) in ["sines", "transients", "noise"].iter().zip(parts) {
                let buf = AudioBuffer::new(channels, audio.sample_rate, depth)?;
                write_wav(with_suffix(&prefix, &format!("_{name}.wav")), &buf, depth)?;
            }
            Ok(())
        }
        Command::Tsm {
            input,
            factor,
            method,
            seed,
            output,
            bit_depth,
        } => {
            let mut flags = BTreeMap::new();
            flag(&mut flags, "tsm.factor", &factor);
            flag(&mut flags, "method", &method);
            flag(&mut flags, "tsm.seed", &seed);
            flag(&mut flags, "output.bit_depth", &bit_depth);
            let cfg = load(&common, flags)?;
            let audio = read_input(&input)?;
            let req = cfg.tsm_request(audio.sample_rate)?;
            let channels = audio
                .channels
                .iter()
                .map(|ch| {
                    let y = tsm_stretch(ch, &req)?;
                    check_finite("stretched signal", &y)?;
                    Ok(y)
                })
                .collect::<Result<Vec<_>>>()?;
            let out = output.unwrap_or_else(|| with_suffix(&default_prefix(&input), "_tsm.wav"));
            let depth = cfg.bit_depth()?;
            write_wav(out, &AudioBuffer::new(channels, audio.sample_rate, depth)?, depth)
        }
        Command::NoiseHist {
            window,
            instances,
            length,
            bins,
            seed,
            output,
        } => {
            let cfg = load(&common, BTreeMap::new())?;
            let fs = cfg.sample_rate()?;
            let median = cfg.median()?;
            let windows = if window.is_empty() { vec![8192, 512] } else { window };
            let mut csv = String::from("window_length,bin_center,normalized_count\n");
            for l in windows {
                let stft_cfg = StftConfig::with_quarter_hop(l, fs)?;
                let h = noise_tonalness_histogram(instances, length, &stft_cfg, &median, bins, seed)?;
                for (c, m) in h.bin_centers().iter().zip(&h.normalized_counts) {
                    csv.push_str(&format!("{l},{c},{m}\n"));
                }
            }
            emit(output.as_deref(), &csv)
        }
        Command::OptimizeBounds {
            stage,
            seed,
            mix_seed,
            population,
            generations,
            output,
            fragment,
        } => {
            let mut flags = BTreeMap::new();
            flag(&mut flags, "ga.seed", &seed);
            flag(&mut flags, "ga.population", &population);
            flag(&mut flags, "ga.generations", &generations);
            flags.insert("method".into(), "enhanced".into());
            flags.insert("stages".into(), "2".into());
            let cfg = load(&common, flags)?;
            let fs = cfg.sample_rate()?;
            let plan = cfg.plan(fs)?;
            let ga = cfg.ga()?;
            let mix = make_synthetic_mixture(mix_seed, fs)?;
            let stage1 = match plan.stage1.params {
                MaskParams::Enhanced(b) => b,
                _ => unreachable!("plan method is enhanced"),
            };
            let (history, b1, b2) = if stage == 1 {
                let set = optimize_stage1_with(&mix, &plan, &ga)?;
                let best = set.history.last().map(|g| g.best).unwrap_or(stage1);
                (set.history, best, None)
            } else {
                let set = optimize_stage2_with(&mix, &plan, stage1, &ga)?;
                let (b1, b2) = set.final_set.expect("stage-2 search sets the final pair");
                (set.history, b1, Some(b2))
            };
            let mut csv = String::from("generation,best_fitness,beta_u,beta_l\n");
            for g in &history {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    g.generation,
                    g.best_fitness,
                    g.best.upper(),
                    g.best.lower()
                ));
            }
            emit(output.as_deref(), &csv)?;
            let frag = config_fragment(b1, b2);
            match fragment {
                Some(p) => std::fs::write(&p, frag).map_err(io_err(&p)),
                None => {
                    eprint!("{frag}");
                    Ok(())
                }
            }
        }
        Command::MasksDump {
            input,
            method,
            stages,
            stage,
            features,
            output,
        } => {
            let mut flags = BTreeMap::new();
            flag(&mut flags, "method", &method);
            flag(&mut flags, "stages", &stages);
            let cfg = load(&common, flags)?;
            let audio = read_input(&input)?;
            let plan = cfg.plan(audio.sample_rate)?;
            if stage == 0 || stage > plan.stages() {
                return Err(Error::Parameter(format!(
                    "stage {stage} does not exist in a {}-stage plan",
                    plan.stages()
                )));
            }
            let prefix = output.unwrap_or_else(|| default_prefix(&input));
            let multi = audio.channels.len() > 1;
            for (ci, ch) in audio.channels.iter().enumerate() {
                let base = if multi {
                    with_suffix(&prefix, &format!("_ch{ci}_stage{stage}"))
                } else {
                    with_suffix(&prefix, &format!("_stage{stage}"))
                };
                let (analysis, _) = analyze(ch, &plan)?;
                let (stft_cfg, masks) = if stage == 1 {
                    analysis.stage1.clone()
                } else {
                    analysis.stage2.clone().expect("stage count checked")
                };
                write_matrix(&with_suffix(&base, "_S.csv"), &masks.sines)?;
                write_matrix(&with_suffix(&base, "_T.csv"), &masks.transients)?;
                write_matrix(&with_suffix(&base, "_N.csv"), &masks.noise)?;
                if features {
                    let stage_input = analysis.stage_input(ch, stage)?;
                    let f = st_features(&stft(&stage_input, &stft_cfg)?, &cfg.st_config()?)?;
                    write_matrix(&with_suffix(&base, "_orientation.csv"), &f.orientation)?;
                    write_matrix(&with_suffix(&base, "_anisotropy.csv"), &f.anisotropy)?;
                    write_matrix(&with_suffix(&base, "_rate.csv"), &f.rate)?;
                }
            }
            Ok(())
        }
    }
}

fn config_fragment(stage1: TransitionBounds, stage2: Option<TransitionBounds>) -> String {
    let mut s = format!(
        "stage1.beta_upper = {}\nstage1.beta_lower = {}\n",
        stage1.upper(),
        stage1.lower()
    );
    if let Some(b) = stage2 {
        s.push_str(&format!(
            "stage2.beta_upper = {}\nstage2.beta_lower = {}\n",
            b.upper(),
            b.lower()
        ));
    }
    s
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes())
                .and_then(|_| lock.flush())
                .map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("bin");
    for j in 0..m.ncols() {
        header.push_str(&format!(",frame{j}"));
    }
    writeln!(w, "{header}").map_err(io_err(path))?;
    for (k, row) in m.rows().into_iter().enumerate() {
        let mut line = k.to_string();
        for v in row {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
