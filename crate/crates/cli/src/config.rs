//! Flat `key = value` configuration files with `#` comments, plus
//! command-line overrides of the same keys.
//!
//! Values from a file are applied first, then `--set key=value` overrides in
//! order. Unknown keys, syntax errors and type mismatches are reported with
//! the offending key and line.

use std::path::Path;

use windarb_core::error::{Error, Result};
use windarb_core::evaluation::{ArbitrationMethod, MlpArch, PipelineConfig, ProtocolConfig};
use windarb_core::mlp::Activation;
use windarb_core::persist::read_text;

/// One configuration entry and where it came from (for error messages).
#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: String,
}

/// Parses a config file into entries, preserving order.
pub fn parse_file(path: &Path) -> Result<Vec<Entry>> {
    let name = path.display().to_string();
    let text = read_text(path)?;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.split_once('#') {
            Some((before, _)) => before.trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Malformed {
                path: name.clone(),
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        entries.push(Entry {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            origin: format!("{name}:{}", idx + 1),
        });
    }
    Ok(entries)
}

/// Parses repeated `--set key=value` arguments.
pub fn parse_overrides(pairs: &[String]) -> Result<Vec<Entry>> {
    pairs
        .iter()
        .map(|pair| {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set `{pair}` is not of the form key=value"))
            })?;
            Ok(Entry {
                key: key.trim().to_string(),
                value: value.trim().to_string(),
                origin: format!("--set {pair}"),
            })
        })
        .collect()
}

/// The full run configuration: pipeline plus protocol grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub protocol: ProtocolConfig,
}

/// Applies defaults, then the file entries, then the overrides. Generator
/// keys are applied first so the default feature bands always track the
/// final generator; explicit `features.*` keys then override those.
pub fn build_settings(file: Option<&Path>, overrides: &[String]) -> Result<Settings> {
    let mut entries = match file {
        Some(path) => parse_file(path)?,
        None => Vec::new(),
    };
    entries.extend(parse_overrides(overrides)?);
    let mut settings = Settings::default();
    let mut grid_touched = false;
    let is_generator = |e: &&Entry| e.key.starts_with("generator.");
    for entry in entries.iter().filter(is_generator) {
        apply(&mut settings, entry, &mut grid_touched)?;
    }
    settings.pipeline.features =
        windarb_core::first_stage::FeatureConfig::for_generator(&settings.pipeline.generator);
    for entry in entries.iter().filter(|e| !is_generator(e)) {
        apply(&mut settings, entry, &mut grid_touched)?;
    }
    Ok(settings)
}

fn apply(settings: &mut Settings, entry: &Entry, grid_touched: &mut bool) -> Result<()> {
    let bad = |what: &str| {
        Error::Config(format!(
            "bad value `{}` for `{}` ({what}) at {}",
            entry.value, entry.key, entry.origin
        ))
    };
    let value = entry.value.as_str();
    let parse_f64 = || -> Result<f64> { value.parse().map_err(|_| bad("expected a number")) };
    let parse_usize = || -> Result<usize> { value.parse().map_err(|_| bad("expected a non-negative integer")) };
    let parse_u64 = || -> Result<u64> { value.parse().map_err(|_| bad("expected a non-negative integer")) };
    let parse_bool = || -> Result<bool> {
        match value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(bad("expected true or false")),
        }
    };
    let parse_activation = || -> Result<Activation> {
        value.parse().map_err(|_| bad("expected relu, elu or gelu"))
    };

    let pipe = &mut settings.pipeline;
    match entry.key.as_str() {
        "generator.sample_rate_hz" => pipe.generator.sample_rate_hz = parse_f64()?,
        "generator.channels" => pipe.generator.channels = parse_usize()?,
        "generator.duration_s" => pipe.generator.duration_s = parse_f64()?,
        "generator.n_normal_train" => pipe.generator.n_normal_train = parse_usize()?,
        "generator.n_abnormal_train" => pipe.generator.n_abnormal_train = parse_usize()?,
        "generator.n_normal_test" => pipe.generator.n_normal_test = parse_usize()?,
        "generator.n_abnormal_test" => pipe.generator.n_abnormal_test = parse_usize()?,
        "generator.event_rate_per_recording" => pipe.generator.event_rate_per_recording = parse_f64()?,
        "generator.event_duration_s" => pipe.generator.event_duration_s = parse_f64()?,
        "generator.event_snr" => pipe.generator.event_snr = parse_f64()?,
        "generator.event_freq_hz" => pipe.generator.event_freq_hz = parse_f64()?,
        "generator.background_band_lo_hz" => pipe.generator.background.band_lo_hz = parse_f64()?,
        "generator.background_band_hi_hz" => pipe.generator.background.band_hi_hz = parse_f64()?,
        "generator.background_sinusoids" => pipe.generator.background.n_sinusoids = parse_usize()?,
        "generator.background_sinusoid_amplitude" => {
            pipe.generator.background.sinusoid_amplitude = parse_f64()?
        }
        "generator.background_white_noise_std" => {
            pipe.generator.background.white_noise_std = parse_f64()?
        }
        "generator.rng_seed" => pipe.generator.rng_seed = parse_u64()?,
        "windowing.window_len_s" => {
            // the sweep list collapses to this single length
            settings.protocol.window_lengths_s = vec![parse_f64()?];
        }
        "windowing.start_offset_s" => pipe.start_offset_s = parse_f64()?,
        "windowing.max_span_s" => pipe.max_span_s = parse_f64()?,
        "windowing.max_windows" => pipe.max_windows = parse_usize()?,
        "features.bands_hz" => {
            pipe.features.bands_hz = value
                .split(',')
                .map(|band| {
                    let (lo, hi) = band
                        .trim()
                        .split_once('-')
                        .ok_or_else(|| bad("bands look like `8-12,20-30`"))?;
                    Ok((
                        lo.trim().parse().map_err(|_| bad("bad band edge"))?,
                        hi.trim().parse().map_err(|_| bad("bad band edge"))?,
                    ))
                })
                .collect::<Result<_>>()?
        }
        "features.include_variance" => pipe.features.include_variance = parse_bool()?,
        "features.include_peak" => pipe.features.include_peak = parse_bool()?,
        "first_stage.hidden_depth" => pipe.first_stage_arch.hidden_depth = parse_usize()?,
        "first_stage.hidden_len" => pipe.first_stage_arch.hidden_len = parse_usize()?,
        "first_stage.activation" => pipe.first_stage_arch.activation = parse_activation()?,
        "first_stage.learning_rate" => pipe.first_stage_train.learning_rate = parse_f64()?,
        "first_stage.epochs" => pipe.first_stage_train.epochs = parse_usize()?,
        "first_stage.batch_size" => pipe.first_stage_train.batch_size = parse_usize()?,
        "first_stage.l2" => pipe.first_stage_train.l2 = parse_f64()?,
        "first_stage.seed" => pipe.first_stage_train.seed = parse_u64()?,
        "arbitration.n_max" => pipe.n_max = parse_usize()?,
        "arbitration.n_bins" => pipe.n_bins = parse_usize()?,
        "arbitration.hidden_depth" => {
            ensure_single_grid(settings, grid_touched);
            settings.protocol.mlp_grid[0].hidden_depth = parse_usize()?
        }
        "arbitration.hidden_len" => {
            ensure_single_grid(settings, grid_touched);
            settings.protocol.mlp_grid[0].hidden_len = parse_usize()?
        }
        "arbitration.activation" => {
            ensure_single_grid(settings, grid_touched);
            settings.protocol.mlp_grid[0].activation = parse_activation()?
        }
        "arbitration.learning_rate" => pipe.arbitration_train.learning_rate = parse_f64()?,
        "arbitration.epochs" => pipe.arbitration_train.epochs = parse_usize()?,
        "arbitration.batch_size" => pipe.arbitration_train.batch_size = parse_usize()?,
        "arbitration.l2" => pipe.arbitration_train.l2 = parse_f64()?,
        "arbitration.seed" => pipe.arbitration_train.seed = parse_u64()?,
        "arbitration.t_lower" => pipe.threshold.t_lower = parse_f64()?,
        "arbitration.t_upper" => pipe.threshold.t_upper = parse_f64()?,
        "protocol.first_stage_seeds" => {
            settings.protocol.first_stage_seeds = parse_u64_list(value).map_err(|_| bad("expected e.g. `1,2,3`"))?
        }
        "protocol.arbitration_seeds" => {
            settings.protocol.arbitration_seeds = parse_u64_list(value).map_err(|_| bad("expected e.g. `1,2,3`"))?
        }
        "protocol.window_lengths_s" => {
            settings.protocol.window_lengths_s = value
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| bad("expected e.g. `60,600`")))
                .collect::<Result<_>>()?
        }
        "protocol.methods" => {
            settings.protocol.methods = value
                .split(',')
                .map(|v| v.trim().parse::<ArbitrationMethod>())
                .collect::<Result<_>>()?
        }
        "protocol.grid_depths" => {
            let depths: Vec<usize> = value
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| bad("expected e.g. `0,1,2`")))
                .collect::<Result<_>>()?;
            rebuild_grid(settings, Some(depths), None, None, grid_touched);
        }
        "protocol.grid_lengths" => {
            let lens: Vec<usize> = value
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| bad("expected e.g. `5,10,15,20`")))
                .collect::<Result<_>>()?;
            rebuild_grid(settings, None, Some(lens), None, grid_touched);
        }
        "protocol.grid_activations" => {
            let acts: Vec<Activation> = value
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| bad("expected e.g. `relu,elu`")))
                .collect::<Result<_>>()?;
            rebuild_grid(settings, None, None, Some(acts), grid_touched);
        }
        other => {
            return Err(Error::Config(format!(
                "unknown configuration key `{other}` at {}",
                entry.origin
            )))
        }
    }
    Ok(())
}

fn parse_u64_list(value: &str) -> std::result::Result<Vec<u64>, ()> {
    value
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| ()))
        .collect()
}

fn ensure_single_grid(settings: &mut Settings, grid_touched: &mut bool) {
    if !*grid_touched {
        settings.protocol.mlp_grid = vec![settings.protocol.mlp_grid[0]];
    }
}

/// Grid axes accumulate: each `protocol.grid_*` key re-crosses the current
/// axis values with the previous grid's other axes.
fn rebuild_grid(
    settings: &mut Settings,
    depths: Option<Vec<usize>>,
    lens: Option<Vec<usize>>,
    acts: Option<Vec<Activation>>,
    grid_touched: &mut bool,
) {
    let current = &settings.protocol.mlp_grid;
    let unique = |mut v: Vec<usize>| {
        v.dedup();
        v
    };
    let depths = depths.unwrap_or_else(|| unique(current.iter().map(|a| a.hidden_depth).collect()));
    let lens = lens.unwrap_or_else(|| unique(current.iter().map(|a| a.hidden_len).collect()));
    let acts = acts.unwrap_or_else(|| {
        let mut v: Vec<Activation> = current.iter().map(|a| a.activation).collect();
        v.dedup();
        v
    });
    let mut grid = Vec::new();
    for &d in &depths {
        for &l in &lens {
            for &a in &acts {
                grid.push(MlpArch::new(d, l, a));
            }
        }
    }
    settings.protocol.mlp_grid = grid;
    *grid_touched = true;
}
