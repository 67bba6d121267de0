//! `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bootleg_core::align::DtwOptions;
use bootleg_core::bootleg::{BlobGeometry, BootlegConfig};
use bootleg_core::corpus::CorpusConfig;
use bootleg_core::pipeline::{PipelineOptions, SheetMode};
use bootleg_core::staff::StaffSearch;
use bootleg_core::{Error, Result};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub mode: SheetMode,
    /// Strip directory or manifest file.
    pub strips: Option<PathBuf>,
    pub midi: Option<PathBuf>,
    pub boxes: Option<PathBuf>,
    pub sheet_annotations: Option<PathBuf>,
    pub midi_annotations: Option<PathBuf>,
    pub out: PathBuf,
    pub tau_sec: f64,
    pub chord_epsilon_sec: f64,
    pub spacing_min: f64,
    pub spacing_max: f64,
    pub spacing_steps: usize,
    pub blob_width_factor: f64,
    pub ambiguous_height_factor: f64,
    pub dtw_memory_limit: usize,
    pub tolerances_ms: Vec<u32>,
    pub confidence_threshold: f64,
    /// Also score the global linear baseline in `eval`.
    pub baseline: bool,
    pub seed: u64,
    pub synth: CorpusConfig,
}

impl Default for Config {
    fn default() -> Self {
        let bootleg = BootlegConfig::default();
        let search = StaffSearch::default();
        Config {
            mode: SheetMode::Noteheads,
            strips: None,
            midi: None,
            boxes: None,
            sheet_annotations: None,
            midi_annotations: None,
            out: PathBuf::from("out"),
            tau_sec: bootleg.tau_sec,
            chord_epsilon_sec: bootleg.chord_epsilon_sec,
            spacing_min: search.spacing_min,
            spacing_max: search.spacing_max,
            spacing_steps: search.spacing_steps,
            blob_width_factor: bootleg.blob.width_factor,
            ambiguous_height_factor: bootleg.blob.ambiguous_height_factor,
            dtw_memory_limit: DtwOptions::default().memory_limit,
            tolerances_ms: (0..=40).map(|k| k * 50).collect(),
            confidence_threshold: 0.0,
            baseline: true,
            seed: 7,
            synth: CorpusConfig::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("invalid value {value:?} for {key}"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse {
            line,
            reason: format!("invalid boolean {value:?} for {key}"),
        }),
    }
}

impl Config {
    /// Parses config text. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Config> {
        let mut c = Config::default();
        let path = |v: &str| base.join(v);
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n,
                reason: format!("expected key = value, found {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "mode" => c.mode = value.parse().map_err(|e: Error| Error::Parse { line: n, reason: e.to_string() })?,
                "strips" => c.strips = Some(path(value)),
                "midi" => c.midi = Some(path(value)),
                "boxes" => c.boxes = Some(path(value)),
                "sheet_annotations" => c.sheet_annotations = Some(path(value)),
                "midi_annotations" => c.midi_annotations = Some(path(value)),
                "out" => c.out = path(value),
                "tau" => c.tau_sec = parse_value(n, key, value)?,
                "chord_epsilon" => c.chord_epsilon_sec = parse_value(n, key, value)?,
                "spacing_min" => c.spacing_min = parse_value(n, key, value)?,
                "spacing_max" => c.spacing_max = parse_value(n, key, value)?,
                "spacing_steps" => c.spacing_steps = parse_value(n, key, value)?,
                "blob_width_factor" => c.blob_width_factor = parse_value(n, key, value)?,
                "ambiguous_height_factor" => c.ambiguous_height_factor = parse_value(n, key, value)?,
                "dtw_memory_limit" => c.dtw_memory_limit = parse_value(n, key, value)?,
                "tolerances_ms" => {
                    c.tolerances_ms = value
                        .split(',')
                        .map(|v| parse_value(n, key, v.trim()))
                        .collect::<Result<_>>()?
                }
                "confidence_threshold" => c.confidence_threshold = parse_value(n, key, value)?,
                "baseline" => c.baseline = parse_bool(n, key, value)?,
                "seed" => c.seed = parse_value(n, key, value)?,
                "synth_strips" => c.synth.strips = parse_value(n, key, value)?,
                "synth_measures_per_strip" => c.synth.measures_per_strip = parse_value(n, key, value)?,
                "synth_spacing" => c.synth.spacing = parse_value(n, key, value)?,
                "synth_beat_sec" => c.synth.beat_sec = parse_value(n, key, value)?,
                "synth_tempo_warp" => c.synth.tempo_warp = parse_value(n, key, value)?,
                "synth_pause_sec" => {
                    let v: f64 = parse_value(n, key, value)?;
                    c.synth.pause_sec = (v > 0.0).then_some(v);
                }
                "synth_distractors" => c.synth.distractors = parse_bool(n, key, value)?,
                "synth_noise" => c.synth.noise = parse_value(n, key, value)?,
                other => {
                    return Err(Error::Parse {
                        line: n,
                        reason: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau_sec),
            ("spacing_min", self.spacing_min),
            ("spacing_max", self.spacing_max),
            ("blob_width_factor", self.blob_width_factor),
            ("ambiguous_height_factor", self.ambiguous_height_factor),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Validation(format!("{k} must be positive, got {v}")));
        }
        if !(self.chord_epsilon_sec >= 0.0) || !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Validation(
                "chord_epsilon must be non-negative and confidence_threshold within [0, 1]".into(),
            ));
        }
        if self.spacing_steps == 0 || self.dtw_memory_limit == 0 || self.tolerances_ms.is_empty() {
            return Err(Error::Validation(
                "spacing_steps, dtw_memory_limit and tolerances_ms must be non-empty and positive".into(),
            ));
        }
        self.staff_search().validate()
    }

    /// Inputs every alignment-based command needs.
    pub fn require_alignment_inputs(&self) -> Result<()> {
        self.validate()?;
        if self.strips.is_none() || self.midi.is_none() {
            return Err(Error::Validation("config must name strips and midi".into()));
        }
        if self.mode == SheetMode::Noteheads && self.boxes.is_none() {
            return Err(Error::Validation("mode noteheads requires a boxes file".into()));
        }
        Ok(())
    }

    pub fn staff_search(&self) -> StaffSearch {
        StaffSearch {
            spacing_min: self.spacing_min,
            spacing_max: self.spacing_max,
            spacing_steps: self.spacing_steps,
        }
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            mode: self.mode,
            bootleg: BootlegConfig {
                tau_sec: self.tau_sec,
                chord_epsilon_sec: self.chord_epsilon_sec,
                blob: BlobGeometry {
                    width_factor: self.blob_width_factor,
                    ambiguous_height_factor: self.ambiguous_height_factor,
                },
            },
            staff_search: self.staff_search(),
            dtw: DtwOptions {
                memory_limit: self.dtw_memory_limit,
            },
        }
    }

    pub fn tolerances_sec(&self) -> Vec<f64> {
        self.tolerances_ms.iter().map(|&ms| ms as f64 / 1000.0).collect()
    }

    /// Canonical `key = value` rendering of the effective configuration.
    pub fn canonical(&self) -> String {
        let p = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "strips = {}", p(&self.strips));
        let _ = writeln!(s, "midi = {}", p(&self.midi));
        let _ = writeln!(s, "boxes = {}", p(&self.boxes));
        let _ = writeln!(s, "sheet_annotations = {}", p(&self.sheet_annotations));
        let _ = writeln!(s, "midi_annotations = {}", p(&self.midi_annotations));
        let _ = writeln!(s, "tau = {}", self.tau_sec);
        let _ = writeln!(s, "chord_epsilon = {}", self.chord_epsilon_sec);
        let _ = writeln!(s, "spacing_min = {}", self.spacing_min);
        let _ = writeln!(s, "spacing_max = {}", self.spacing_max);
        let _ = writeln!(s, "spacing_steps = {}", self.spacing_steps);
        let _ = writeln!(s, "blob_width_factor = {}", self.blob_width_factor);
        let _ = writeln!(s, "ambiguous_height_factor = {}", self.ambiguous_height_factor);
        let _ = writeln!(s, "dtw_memory_limit = {}", self.dtw_memory_limit);
        let tol: Vec<String> = self.tolerances_ms.iter().map(u32::to_string).collect();
        let _ = writeln!(s, "tolerances_ms = {}", tol.join(","));
        let _ = writeln!(s, "confidence_threshold = {}", self.confidence_threshold);
        let _ = writeln!(s, "baseline = {}", self.baseline);
        s
    }

    /// Hex SHA-256 of the canonical rendering.
    pub fn digest(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
