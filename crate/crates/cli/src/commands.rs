use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use bootleg_core::align::write_alignment;
use bootleg_core::corpus::{synthesize_test_corpus, write_corpus_dir};
use bootleg_core::eval::{load_midi_annotations, load_sheet_annotations, ErrorCurve};
use bootleg_core::midi::{load_midi, MidiPerformance};
use bootleg_core::noteheads::{load_noteheads, NoteheadBox};
use bootleg_core::pipeline::{align_piece, Alignment, SheetMode};
use bootleg_core::render::render_overlay;
use bootleg_core::sheet::{binarize_all, load_strips, read_manifest, strip_paths_in_dir, ImageStrip};
use bootleg_core::staff::{detect_staves, write_diagnostics};
use bootleg_core::{Error, Result};

use crate::config::Config;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut out = create(path)?;
    f(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

fn strip_paths(config: &Config) -> Result<Vec<PathBuf>> {
    let source = config
        .strips
        .as_ref()
        .ok_or_else(|| Error::Validation("config must name strips".into()))?;
    let paths = if source.is_dir() {
        strip_paths_in_dir(source)?
    } else {
        read_manifest(source)?
    };
    if paths.is_empty() {
        return Err(Error::EmptyInput("no strip images listed"));
    }
    Ok(paths)
}

struct Inputs {
    strips: Vec<ImageStrip>,
    perf: MidiPerformance,
    boxes: Option<Vec<NoteheadBox>>,
}

fn load_inputs(config: &Config) -> Result<Inputs> {
    config.require_alignment_inputs()?;
    let strips = load_strips(&strip_paths(config)?)?;
    let perf = load_midi(config.midi.as_deref().expect("checked above"))?;
    let boxes = match (&config.boxes, config.mode) {
        (Some(path), SheetMode::Noteheads) => {
            let dims: Vec<(usize, usize)> = strips.iter().map(|s| (s.width(), s.height())).collect();
            Some(load_noteheads(path, &dims, config.confidence_threshold)?)
        }
        _ => None,
    };
    Ok(Inputs { strips, perf, boxes })
}

fn align_inputs(config: &Config, inputs: &Inputs) -> Result<Alignment> {
    align_piece(&inputs.perf, &inputs.strips, inputs.boxes.as_deref(), &config.pipeline_options())
}

pub fn staves(config: &Config) -> Result<()> {
    config.validate()?;
    let strips = load_strips(&strip_paths(config)?)?;
    let detections = detect_staves(&binarize_all(&strips), &config.staff_search())?;
    let path = config.out.join("staves.csv");
    write_with(&path, |out| write_diagnostics(&detections, out))?;
    let fallbacks = detections.iter().filter(|d| d.fallback).count();
    println!("{} strips, {fallbacks} fallback; wrote {}", detections.len(), path.display());
    for d in detections.iter().filter(|d| d.fallback) {
        eprintln!(
            "warning: strip {} uses fallback geometry ({})",
            d.system.strip_index,
            d.failure.as_deref().unwrap_or("unknown")
        );
    }
    Ok(())
}

pub fn align(config: &Config) -> Result<()> {
    let start = Instant::now();
    let inputs = load_inputs(config)?;
    let alignment = align_inputs(config, &inputs)?;
    let path = config.out.join("alignment.csv");
    write_with(&path, |out| {
        write_alignment(
            &alignment.path,
            &alignment.sheet.offsets,
            &alignment.timeline,
            &config.digest(),
            out,
        )
    })?;
    if alignment.sheet_is_blank() {
        eprintln!("warning: sheet bootleg is blank; the alignment carries no information");
    }
    println!(
        "mode {}, {} columns, total cost {}, path length {}, {:.2}s; wrote {}",
        config.mode.as_str(),
        alignment.total_width(),
        alignment.path.total_cost,
        alignment.path.points.len(),
        start.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(())
}

fn write_curve(path: &Path, curve: &ErrorCurve, digest: &str) -> Result<()> {
    write_with(path, |out| {
        writeln!(out, "# config_digest={digest}")?;
        curve.write(out)
    })
}

fn summarize(name: &str, curve: &ErrorCurve) {
    let at = |t: f64| {
        curve
            .rate_at(t)
            .map_or("n/a".to_string(), |r| format!("{:.2}%", 100.0 * r))
    };
    println!("{name}: {} beats, error {} at 1.0s, {} at 0.5s", curve.n_beats, at(1.0), at(0.5));
}

pub fn eval(config: &Config) -> Result<()> {
    let (sheet_path, midi_path) = match (&config.sheet_annotations, &config.midi_annotations) {
        (Some(s), Some(m)) => (s.clone(), m.clone()),
        _ => {
            return Err(Error::Validation(
                "eval needs sheet_annotations and midi_annotations".into(),
            ))
        }
    };
    let inputs = load_inputs(config)?;
    let sheet = load_sheet_annotations(&sheet_path)?;
    let midi = load_midi_annotations(&midi_path)?;
    let alignment = align_inputs(config, &inputs)?;
    let tolerances = config.tolerances_sec();
    let digest = config.digest();
    let curve = alignment.evaluate(&sheet, &midi, &tolerances)?;
    let path = config.out.join("curve.csv");
    write_curve(&path, &curve, &digest)?;
    summarize("bootleg", &curve);
    if config.baseline {
        let baseline = alignment.evaluate_baseline(&sheet, &midi, &tolerances)?;
        write_curve(&config.out.join("curve_globlin.csv"), &baseline, &digest)?;
        summarize("globlin", &baseline);
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn render(config: &Config, strip_index: usize) -> Result<()> {
    let inputs = load_inputs(config)?;
    if strip_index >= inputs.strips.len() {
        return Err(Error::Validation(format!(
            "strip {strip_index} out of range (piece has {} strips)",
            inputs.strips.len()
        )));
    }
    let alignment = align_inputs(config, &inputs)?;
    let image = render_overlay(&inputs.strips[strip_index], &alignment.boxes, &alignment)?;
    let path = config.out.join(format!("render_strip_{strip_index:03}.png"));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    image.save(&path).map_err(|e| Error::Image {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn synth(config: &Config) -> Result<()> {
    let piece = synthesize_test_corpus(config.seed, &config.synth)?;
    let dir = &config.out;
    let files = write_corpus_dir(&piece, dir)?;
    let run_config = format!(
        "# Generated corpus, seed {}\nmode = noteheads\nstrips = manifest.txt\nmidi = performance.mid\n\
         boxes = boxes.csv\nsheet_annotations = sheet_beats.csv\nmidi_annotations = midi_beats.csv\nout = results\n",
        config.seed
    );
    let path = dir.join("config.txt");
    std::fs::write(&path, run_config).map_err(|e| Error::io(&path, e))?;
    println!(
        "{} strips, {} notes, {} beats; wrote {} files to {}",
        piece.strips.len(),
        piece.performance.events.len(),
        piece.sheet_annotations.len(),
        files.len() + 1,
        dir.display()
    );
    Ok(())
}
