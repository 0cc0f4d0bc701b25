use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use greeneye_core::calibration::{
    calibration_targets, evaluate_grid, evaluation_trials, read_session, ScreenGeometry, DEFAULT_SETTLE_S,
};
use greeneye_core::cyclegan::{fine_tune, train, Direction, ModelBundle, TrainOutcome};
use greeneye_core::dataset::{
    build_domain_pair, convert_annotated_dataset, crop_resize, detect_face, eye_region_box, locate_eye_landmarks,
    read_labels, DatasetPair, PicoFaceDetector, PicoLandmarkPredictor, SourceSize,
};
use greeneye_core::pupil::{PupilConfig, PupilDetection};
use greeneye_core::tracker::{
    load_calibration, replay_session, run_frame, FrameSource, GazeUpdate, PipelineConfig, PipelineState,
    ServiceHandle, ServiceOptions, SessionRecord, MODEL_FILE, REPORT_FILE,
};
use greeneye_core::{EyeImage, MarkerColor, Provenance};
use serde_json::json;

use crate::exit::Failure;
use crate::{ColorArg, Command, ScreenArgs, TrackArgs};

type Result<T> = std::result::Result<T, Failure>;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Prep { config, frames, out } => prep(&config, frames, &out),
        Command::Label { raw, labels, out, color } => label(&raw, &labels, &out, &color),
        Command::Convert { images, coords, source_size, radius, out, color } => {
            convert(&images, &coords, source_size, radius, &out, &color)
        }
        Command::Train { config, out } => train_cmd(&config, &out),
        Command::Finetune { config, checkpoint, freeze, out } => finetune(&config, checkpoint, &freeze, &out),
        Command::Infer { checkpoint, input, out, dump, config } => infer(&checkpoint, &input, out.as_deref(), dump, config.as_deref()),
        Command::Track(args) => track(&args),
        Command::Calibrate { replay, out, screen } => calibrate(&replay, &out, &screen),
        Command::Evaluate { session, model, screen } => evaluate(&session, model.as_deref(), &screen),
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    let cfg = PipelineConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn require(p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.clone().ok_or_else(|| Failure::config(format!("config has no {what}")))
}

fn require_input(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::data(format!("{} does not exist", path.display())))
    }
}

fn marker_color(arg: &ColorArg) -> Result<MarkerColor> {
    match arg.color {
        None => Ok(MarkerColor::DEFAULT),
        Some([r, g, b]) => MarkerColor::new(r, g, b).map_err(|e| Failure::usage(e.to_string())),
    }
}

fn geometry(screen: &ScreenArgs) -> Result<ScreenGeometry> {
    let g = if screen.geometry == "default" {
        ScreenGeometry::default()
    } else {
        let text = fs::read_to_string(&screen.geometry)
            .map_err(|e| Failure::config(format!("geometry {}: {e}", screen.geometry)))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("geometry {}: {e}", screen.geometry)))?
    };
    g.validate()?;
    Ok(g)
}

fn settle(screen: &ScreenArgs) -> Result<f64> {
    let s = screen.settle.unwrap_or(DEFAULT_SETTLE_S);
    if s >= 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(Failure::usage("--settle must be a non-negative number of seconds"))
    }
}

fn prep(config: &Path, frames: Option<PathBuf>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let frames = match frames {
        Some(f) => f,
        None => require(&cfg.frames_dir, "frames_dir")?,
    };
    require_input(&frames)?;
    let mut detector = PicoFaceDetector::load(require(&cfg.face_model, "face_model")?)?;
    let mut predictor = PicoLandmarkPredictor::load(require(&cfg.landmark_model, "landmark_model")?)?;
    let source = FrameSource::from_dir(&frames, 0)?;
    fs::create_dir_all(out)?;
    let (mut kept, mut skipped) = (0usize, 0usize);
    for frame in source {
        let frame = frame?;
        let status = (|| {
            let face = detect_face(&frame, &mut detector).ok_or("no_face")?;
            let marks = locate_eye_landmarks(&frame, face, &mut predictor).map_err(|_| "no_landmarks")?;
            let region = eye_region_box(&marks, cfg.eye_pad, frame.width(), frame.height()).map_err(|_| "degenerate_region")?;
            crop_resize(&frame, region).map_err(|_| "crop_failed")
        })();
        let stem = Path::new(&frame.source_id).file_stem().and_then(|s| s.to_str()).unwrap_or("frame").to_string();
        match status {
            Ok(eye) => {
                eye.pixels().save(out.join(format!("{stem}.png"))).map_err(|e| Failure::data(e.to_string()))?;
                kept += 1;
                println!("frame={stem} status=ok");
            }
            Err(why) => {
                skipped += 1;
                println!("frame={stem} status={why}");
            }
        }
    }
    println!("crops={kept} skipped={skipped}");
    Ok(())
}

fn label(raw: &Path, labels: &Path, out: &Path, color: &ColorArg) -> Result<()> {
    require_input(raw)?;
    require_input(labels)?;
    let color = marker_color(color)?;
    let rows = read_labels(labels)?;
    let pair = build_domain_pair(raw, &rows, color, out)?;
    println!("raw={} labelled={}", pair.domain_a.len(), pair.domain_b.len());
    Ok(())
}

fn convert(images: &Path, coords: &Path, source: SourceSize, radius: Option<f64>, out: &Path, color: &ColorArg) -> Result<()> {
    require_input(images)?;
    require_input(coords)?;
    let color = marker_color(color)?;
    let report = convert_annotated_dataset(images, coords, source, radius, color, out)?;
    for e in &report.errors {
        println!("{}", json!({"line": e.line, "filename": e.filename, "error": e.error}));
    }
    println!("converted={} errors={}", report.pair.domain_a.len(), report.errors.len());
    if report.pair.domain_a.is_empty() && !report.errors.is_empty() {
        return Err(Failure::data("no row could be converted"));
    }
    Ok(())
}

fn dataset(cfg: &PipelineConfig) -> Result<DatasetPair> {
    Ok(DatasetPair::load(require(&cfg.dataset, "dataset")?)?)
}

fn summarize(outcome: &TrainOutcome) {
    if let Some(last) = outcome.reports.last() {
        println!("{}", last.log_line());
    }
    println!("steps={} epochs={}", outcome.bundle.step, outcome.bundle.epoch);
    if let Some(dir) = outcome.epoch_checkpoints.last() {
        println!("checkpoint={}", dir.display());
    }
    if let Some(best) = &outcome.best {
        println!("best_epoch={} best_success_rate={:.3} best_checkpoint={}", best.epoch, best.success_rate, best.checkpoint.display());
    }
}

fn train_cmd(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let pair = dataset(&cfg)?;
    let outcome = train(&pair, &cfg.training_config(), out)?;
    summarize(&outcome);
    Ok(())
}

fn finetune(config: &Path, checkpoint: Option<PathBuf>, freeze: &[String], out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let checkpoint = match checkpoint {
        Some(c) => c,
        None => require(&cfg.checkpoint, "checkpoint")?,
    };
    require_input(&checkpoint)?;
    let pair = dataset(&cfg)?;
    let bundle = ModelBundle::load(&checkpoint)?;
    let outcome = fine_tune(bundle, &pair, freeze, &cfg.training_config(), out)?;
    summarize(&outcome);
    Ok(())
}

fn eye_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    require_input(input)?;
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg")))
        .collect();
    files.sort();
    Ok(files)
}

fn infer(checkpoint: &Path, input: &Path, out: Option<&Path>, dump: bool, config: Option<&Path>) -> Result<()> {
    let detector = match config {
        Some(c) => load_config(c)?.pupil,
        None => PupilConfig::default(),
    };
    require_input(checkpoint)?;
    let bundle = ModelBundle::load(checkpoint)?;
    let files = eye_inputs(input)?;
    if let Some(o) = out {
        fs::create_dir_all(o)?;
    }
    for path in files {
        let img = image::open(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?.to_rgb8();
        let eye = EyeImage::new(img, Provenance::Raw).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let translated = bundle.translate(&eye, Direction::AtoB)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("eye").to_string();
        let found = match out {
            Some(o) => {
                translated.pixels().save(o.join(format!("{stem}.png"))).map_err(|e| Failure::data(e.to_string()))?;
                if dump {
                    detector.detect_with_dump(&translated, o, &stem)?
                } else {
                    detector.detect(&translated)
                }
            }
            None => detector.detect(&translated),
        };
        let line = match found {
            Some(d) => json!({"file": path.display().to_string(), "cx": d.cx, "cy": d.cy, "area": d.area, "conf": d.confidence}),
            None => json!({"file": path.display().to_string(), "cx": null, "cy": null, "area": 0, "conf": 0.0}),
        };
        println!("{line}");
    }
    Ok(())
}

fn print_session(record: &SessionRecord) {
    println!("session_complete mean_deg={:.1} rms_px={:.3}", record.report.mean, record.model.rms());
}

fn track(args: &TrackArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let calibration = cfg.calibration.as_deref().map(load_calibration).transpose()?;
    enum Source {
        Replay(std::vec::IntoIter<greeneye_core::calibration::GazeSample>),
        Frames(Box<PipelineState>, FrameSource),
    }
    let mut source = match &args.session {
        Some(path) => {
            require_input(path)?;
            Source::Replay(read_session(path)?.into_iter())
        }
        None => {
            let frames = cfg.frames_dir.clone().ok_or_else(|| {
                Failure::config("frames_dir is required: frames are read from a directory, there is no built-in camera driver")
            })?;
            let mut state = PipelineState::from_config(&cfg)?;
            state.calibration = calibration.clone();
            Source::Frames(Box::new(state), FrameSource::from_dir(&frames, 33)?)
        }
    };
    let opts = ServiceOptions {
        queue_capacity: cfg.queue_capacity,
        geometry: cfg.geometry.clone(),
        settle_s: cfg.settle_s,
        session_dir: cfg.session_dir.clone(),
        config_snapshot: serde_json::to_value(&cfg)?,
        ..Default::default()
    };
    let port = args.port.unwrap_or(cfg.port);
    let mut service = ServiceHandle::bind((args.host.as_str(), port), opts)?;
    println!("listening=ws://{}", service.local_addr());
    std::io::stdout().flush()?;
    if args.wait_clients > 0 && !service.wait_for_clients(args.wait_clients, Duration::from_secs(3600)) {
        return Err(Failure::data("clients did not connect"));
    }

    let started = Instant::now();
    let mut first_t = None;
    let mut produced = 0u64;
    loop {
        if args.max_updates.is_some_and(|m| produced >= m) {
            break;
        }
        let (update, frame) = match &mut source {
            Source::Replay(samples) => {
                let Some(s) = samples.next() else { break };
                let pupil = PupilDetection { cx: s.px, cy: s.py, area: 0, confidence: s.conf };
                let gaze = calibration.as_ref().map(|m| m.map(s.px, s.py));
                (GazeUpdate { seq: produced + 1, t: s.t, pupil: Some(pupil), gaze }, None)
            }
            Source::Frames(state, frames) => {
                let Some(frame) = frames.next() else { break };
                let frame = frame?;
                (run_frame(&frame, state)?, Some(frame.pixels))
            }
        };
        if args.realtime {
            let t0 = *first_t.get_or_insert(update.t);
            let due = Duration::from_millis(update.t.saturating_sub(t0));
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                thread::sleep(wait);
            }
        }
        if let Some(record) = service.publish(&update)? {
            print_session(&record);
        }
        if let Some(pixels) = frame {
            service.publish_frame(&pixels)?;
        }
        produced += 1;
    }

    let deadline = Instant::now() + Duration::from_secs_f64(args.linger_s.max(0.0));
    while let Some(left) = deadline.checked_duration_since(Instant::now()) {
        match service.wait_control(left) {
            Ok(Some(Some(record))) => print_session(&record),
            Ok(_) => {}
            Err(e) => log::warn!("calibration failed: {e}"),
        }
    }
    println!("updates={produced}");
    for c in service.client_stats() {
        println!("client={} sent={} dropped={} queued={}", c.id, c.sent, c.dropped, c.queued);
    }
    service.shutdown();
    Ok(())
}

fn calibrate(replay: &Path, out: &Path, screen: &ScreenArgs) -> Result<()> {
    require_input(replay)?;
    let geometry = geometry(screen)?;
    let record = replay_session(replay, &geometry, settle(screen)?, out)?;
    print!("{}", record.report.render());
    println!("model={}", out.join(MODEL_FILE).display());
    println!("report={}", out.join(REPORT_FILE).display());
    Ok(())
}

fn evaluate(session: &Path, model: Option<&Path>, screen: &ScreenArgs) -> Result<()> {
    require_input(session)?;
    let geometry = geometry(screen)?;
    let settle = settle(screen)?;
    let samples = read_session(session)?;
    let model = model.map(|m| -> Result<_> {
        require_input(m)?;
        Ok(Arc::new(load_calibration(m)?))
    }).transpose()?;
    let trials = evaluation_trials(&samples, settle, |x, y| match &model {
        Some(m) => {
            let g = m.map(x, y);
            (g.sx, g.sy)
        }
        None => (x, y),
    });
    let grid = evaluate_grid(&trials, &calibration_targets(&geometry)?, &geometry)?;
    print!("{}", grid.render());
    Ok(())
}
