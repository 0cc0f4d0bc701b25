use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::label::{paint_pupil, round_half_up, PupilLabel, DEFAULT_RADIUS};
use super::resize::resize_to_eye;
use super::DatasetError;
use crate::types::{EyeImage, MarkerColor, Provenance, EYE_HEIGHT, EYE_WIDTH};

pub const TRAIN_A: &str = "trainA";
pub const TRAIN_B: &str = "trainB";
pub const LABELS_FILE: &str = "labels.csv";

/// One row of `labels.csv`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub filename: String,
    pub cx: i64,
    pub cy: i64,
    pub radius: i64,
}

impl LabelRow {
    pub fn pupil(&self) -> PupilLabel {
        PupilLabel::new(self.cx as f64, self.cy as f64, self.radius as f64)
    }
}

/// Resolution the coordinates of an external annotation table refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSize {
    pub width: u32,
    pub height: u32,
}

impl Default for SourceSize {
    fn default() -> Self {
        Self {
            width: 1280,
            height: 720,
        }
    }
}

impl FromStr for SourceSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
        let width: u32 = w.trim().parse().map_err(|e| format!("width: {e}"))?;
        let height: u32 = h.trim().parse().map_err(|e| format!("height: {e}"))?;
        if width == 0 || height == 0 {
            return Err("source size must be non-zero".into());
        }
        Ok(Self { width, height })
    }
}

/// The two training domains on disk plus the label table for domain B.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPair {
    pub root: PathBuf,
    pub domain_a: Vec<String>,
    pub domain_b: Vec<String>,
    pub labels: Vec<LabelRow>,
}

impl DatasetPair {
    /// Reads a `trainA/`, `trainB/`, `labels.csv` layout.
    pub fn load(root: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let root = root.as_ref().to_path_buf();
        let domain_a = list_pngs(&root.join(TRAIN_A))?;
        let domain_b = list_pngs(&root.join(TRAIN_B))?;
        let labels_path = root.join(LABELS_FILE);
        let labels = if labels_path.exists() {
            read_labels(&labels_path)?
        } else {
            Vec::new()
        };
        let labelled: HashSet<&str> = labels.iter().map(|r| r.filename.as_str()).collect();
        if let Some(missing) = domain_b.iter().find(|f| !labelled.contains(f.as_str())) {
            return Err(DatasetError::MalformedRow {
                line: 0,
                reason: format!("{TRAIN_B}/{missing} has no row in {LABELS_FILE}"),
            });
        }
        Ok(Self {
            root,
            domain_a,
            domain_b,
            labels,
        })
    }

    pub fn path_a(&self, name: &str) -> PathBuf {
        self.root.join(TRAIN_A).join(name)
    }

    pub fn path_b(&self, name: &str) -> PathBuf {
        self.root.join(TRAIN_B).join(name)
    }

    pub fn label_for(&self, name: &str) -> Option<&LabelRow> {
        self.labels.iter().find(|r| r.filename == name)
    }

    pub fn load_a(&self, name: &str) -> Result<EyeImage, DatasetError> {
        load_eye(&self.path_a(name), Provenance::Raw)
    }

    pub fn load_b(&self, name: &str) -> Result<EyeImage, DatasetError> {
        load_eye(&self.path_b(name), Provenance::Labeled)
    }
}

fn load_eye(path: &Path, provenance: Provenance) -> Result<EyeImage, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingImage(path.to_path_buf()));
    }
    let img = image::open(path)?.to_rgb8();
    EyeImage::new(img, provenance).map_err(|e| DatasetError::MalformedRow {
        line: 0,
        reason: format!("{}: {e}", path.display()),
    })
}

fn list_pngs(dir: &Path) -> Result<Vec<String>, DatasetError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    Ok(names)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, DatasetError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<LabelRow>().enumerate() {
        rows.push(rec.map_err(|e| DatasetError::MalformedRow {
            line: i + 2,
            reason: e.to_string(),
        })?);
    }
    Ok(rows)
}

/// Writes `filename,cx,cy,radius` with LF line endings.
pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<(), DatasetError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    if rows.is_empty() {
        writer.write_record(["filename", "cx", "cy", "radius"])?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// A table row that could not be converted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: usize,
    pub filename: Option<String>,
    pub error: String,
}

#[derive(Debug)]
pub struct ConversionReport {
    pub pair: DatasetPair,
    pub errors: Vec<RowError>,
}

#[derive(Deserialize)]
struct SourceRow {
    filename: String,
    px: f64,
    py: f64,
}

fn png_name(filename: &str) -> String {
    let stem = Path::new(filename)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(filename);
    format!("{stem}.png")
}

/// Resizes every image listed in `coords` to 400×300, rescales its pupil
/// coordinate and paints it. Bad rows are collected instead of aborting.
pub fn convert_annotated_dataset(
    image_dir: &Path,
    coords: &Path,
    source: SourceSize,
    radius: Option<f64>,
    color: MarkerColor,
    out: &Path,
) -> Result<ConversionReport, DatasetError> {
    let radius = radius.unwrap_or(DEFAULT_RADIUS);
    fs::create_dir_all(out.join(TRAIN_A))?;
    fs::create_dir_all(out.join(TRAIN_B))?;
    let sx = EYE_WIDTH as f64 / source.width as f64;
    let sy = EYE_HEIGHT as f64 / source.height as f64;

    let mut reader = csv::Reader::from_path(coords)?;
    let mut errors = Vec::new();
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    let mut domain_a = Vec::new();
    for (i, rec) in reader.deserialize::<SourceRow>().enumerate() {
        let line = i + 2;
        let row = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError { line, filename: None, error: e.to_string() });
                continue;
            }
        };
        let fail = |e: DatasetError| RowError {
            line,
            filename: Some(row.filename.clone()),
            error: e.to_string(),
        };
        let name = png_name(&row.filename);
        if !seen.insert(name.clone()) {
            errors.push(fail(DatasetError::DuplicateFilename(name)));
            continue;
        }
        let src_path = image_dir.join(&row.filename);
        if !src_path.exists() {
            errors.push(fail(DatasetError::MissingImage(src_path)));
            continue;
        }
        let converted = (|| -> Result<LabelRow, DatasetError> {
            let raw = resize_to_eye(&image::open(&src_path)?.to_rgb8());
            let label = LabelRow {
                filename: name.clone(),
                cx: round_half_up(row.px * sx),
                cy: round_half_up(row.py * sy),
                radius: round_half_up(radius),
            };
            let painted = paint_pupil(&raw, &label.pupil(), color)?;
            raw.pixels().save(out.join(TRAIN_A).join(&name))?;
            painted.pixels().save(out.join(TRAIN_B).join(&name))?;
            Ok(label)
        })();
        match converted {
            Ok(label) => {
                domain_a.push(name);
                labels.push(label);
            }
            Err(e) => errors.push(fail(e)),
        }
    }
    write_labels(&out.join(LABELS_FILE), &labels)?;
    let domain_b = labels.iter().map(|l| l.filename.clone()).collect();
    Ok(ConversionReport {
        pair: DatasetPair {
            root: out.to_path_buf(),
            domain_a,
            domain_b,
            labels,
        },
        errors,
    })
}

/// Validates a raw file list against a label table without touching disk.
pub fn plan_domain_pair(
    root: &Path,
    raw_names: &[String],
    labels: &[LabelRow],
) -> Result<DatasetPair, DatasetError> {
    let mut raw = HashSet::new();
    for n in raw_names {
        if !raw.insert(n.as_str()) {
            return Err(DatasetError::DuplicateFilename(n.clone()));
        }
    }
    let mut labelled = HashSet::new();
    for row in labels {
        if !labelled.insert(row.filename.as_str()) {
            return Err(DatasetError::DuplicateFilename(row.filename.clone()));
        }
        if !raw.contains(row.filename.as_str()) {
            return Err(DatasetError::MissingImage(root.join(TRAIN_A).join(&row.filename)));
        }
    }
    Ok(DatasetPair {
        root: root.to_path_buf(),
        domain_a: raw_names.to_vec(),
        domain_b: labels.iter().map(|r| r.filename.clone()).collect(),
        labels: labels.to_vec(),
    })
}

/// Copies raw eye images into `trainA/`, paints every labelled one into
/// `trainB/` and writes `labels.csv`.
pub fn build_domain_pair(
    raw_dir: &Path,
    labels: &[LabelRow],
    color: MarkerColor,
    out: &Path,
) -> Result<DatasetPair, DatasetError> {
    let raw_names = list_pngs(raw_dir)?;
    let pair = plan_domain_pair(out, &raw_names, labels)?;
    for row in labels {
        row.pupil().validate()?;
    }
    fs::create_dir_all(out.join(TRAIN_A))?;
    fs::create_dir_all(out.join(TRAIN_B))?;
    for name in &raw_names {
        let raw = load_eye(&raw_dir.join(name), Provenance::Raw)?;
        raw.pixels().save(out.join(TRAIN_A).join(name))?;
        if let Some(row) = labels.iter().find(|r| &r.filename == name) {
            let painted = paint_pupil(&raw, &row.pupil(), color)?;
            painted.pixels().save(out.join(TRAIN_B).join(name))?;
        }
    }
    write_labels(&out.join(LABELS_FILE), labels)?;
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn row(name: &str, cx: i64, cy: i64) -> LabelRow {
        LabelRow { filename: name.into(), cx, cy, radius: 12 }
    }

    #[test]
    fn source_size_defaults_and_parses() {
        assert_eq!(SourceSize::default(), SourceSize { width: 1280, height: 720 });
        assert_eq!("640x480".parse::<SourceSize>().unwrap(), SourceSize { width: 640, height: 480 });
        assert!("640".parse::<SourceSize>().is_err());
        assert!("0x480".parse::<SourceSize>().is_err());
    }

    #[test]
    fn plan_sizes_both_domains() {
        let raw: Vec<String> = (0..4000).map(|i| format!("{i:05}.png")).collect();
        let labels: Vec<LabelRow> = raw.iter().map(|n| row(n, 200, 150)).collect();
        let pair = plan_domain_pair(Path::new("ds"), &raw, &labels).unwrap();
        assert_eq!(pair.domain_a.len(), 4000);
        assert_eq!(pair.domain_b.len(), 4000);

        let pair = plan_domain_pair(Path::new("ds"), &raw, &[]).unwrap();
        assert!(pair.domain_b.is_empty());
        assert_eq!(pair.domain_a.len(), 4000);
    }

    #[test]
    fn duplicate_label_rows_are_rejected() {
        let raw = vec!["a.png".to_string(), "b.png".to_string()];
        let err = plan_domain_pair(Path::new("ds"), &raw, &[row("a.png", 1, 1), row("a.png", 2, 2)]).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateFilename(n) if n == "a.png"));
        let err = plan_domain_pair(Path::new("ds"), &raw, &[row("c.png", 1, 1)]).unwrap_err();
        assert!(matches!(err, DatasetError::MissingImage(_)));
    }

    #[test]
    fn labels_file_round_trips_with_lf_endings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LABELS_FILE);
        let rows = vec![row("a.png", 200, 150), row("b.png", 3, 299)];
        write_labels(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "filename,cx,cy,radius\na.png,200,150,12\nb.png,3,299,12\n");
        assert_eq!(read_labels(&path).unwrap(), rows);
    }

    #[test]
    fn build_writes_the_training_layout() {
        let dir = tempfile::tempdir().unwrap();
        let raw_dir = dir.path().join("raw");
        fs::create_dir_all(&raw_dir).unwrap();
        for name in ["e1.png", "e2.png", "e3.png"] {
            RgbImage::from_pixel(400, 300, Rgb([90, 80, 70])).save(raw_dir.join(name)).unwrap();
        }
        let out = dir.path().join("dataset");
        let pair = build_domain_pair(&raw_dir, &[row("e1.png", 200, 150), row("e3.png", 100, 100)], MarkerColor::DEFAULT, &out).unwrap();
        assert_eq!(pair.domain_a.len(), 3);
        let loaded = DatasetPair::load(&out).unwrap();
        assert_eq!(loaded.domain_a, vec!["e1.png", "e2.png", "e3.png"]);
        assert_eq!(loaded.domain_b, vec!["e1.png", "e3.png"]);
        let b = loaded.load_b("e1.png").unwrap();
        assert_eq!(b.pixels().get_pixel(200, 150).0, [45, 253, 9]);
    }

    #[test]
    fn conversion_rescales_and_isolates_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("src");
        fs::create_dir_all(&images).unwrap();
        RgbImage::from_pixel(1280, 720, Rgb([100, 100, 100])).save(images.join("f1.jpg")).unwrap();
        RgbImage::from_pixel(1280, 720, Rgb([100, 100, 100])).save(images.join("f2.png")).unwrap();
        let coords = dir.path().join("coords.csv");
        fs::write(&coords, "filename,px,py\nf1.jpg,640,360\nmissing.png,10,10\nf2.png,not-a-number,3\nf2.png,321,181\n").unwrap();
        let out = dir.path().join("out");
        let report = convert_annotated_dataset(&images, &coords, SourceSize::default(), None, MarkerColor::DEFAULT, &out).unwrap();
        assert_eq!(report.errors.len(), 2);
        assert_eq!(report.errors[0].line, 3);
        assert_eq!(report.errors[0].filename.as_deref(), Some("missing.png"));
        assert_eq!(report.errors[1].line, 4);
        let labels = read_labels(&out.join(LABELS_FILE)).unwrap();
        assert_eq!(labels, vec![row("f1.png", 200, 150), row("f2.png", 100, 75)]);
        assert_eq!(report.pair.labels, labels);
        let b = DatasetPair::load(&out).unwrap().load_b("f1.png").unwrap();
        assert_eq!(b.pixels().get_pixel(200, 150).0, [45, 253, 9]);
    }
}
