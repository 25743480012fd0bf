use std::cmp::Ordering;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ARCHIVE_FORMAT: &str = "hrir-archive";
pub const ARCHIVE_VERSION: u32 = 1;

/// Number of ears per subject; index 0 is left, 1 is right.
pub const EARS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ear {
    Left = 0,
    Right = 1,
}

impl Ear {
    pub const ALL: [Ear; 2] = [Ear::Left, Ear::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Ear::Left => "left",
            Ear::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    /// Elevation 0°.
    Front,
    /// Elevation 180°.
    Rear,
}

impl Hemisphere {
    pub fn name(self) -> &'static str {
        match self {
            Hemisphere::Front => "front",
            Hemisphere::Rear => "rear",
        }
    }
}

/// Horizontal-plane direction in interaural-polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Direction {
    pub azimuth_deg: f64,
    pub hemisphere: Hemisphere,
}

/// The 25 azimuths sampled per hemisphere on the CIPIC grid.
pub const CIPIC_AZIMUTHS: [f64; 25] = [
    -80.0, -65.0, -55.0, -45.0, -40.0, -35.0, -30.0, -25.0, -20.0, -15.0, -10.0, -5.0, 0.0, 5.0,
    10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 55.0, 65.0, 80.0,
];

impl Direction {
    pub fn front(azimuth_deg: f64) -> Self {
        Self {
            azimuth_deg,
            hemisphere: Hemisphere::Front,
        }
    }

    pub fn rear(azimuth_deg: f64) -> Self {
        Self {
            azimuth_deg,
            hemisphere: Hemisphere::Rear,
        }
    }

    /// 50 horizontal-plane slots: 25 front azimuths then the same 25 at the rear.
    pub fn cipic_horizontal() -> Vec<Direction> {
        CIPIC_AZIMUTHS
            .iter()
            .map(|&a| Direction::front(a))
            .chain(CIPIC_AZIMUTHS.iter().map(|&a| Direction::rear(a)))
            .collect()
    }

    /// Manifest order: front before rear, then ascending azimuth.
    pub fn order(&self, other: &Direction) -> Ordering {
        self.hemisphere
            .cmp(&other.hemisphere)
            .then(self.azimuth_deg.total_cmp(&other.azimuth_deg))
    }

    pub fn label(&self) -> String {
        format!("{}{:+}", self.hemisphere.name(), self.azimuth_deg)
    }
}

pub fn validate_directions(directions: &[Direction]) -> Result<()> {
    if directions.is_empty() {
        return Err(Error::Direction("direction table is empty".into()));
    }
    for d in directions {
        if !d.azimuth_deg.is_finite() || d.azimuth_deg.abs() > 90.0 {
            return Err(Error::Direction(format!(
                "azimuth {} outside [-90, 90]",
                d.azimuth_deg
            )));
        }
    }
    for pair in directions.windows(2) {
        if pair[0].order(&pair[1]) != Ordering::Less {
            return Err(Error::Direction(format!(
                "{} followed by {}",
                pair[0].label(),
                pair[1].label()
            )));
        }
    }
    Ok(())
}

fn validate_subject_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::SubjectMismatch(format!(
            "subject id '{id}' must be non-empty and use only [A-Za-z0-9_-]"
        )))
    }
}

/// Measured impulse responses for a subject population, indexed
/// [subject][ear][direction][sample].
#[derive(Debug, Clone, PartialEq)]
pub struct HrirArchive {
    sample_rate: f64,
    hrir_length: usize,
    subjects: Vec<String>,
    directions: Vec<Direction>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    sample_rate: f64,
    hrir_length: usize,
    subjects: Vec<String>,
    directions: Vec<Direction>,
}

impl HrirArchive {
    pub fn new(
        sample_rate: f64,
        hrir_length: usize,
        subjects: Vec<String>,
        directions: Vec<Direction>,
        data: Vec<f64>,
    ) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::Config(format!("sample rate must be positive, got {sample_rate}")));
        }
        if hrir_length == 0 {
            return Err(Error::Config("hrir_length must be at least 1".into()));
        }
        if subjects.is_empty() {
            return Err(Error::Empty("archive has no subjects".into()));
        }
        for (i, s) in subjects.iter().enumerate() {
            validate_subject_id(s)?;
            if subjects[..i].contains(s) {
                return Err(Error::SubjectMismatch(format!("duplicate subject id '{s}'")));
            }
        }
        validate_directions(&directions)?;
        let expected = subjects.len() * EARS * directions.len() * hrir_length;
        if data.len() != expected {
            return Err(Error::SizeMismatch {
                what: "archive data".into(),
                expected,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "archive data".into(),
                index,
            });
        }
        Ok(Self {
            sample_rate,
            hrir_length,
            subjects,
            directions,
            data,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn hrir_length(&self) -> usize {
        self.hrir_length
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s == id)
    }

    fn subject_block_len(&self) -> usize {
        EARS * self.directions.len() * self.hrir_length
    }

    pub fn hrir(&self, subject: usize, ear: usize, direction: usize) -> &[f64] {
        let start = subject * self.subject_block_len()
            + (ear * self.directions.len() + direction) * self.hrir_length;
        &self.data[start..start + self.hrir_length]
    }

    /// New archive containing only the given subjects, in the given order.
    pub fn select_subjects(&self, indices: &[usize]) -> Result<Self> {
        let block = self.subject_block_len();
        let mut data = Vec::with_capacity(indices.len() * block);
        let mut subjects = Vec::with_capacity(indices.len());
        for &i in indices {
            let id = self.subjects.get(i).ok_or_else(|| {
                Error::SubjectMismatch(format!("subject index {i} out of range"))
            })?;
            subjects.push(id.clone());
            data.extend_from_slice(&self.data[i * block..(i + 1) * block]);
        }
        Self::new(
            self.sample_rate,
            self.hrir_length,
            subjects,
            self.directions.clone(),
            data,
        )
    }

    /// Loads an archive from a manifest file or a directory containing `manifest.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest_path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let dir = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let text = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| Error::Manifest {
            path: manifest_path.clone(),
            msg: e.to_string(),
        })?;
        if manifest.format != ARCHIVE_FORMAT || manifest.version != ARCHIVE_VERSION {
            return Err(Error::Manifest {
                path: manifest_path,
                msg: format!(
                    "expected format '{ARCHIVE_FORMAT}' version {ARCHIVE_VERSION}, found '{}' version {}",
                    manifest.format, manifest.version
                ),
            });
        }
        for s in &manifest.subjects {
            validate_subject_id(s)?;
        }
        let per_subject = EARS * manifest.directions.len() * manifest.hrir_length;
        let mut data = Vec::with_capacity(per_subject * manifest.subjects.len());
        for id in &manifest.subjects {
            let file = dir.join(subject_file_name(id));
            let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            if bytes.len() != per_subject * 8 {
                return Err(Error::SizeMismatch {
                    what: file.display().to_string(),
                    expected: per_subject,
                    found: bytes.len() / 8,
                });
            }
            data.extend(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))),
            );
        }
        Self::new(
            manifest.sample_rate,
            manifest.hrir_length,
            manifest.subjects,
            manifest.directions,
            data,
        )
    }

    /// Writes `manifest.json` and one `subject_<id>.f64le` per subject into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            format: ARCHIVE_FORMAT.into(),
            version: ARCHIVE_VERSION,
            sample_rate: self.sample_rate,
            hrir_length: self.hrir_length,
            subjects: self.subjects.clone(),
            directions: self.directions.clone(),
        };
        let mut text = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::json("manifest", e))?;
        text.push(b'\n');
        let block = self.subject_block_len();
        for (i, id) in self.subjects.iter().enumerate() {
            let bytes: Vec<u8> = self.data[i * block..(i + 1) * block]
                .iter()
                .flat_map(|x| x.to_le_bytes())
                .collect();
            write_atomic(&dir.join(subject_file_name(id)), &bytes)?;
        }
        write_atomic(&dir.join(MANIFEST_FILE), &text)
    }
}

pub fn subject_file_name(id: &str) -> String {
    format!("subject_{id}.f64le")
}

/// Writes through a temporary file in the target directory and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
