//! Datasets of users, videos and per-utterance features.
//!
//! On disk a dataset is a TOML manifest next to five CSV files:
//!
//! * users: `user_id` followed by one column per declared cue; if any score
//!   falls outside `[0, 1]` every cue column is min-max rescaled over the file;
//! * labels: `video_id,user_id,utterance,label` with `utterance` counting
//!   from 1 and `label` either 0 (negative) or 1 (positive);
//! * one feature file per modality: `video_id,utterance,f1..fd`.
//!
//! Relative paths in the manifest resolve against the manifest's directory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cogspace::{normalize_min_max, CueSet, SpaceError, SurrogatePoint};
use crate::neural::{FeatureSequence, Modality};
use crate::partition::{LabeledUser, Sentiment};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("{}, row {row}: {message}", file.display())]
    Parse { file: PathBuf, row: u64, message: String },
    #[error("{}, row {row}: video {video} belongs to unknown user {user}", file.display())]
    MissingUser { file: PathBuf, row: u64, video: String, user: String },
    #[error("{}, row {row}: label {value:?} is not 0 or 1", file.display())]
    BadLabel { file: PathBuf, row: u64, value: String },
    #[error("{}, row {row}: expected {expected} feature values, found {found}", file.display())]
    Ragged { file: PathBuf, row: u64, expected: usize, found: usize },
    #[error("{}, row {row}: unknown video {video} or utterance {utterance}", file.display())]
    UnknownUtterance { file: PathBuf, row: u64, video: String, utterance: usize },
    #[error("{}, row {row}: duplicate entry for {what}", file.display())]
    Duplicate { file: PathBuf, row: u64, what: String },
    #[error("{}: video {video} utterances are not numbered 1..{len} contiguously", file.display())]
    NonContiguous { file: PathBuf, video: String, len: usize },
    #[error("{}: video {video} utterance {utterance} has no features", file.display())]
    MissingFeatures { file: PathBuf, video: String, utterance: usize },
    #[error("{}, row {row}: {source}", file.display())]
    Cue {
        file: PathBuf,
        row: u64,
        #[source]
        source: SpaceError,
    },
    #[error("dataset has no videos")]
    Empty,
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Feature widths per modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub acoustic: usize,
    pub visual: usize,
    pub textual: usize,
}

impl FeatureDims {
    pub fn as_array(&self) -> [usize; 3] {
        [self.acoustic, self.visual, self.textual]
    }

    pub fn from_array(d: [usize; 3]) -> Self {
        Self {
            acoustic: d[0],
            visual: d[1],
            textual: d[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFiles {
    pub acoustic: PathBuf,
    pub visual: PathBuf,
    pub textual: PathBuf,
}

impl FeatureFiles {
    fn get(&self, m: Modality) -> &Path {
        match m {
            Modality::Acoustic => &self.acoustic,
            Modality::Visual => &self.visual,
            Modality::Textual => &self.textual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub cues: Vec<String>,
    pub users: PathBuf,
    pub labels: PathBuf,
    pub features: FeatureFiles,
    pub dims: FeatureDims,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| DataError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: String,
    pub user_id: String,
    /// Padded to the dataset-wide maximum length.
    pub sequence: FeatureSequence,
}

impl Video {
    pub fn labels(&self) -> impl Iterator<Item = Sentiment> + '_ {
        self.sequence.labels.iter().flatten().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cues: CueSet,
    pub dims: [usize; 3],
    /// Longest video; every sequence has this many columns.
    pub g: usize,
    pub users: Vec<SurrogatePoint>,
    pub videos: Vec<Video>,
}

impl Dataset {
    pub fn user(&self, id: &str) -> Option<&SurrogatePoint> {
        self.users.iter().find(|u| u.user_id == id)
    }

    /// Users with their concatenated utterance labels, in user order. Users
    /// without any video are left out.
    pub fn labeled_users(&self) -> Vec<LabeledUser> {
        let mut labels: HashMap<&str, Vec<Sentiment>> = HashMap::new();
        for v in &self.videos {
            labels.entry(v.user_id.as_str()).or_default().extend(v.labels());
        }
        self.users
            .iter()
            .filter_map(|u| {
                let l = labels.remove(u.user_id.as_str())?;
                (!l.is_empty()).then(|| LabeledUser::new(u.clone(), l))
            })
            .collect()
    }

    /// The users listed (and their videos), keeping `g`.
    pub fn subset(&self, user_ids: &[&str]) -> Dataset {
        let keep: HashSet<&str> = user_ids.iter().copied().collect();
        Dataset {
            cues: self.cues.clone(),
            dims: self.dims,
            g: self.g,
            users: self.users.iter().filter(|u| keep.contains(u.user_id.as_str())).cloned().collect(),
            videos: self.videos.iter().filter(|v| keep.contains(v.user_id.as_str())).cloned().collect(),
        }
    }

    pub fn utterance_count(&self) -> usize {
        self.videos.iter().map(|v| v.sequence.real_len()).sum()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(file))
}

fn parse_err(file: &Path, row: u64, message: impl Into<String>) -> DataError {
    DataError::Parse {
        file: file.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn records(path: &Path) -> Result<(csv::StringRecord, Vec<(u64, csv::StringRecord)>)> {
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            parse_err(path, row, e.to_string())
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        rows.push((row, rec));
    }
    Ok((header, rows))
}

fn field<'r>(file: &Path, row: u64, rec: &'r csv::StringRecord, i: usize, name: &str) -> Result<&'r str> {
    rec.get(i).ok_or_else(|| parse_err(file, row, format!("missing column {name}")))
}

fn number<T: std::str::FromStr>(file: &Path, row: u64, text: &str, name: &str) -> Result<T> {
    text.parse().map_err(|_| parse_err(file, row, format!("{name} {text:?} is not a number")))
}

/// Reads and cross-checks a dataset described by a manifest file.
pub fn ingest(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let bad_manifest = |message: String| DataError::Manifest {
        path: manifest_path.to_path_buf(),
        message,
    };
    let cues = CueSet::new(manifest.cues.clone()).map_err(|e| bad_manifest(e.to_string()))?;
    let dims = manifest.dims.as_array();

    // users
    let users_path = resolve(&manifest.users);
    let (header, rows) = records(&users_path)?;
    let mut columns = Vec::with_capacity(cues.len());
    for name in cues.names() {
        let i = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(&users_path, 1, format!("no column for cue {name}")))?;
        columns.push(i);
    }
    let id_col = header
        .iter()
        .position(|h| h == "user_id")
        .ok_or_else(|| parse_err(&users_path, 1, "no user_id column"))?;
    let mut users = Vec::with_capacity(rows.len());
    let mut user_ids = HashSet::new();
    for (row, rec) in &rows {
        let id = field(&users_path, *row, rec, id_col, "user_id")?.to_string();
        let mut coords = Vec::with_capacity(cues.len());
        for (&c, name) in columns.iter().zip(cues.names()) {
            coords.push(number::<f64>(&users_path, *row, field(&users_path, *row, rec, c, name)?, name)?);
        }
        let point = SurrogatePoint::new(id.clone(), coords);
        // range is fixed by the rescale below; only shape and finiteness count here
        let mut probe = point.clone();
        probe.coords.iter_mut().filter(|v| v.is_finite()).for_each(|v| *v = v.clamp(0.0, 1.0));
        probe.validate(&cues).map_err(|source| DataError::Cue {
            file: users_path.clone(),
            row: *row,
            source,
        })?;
        if !user_ids.insert(id.clone()) {
            return Err(DataError::Duplicate {
                file: users_path.clone(),
                row: *row,
                what: format!("user {id}"),
            });
        }
        users.push(point);
    }
    normalize_min_max(&mut users).map_err(|source| DataError::Cue {
        file: users_path.clone(),
        row: 1,
        source,
    })?;

    // labels
    let labels_path = resolve(&manifest.labels);
    let (_, rows) = records(&labels_path)?;
    let mut order: Vec<String> = Vec::new();
    let mut owner: HashMap<String, String> = HashMap::new();
    let mut labels: HashMap<String, BTreeMap<usize, Sentiment>> = HashMap::new();
    for (row, rec) in &rows {
        let row = *row;
        let video = field(&labels_path, row, rec, 0, "video_id")?.to_string();
        let user = field(&labels_path, row, rec, 1, "user_id")?.to_string();
        let utt: usize = number(&labels_path, row, field(&labels_path, row, rec, 2, "utterance")?, "utterance")?;
        let raw = field(&labels_path, row, rec, 3, "label")?;
        let label = match raw {
            "0" => Sentiment::Negative,
            "1" => Sentiment::Positive,
            _ => {
                return Err(DataError::BadLabel {
                    file: labels_path.clone(),
                    row,
                    value: raw.to_string(),
                })
            }
        };
        if !user_ids.contains(&user) {
            return Err(DataError::MissingUser {
                file: labels_path.clone(),
                row,
                video,
                user,
            });
        }
        match owner.get(&video) {
            Some(u) if *u != user => {
                return Err(parse_err(&labels_path, row, format!("video {video} listed under users {u} and {user}")))
            }
            Some(_) => {}
            None => {
                owner.insert(video.clone(), user.clone());
                order.push(video.clone());
            }
        }
        if labels.entry(video.clone()).or_default().insert(utt, label).is_some() {
            return Err(DataError::Duplicate {
                file: labels_path.clone(),
                row,
                what: format!("video {video} utterance {utt}"),
            });
        }
    }
    if order.is_empty() {
        return Err(DataError::Empty);
    }
    for video in &order {
        let utts = &labels[video];
        if utts.keys().copied().ne(1..=utts.len()) {
            return Err(DataError::NonContiguous {
                file: labels_path.clone(),
                video: video.clone(),
                len: utts.len(),
            });
        }
    }
    let g = order.iter().map(|v| labels[v].len()).max().unwrap_or(0);

    // features
    let mut features: HashMap<&str, [Array2<f64>; 3]> = order
        .iter()
        .map(|v| (v.as_str(), std::array::from_fn(|m| Array2::zeros((dims[m], g)))))
        .collect();
    for m in Modality::ALL {
        let path = resolve(manifest.features.get(m));
        let (_, rows) = records(&path)?;
        let mut seen = HashSet::new();
        for (row, rec) in &rows {
            let row = *row;
            let video = field(&path, row, rec, 0, "video_id")?;
            let utt: usize = number(&path, row, field(&path, row, rec, 1, "utterance")?, "utterance")?;
            if rec.len() - 2 != dims[m.index()] {
                return Err(DataError::Ragged {
                    file: path.clone(),
                    row,
                    expected: dims[m.index()],
                    found: rec.len() - 2,
                });
            }
            let known = labels.get(video).is_some_and(|u| u.contains_key(&utt));
            let Some(slot) = features.get_mut(video).filter(|_| known) else {
                return Err(DataError::UnknownUtterance {
                    file: path.clone(),
                    row,
                    video: video.to_string(),
                    utterance: utt,
                });
            };
            if !seen.insert((video.to_string(), utt)) {
                return Err(DataError::Duplicate {
                    file: path.clone(),
                    row,
                    what: format!("video {video} utterance {utt}"),
                });
            }
            for (j, text) in rec.iter().skip(2).enumerate() {
                let v: f64 = number(&path, row, text, "feature")?;
                if !v.is_finite() {
                    return Err(parse_err(&path, row, format!("feature {text:?} is not finite")));
                }
                slot[m.index()][[j, utt - 1]] = v;
            }
        }
        for video in &order {
            for &utt in labels[video].keys() {
                if !seen.contains(&(video.clone(), utt)) {
                    return Err(DataError::MissingFeatures {
                        file: path.clone(),
                        video: video.clone(),
                        utterance: utt,
                    });
                }
            }
        }
    }

    let videos = order
        .iter()
        .map(|v| {
            let utts = &labels[v];
            let mask: Vec<bool> = (0..g).map(|t| t < utts.len()).collect();
            let seq_labels = (0..g).map(|t| utts.get(&(t + 1)).copied()).collect();
            Video {
                id: v.clone(),
                user_id: owner[v].clone(),
                sequence: FeatureSequence {
                    features: features.remove(v.as_str()).expect("every video has a slot"),
                    mask,
                    labels: seq_labels,
                },
            }
        })
        .collect();
    Ok(Dataset {
        cues,
        dims,
        g,
        users,
        videos,
    })
}

const USERS_FILE: &str = "users.csv";
const LABELS_FILE: &str = "labels.csv";

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_err(path, 0, e.to_string()))?;
    let wrap = |e: csv::Error| parse_err(path, 0, e.to_string());
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the dataset as a manifest plus CSV files into `dir` and returns the
/// manifest path. Reals are written in shortest round-trip form.
pub fn emit(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut header = vec!["user_id".to_string()];
    header.extend(dataset.cues.names().iter().cloned());
    write_csv(
        &dir.join(USERS_FILE),
        &header,
        dataset.users.iter().map(|u| {
            let mut r = vec![u.user_id.clone()];
            r.extend(u.coords.iter().map(|c| c.to_string()));
            r
        }),
    )?;

    let header: Vec<String> = ["video_id", "user_id", "utterance", "label"].map(String::from).to_vec();
    write_csv(
        &dir.join(LABELS_FILE),
        &header,
        dataset.videos.iter().flat_map(|v| {
            v.sequence.labels.iter().enumerate().filter_map(move |(t, l)| {
                l.map(|l| vec![v.id.clone(), v.user_id.clone(), (t + 1).to_string(), l.index().to_string()])
            })
        }),
    )?;

    for m in Modality::ALL {
        let d = dataset.dims[m.index()];
        let mut header: Vec<String> = vec!["video_id".into(), "utterance".into()];
        header.extend((1..=d).map(|j| format!("f{j}")));
        write_csv(
            &dir.join(format!("{}.csv", m.name())),
            &header,
            dataset.videos.iter().flat_map(|v| {
                let x = v.sequence.modality(m);
                (0..v.sequence.real_len()).map(move |t| {
                    let mut r = vec![v.id.clone(), (t + 1).to_string()];
                    r.extend(x.column(t).iter().map(|f| f.to_string()));
                    r
                })
            }),
        )?;
    }

    let manifest = DatasetManifest {
        cues: dataset.cues.names().to_vec(),
        users: USERS_FILE.into(),
        labels: LABELS_FILE.into(),
        features: FeatureFiles {
            acoustic: format!("{}.csv", Modality::Acoustic.name()).into(),
            visual: format!("{}.csv", Modality::Visual.name()).into(),
            textual: format!("{}.csv", Modality::Textual.name()).into(),
        },
        dims: FeatureDims::from_array(dataset.dims),
    };
    let path = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| DataError::Manifest {
        path: path.clone(),
        message: e.to_string(),
    })?;
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}
