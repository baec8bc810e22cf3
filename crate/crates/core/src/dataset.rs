//! Manifest ingestion, label regrouping, splitting and oversampling.
//!
//! The manifest follows the public APTOS layout: a CSV with header
//! `id_code,diagnosis` whose images live at `<image_dir>/<id_code>.png`.
//! Split files written by this module append `task_label,synthetic,aug_seed`.
//!
//! Synthetic records produced by [`oversample`] keep the `id` of the original
//! they were copied from (their pixels come from that image) and are told
//! apart by `synthetic = true` and their own augmentation seed.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_HEADER: [&str; 2] = ["id_code", "diagnosis"];
pub const SPLIT_HEADER: [&str; 5] = ["id_code", "diagnosis", "task_label", "synthetic", "aug_seed"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    BadHeader { path: PathBuf, expected: String, found: String },
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow { path: PathBuf, line: usize, reason: String },
    #[error("duplicate id `{0}` in manifest")]
    DuplicateId(String),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("class {0} has no records to oversample from")]
    EmptyClass(usize),
    #[error("record `{0}` has no task label")]
    MissingTaskLabel(String),
    #[error("record `{id}` has task label {label}, expected fewer than {class_count}")]
    LabelOutOfRange { id: String, label: usize, class_count: usize },
    #[error("invalid split fractions test={test} val={val}: both must lie in (0, 1)")]
    InvalidFraction { test: f64, val: f64 },
    #[error("csv error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// A diagnosis grade in `0..=4` (no DR, mild, moderate, severe, proliferate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct DiagnosisGrade(u8);

impl DiagnosisGrade {
    pub const COUNT: usize = 5;

    pub fn new(value: u8) -> Option<Self> {
        (value < Self::COUNT as u8).then_some(Self(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = DiagnosisGrade> {
        (0..Self::COUNT as u8).map(DiagnosisGrade)
    }
}

impl TryFrom<u8> for DiagnosisGrade {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value).ok_or_else(|| format!("grade {value} outside 0..=4"))
    }
}

impl From<DiagnosisGrade> for u8 {
    fn from(g: DiagnosisGrade) -> u8 {
        g.0
    }
}

impl fmt::Display for DiagnosisGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Classification task, which fixes how grades are grouped into labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binary,
    Three,
    Five,
}

impl TaskKind {
    pub fn class_count(self) -> usize {
        match self {
            TaskKind::Binary => 2,
            TaskKind::Three => 3,
            TaskKind::Five => 5,
        }
    }

    /// Task label for a grade.
    ///
    /// Binary: `{0} | {1,2,3,4}`. Three: `{0} | {1,2} | {3,4}`. Five: identity.
    pub fn label_of(self, grade: DiagnosisGrade) -> usize {
        let g = grade.value() as usize;
        match self {
            TaskKind::Binary => usize::from(g > 0),
            TaskKind::Three => match g {
                0 => 0,
                1 | 2 => 1,
                _ => 2,
            },
            TaskKind::Five => g,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Binary => "binary",
            TaskKind::Three => "three",
            TaskKind::Five => "five",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub grade: DiagnosisGrade,
    pub task_label: Option<usize>,
    pub synthetic: bool,
    /// Seed for the augmentation applied to a synthetic record's pixels.
    pub aug_seed: Option<u64>,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, image_path: impl Into<PathBuf>, grade: DiagnosisGrade) -> Self {
        Self {
            id: id.into(),
            image_path: image_path.into(),
            grade,
            task_label: None,
            synthetic: false,
            aug_seed: None,
        }
    }

    pub fn label(&self) -> Result<usize, DatasetError> {
        self.task_label.ok_or_else(|| DatasetError::MissingTaskLabel(self.id.clone()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<ImageRecord>,
}

impl Manifest {
    /// Builds a manifest, rejecting duplicate ids.
    pub fn new(records: Vec<ImageRecord>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(DatasetError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn image_path_for(image_dir: &Path, id: &str) -> PathBuf {
    image_dir.join(format!("{id}.png"))
}

/// Reads an `id_code,diagnosis` manifest. Line numbers in errors are 1-based
/// and count the header.
pub fn load_manifest(path: &Path, image_dir: &Path) -> Result<Manifest, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| DatasetError::Csv { path: path.to_path_buf(), source })?;
    check_header(path, &mut reader, &MANIFEST_HEADER)?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|source| DatasetError::Csv { path: path.to_path_buf(), source })?;
        let malformed = |reason: String| DatasetError::MalformedRow { path: path.to_path_buf(), line, reason };
        if row.len() != 2 {
            return Err(malformed(format!("expected 2 fields, found {}", row.len())));
        }
        let id = &row[0];
        if id.is_empty() {
            return Err(malformed("empty id_code".into()));
        }
        let grade = parse_grade(&row[1]).map_err(malformed)?;
        records.push(ImageRecord::new(id, image_path_for(image_dir, id), grade));
    }
    Manifest::new(records)
}

fn parse_grade(field: &str) -> Result<DiagnosisGrade, String> {
    let value: i64 = field.parse().map_err(|_| format!("diagnosis `{field}` is not an integer"))?;
    u8::try_from(value)
        .ok()
        .and_then(DiagnosisGrade::new)
        .ok_or_else(|| format!("diagnosis {value} outside 0..=4"))
}

fn check_header<R: std::io::Read>(
    path: &Path,
    reader: &mut csv::Reader<R>,
    expected: &[&str],
) -> Result<(), DatasetError> {
    let headers = reader
        .headers()
        .map_err(|source| DatasetError::Csv { path: path.to_path_buf(), source })?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(DatasetError::BadHeader {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

/// Assigns every record the task label of its grade.
pub fn regroup_labels(mut manifest: Manifest, task: TaskKind) -> Manifest {
    for r in &mut manifest.records {
        r.task_label = Some(task.label_of(r.grade));
    }
    manifest
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub train: Vec<ImageRecord>,
    pub val: Vec<ImageRecord>,
    pub test: Vec<ImageRecord>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub test_frac: f64,
    pub val_frac: f64,
    /// Split each task label separately. Off by default.
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { test_frac: 0.2, val_frac: 0.2, stratified: false }
    }
}

/// `round(frac * n)` with halves rounded up, capped at `n`.
pub fn rounded_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64 + 0.5).floor() as usize).min(n)
}

/// Sizes `(train, val, test)` for a plain split of `n` records.
pub fn split_sizes(n: usize, test_frac: f64, val_frac: f64) -> (usize, usize, usize) {
    let test = rounded_count(test_frac, n);
    let val = rounded_count(val_frac, n - test);
    (n - test - val, val, test)
}

/// Uniform random split: the test set takes `round(test_frac·N)` records,
/// validation takes `round(val_frac·(N − |test|))` of the rest, the remainder
/// trains. Identical seeds give identical partitions.
pub fn split(manifest: &Manifest, test_frac: f64, val_frac: f64, seed: u64) -> Result<DatasetSplits, DatasetError> {
    split_with(manifest, &SplitConfig { test_frac, val_frac, stratified: false }, seed)
}

pub fn split_with(manifest: &Manifest, cfg: &SplitConfig, seed: u64) -> Result<DatasetSplits, DatasetError> {
    let valid = |f: f64| f > 0.0 && f < 1.0;
    if !valid(cfg.test_frac) || !valid(cfg.val_frac) {
        return Err(DatasetError::InvalidFraction { test: cfg.test_frac, val: cfg.val_frac });
    }
    if manifest.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DatasetSplits { train: Vec::new(), val: Vec::new(), test: Vec::new(), seed };

    let groups: Vec<Vec<&ImageRecord>> = if cfg.stratified {
        let k = manifest.records.iter().filter_map(|r| r.task_label).max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); k];
        for r in &manifest.records {
            groups[r.label()?].push(r);
        }
        groups
    } else {
        vec![manifest.records.iter().collect()]
    };

    for mut group in groups {
        group.shuffle(&mut rng);
        let (_, n_val, n_test) = split_sizes(group.len(), cfg.test_frac, cfg.val_frac);
        for (i, r) in group.into_iter().enumerate() {
            let dest = if i < n_test {
                &mut out.test
            } else if i < n_test + n_val {
                &mut out.val
            } else {
                &mut out.train
            };
            dest.push(r.clone());
        }
    }
    Ok(out)
}

/// Per-class record counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: Vec<usize>,
}

impl ClassDistribution {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `max − min` over classes; zero means perfectly balanced.
    pub fn spread(&self) -> usize {
        let max = self.counts.iter().max().copied().unwrap_or(0);
        let min = self.counts.iter().min().copied().unwrap_or(0);
        max - min
    }
}

/// Counts records per task label over `class_count` classes.
pub fn class_distribution(records: &[ImageRecord], class_count: usize) -> Result<ClassDistribution, DatasetError> {
    let mut counts = vec![0; class_count];
    for r in records {
        let label = r.label()?;
        if label >= class_count {
            counts.resize(label + 1, 0);
        }
        counts[label] += 1;
    }
    Ok(ClassDistribution { counts })
}

/// Tops every class up to the majority-class count with synthetic copies of
/// uniformly drawn originals of that class. Originals come first, unchanged
/// and in input order; synthetic records follow grouped by class.
pub fn oversample(train: &[ImageRecord], class_count: usize, seed: u64) -> Result<Vec<ImageRecord>, DatasetError> {
    let mut by_class: Vec<Vec<&ImageRecord>> = vec![Vec::new(); class_count];
    for r in train {
        let label = r.label()?;
        if label >= class_count {
            return Err(DatasetError::LabelOutOfRange { id: r.id.clone(), label, class_count });
        }
        by_class[label].push(r);
    }
    if let Some(empty) = by_class.iter().position(Vec::is_empty) {
        return Err(DatasetError::EmptyClass(empty));
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = train.to_vec();
    for members in &by_class {
        for _ in members.len()..target {
            let source = members[rng.random_range(0..members.len())];
            let mut copy = source.clone();
            copy.synthetic = true;
            copy.aug_seed = Some(rng.random());
            out.push(copy);
        }
    }
    Ok(out)
}

/// Writes records with the split-file header.
pub fn write_records_csv(path: &Path, records: &[ImageRecord]) -> Result<(), DatasetError> {
    let csv_err = |source| DatasetError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SPLIT_HEADER).map_err(csv_err)?;
    for r in records {
        let label = r.label()?;
        w.write_record([
            r.id.clone(),
            r.grade.to_string(),
            label.to_string(),
            r.synthetic.to_string(),
            r.aug_seed.map(|s| s.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

/// Reads a split file written by [`write_records_csv`].
pub fn read_records_csv(path: &Path, image_dir: &Path) -> Result<Vec<ImageRecord>, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|source| DatasetError::Csv { path: path.to_path_buf(), source })?;
    check_header(path, &mut reader, &SPLIT_HEADER)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|source| DatasetError::Csv { path: path.to_path_buf(), source })?;
        let malformed = |reason: String| DatasetError::MalformedRow { path: path.to_path_buf(), line, reason };
        let grade = parse_grade(&row[1]).map_err(malformed)?;
        let task_label = row[2].parse().map_err(|_| malformed(format!("bad task_label `{}`", &row[2])))?;
        let synthetic = row[3].parse().map_err(|_| malformed(format!("bad synthetic flag `{}`", &row[3])))?;
        let aug_seed = match &row[4] {
            "" => None,
            s => Some(s.parse().map_err(|_| malformed(format!("bad aug_seed `{s}`")))?),
        };
        out.push(ImageRecord {
            id: row[0].to_string(),
            image_path: image_path_for(image_dir, &row[0]),
            grade,
            task_label: Some(task_label),
            synthetic,
            aug_seed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn labelled(labels: &[usize]) -> Vec<ImageRecord> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let mut r = ImageRecord::new(format!("r{i}"), format!("r{i}.png"), DiagnosisGrade::new(0).unwrap());
                r.task_label = Some(l);
                r
            })
            .collect()
    }

    fn manifest_of(n: usize) -> Manifest {
        let records = (0..n)
            .map(|i| ImageRecord::new(format!("id{i}"), format!("id{i}.png"), DiagnosisGrade::new((i % 5) as u8).unwrap()))
            .collect();
        Manifest::new(records).unwrap()
    }

    #[test]
    fn loads_two_rows() {
        let f = write_tmp("id_code,diagnosis\na1,0\nb2,4\n");
        let m = load_manifest(f.path(), Path::new("imgs")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.records[0].grade.value(), 0);
        assert_eq!(m.records[1].grade.value(), 4);
        assert_eq!(m.records[1].image_path, Path::new("imgs/b2.png"));
        assert!(m.records.iter().all(|r| !r.synthetic && r.task_label.is_none()));
    }

    #[test]
    fn out_of_range_grade_is_malformed() {
        let f = write_tmp("id_code,diagnosis\na1,0\nc3,7\n");
        match load_manifest(f.path(), Path::new(".")) {
            Err(DatasetError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("id_code,diagnosis\nc3,x\n");
        assert!(matches!(load_manifest(f.path(), Path::new(".")), Err(DatasetError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_tmp("id_code,diagnosis\na1,0\na1,2\n");
        assert!(matches!(load_manifest(f.path(), Path::new(".")), Err(DatasetError::DuplicateId(id)) if id == "a1"));
    }

    #[test]
    fn missing_file_and_bad_header() {
        assert!(matches!(
            load_manifest(Path::new("/nonexistent/x.csv"), Path::new(".")),
            Err(DatasetError::MissingFile(_))
        ));
        let f = write_tmp("id,grade\na1,0\n");
        assert!(matches!(load_manifest(f.path(), Path::new(".")), Err(DatasetError::BadHeader { .. })));
    }

    #[test]
    fn regrouping_tables() {
        let g = |v| DiagnosisGrade::new(v).unwrap();
        assert_eq!(TaskKind::Binary.label_of(g(0)), 0);
        assert_eq!(TaskKind::Binary.label_of(g(3)), 1);
        assert_eq!(TaskKind::Three.label_of(g(2)), 1);
        assert_eq!(TaskKind::Three.label_of(g(4)), 2);
        assert_eq!(TaskKind::Five.label_of(g(4)), 4);
        for task in [TaskKind::Binary, TaskKind::Three, TaskKind::Five] {
            let labels: Vec<_> = DiagnosisGrade::all().map(|g| task.label_of(g)).collect();
            assert!(labels.windows(2).all(|w| w[0] <= w[1]), "{task} not monotone");
            let distinct: HashSet<_> = labels.iter().collect();
            assert_eq!(distinct.len(), task.class_count(), "{task} not surjective");
        }
    }

    #[test]
    fn split_sizes_examples() {
        assert_eq!(split_sizes(100, 0.2, 0.2), (64, 16, 20));
        assert_eq!(split_sizes(5, 0.2, 0.2), (3, 1, 1));
        let s = split(&manifest_of(100), 0.2, 0.2, 7).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (64, 16, 20));
    }

    #[test]
    fn split_is_seeded() {
        let m = manifest_of(50);
        let a = split(&m, 0.2, 0.2, 11).unwrap();
        let b = split(&m, 0.2, 0.2, 11).unwrap();
        assert_eq!(a, b);
        let c = split(&m, 0.2, 0.2, 12).unwrap();
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(split(&Manifest::default(), 0.2, 0.2, 0), Err(DatasetError::EmptyManifest)));
        assert!(matches!(split(&manifest_of(3), 0.0, 0.2, 0), Err(DatasetError::InvalidFraction { .. })));
        assert!(matches!(split(&manifest_of(3), 0.2, 1.0, 0), Err(DatasetError::InvalidFraction { .. })));
    }

    #[test]
    fn stratified_split_keeps_every_class_in_test() {
        let m = regroup_labels(manifest_of(100), TaskKind::Five);
        let cfg = SplitConfig { stratified: true, ..SplitConfig::default() };
        let s = split_with(&m, &cfg, 3).unwrap();
        let test = class_distribution(&s.test, 5).unwrap();
        assert_eq!(test.counts, vec![4; 5]);
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 100);
    }

    #[test]
    fn oversample_examples() {
        let recs = labelled(&[&[0; 10][..], &[1; 2], &[2; 4]].concat());
        let out = oversample(&recs, 3, 5).unwrap();
        assert_eq!(class_distribution(&out, 3).unwrap().counts, vec![10, 10, 10]);
        assert_eq!(out.iter().filter(|r| r.synthetic).count(), 14);
        assert_eq!(&out[..recs.len()], &recs[..]);
        assert!(out.iter().filter(|r| r.synthetic).all(|r| r.aug_seed.is_some()));
        assert_eq!(out, oversample(&recs, 3, 5).unwrap());

        let balanced = labelled(&[&[0; 7][..], &[1; 7]].concat());
        assert_eq!(oversample(&balanced, 2, 1).unwrap(), balanced);
    }

    #[test]
    fn oversample_rejects_empty_class() {
        let recs = labelled(&[0, 0, 2]);
        assert!(matches!(oversample(&recs, 3, 0), Err(DatasetError::EmptyClass(1))));
    }

    #[test]
    fn distribution_examples() {
        assert_eq!(class_distribution(&labelled(&[0, 0, 1]), 2).unwrap().counts, vec![2, 1]);
        assert_eq!(class_distribution(&[], 3).unwrap().counts, vec![0, 0, 0]);
        let unlabelled = [ImageRecord::new("a", "a.png", DiagnosisGrade::new(1).unwrap())];
        assert!(class_distribution(&unlabelled, 2).is_err());
    }

    #[test]
    fn split_csv_roundtrip() {
        let mut recs = labelled(&[0, 1, 1]);
        let extra = oversample(&recs, 2, 9).unwrap();
        recs = extra;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        write_records_csv(&path, &recs).unwrap();
        let back = read_records_csv(&path, Path::new("")).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!((&a.id, a.grade, a.task_label, a.synthetic, a.aug_seed), (&b.id, b.grade, b.task_label, b.synthetic, b.aug_seed));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn split_partitions_exactly(n in 5usize..=10_000, seed in any::<u64>()) {
                let m = manifest_of(n);
                let s = split(&m, 0.2, 0.2, seed).unwrap();
                let expect_test = ((0.2 * n as f64) + 0.5).floor() as usize;
                let expect_val = ((0.2 * (n - expect_test) as f64) + 0.5).floor() as usize;
                prop_assert_eq!(s.test.len(), expect_test);
                prop_assert_eq!(s.val.len(), expect_val);
                prop_assert_eq!(s.train.len(), n - expect_test - expect_val);
                let mut ids: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).map(|r| r.id.clone()).collect();
                ids.sort();
                let mut all: Vec<_> = m.records.iter().map(|r| r.id.clone()).collect();
                all.sort();
                prop_assert_eq!(ids, all);
            }

            #[test]
            fn oversample_balances(counts in proptest::collection::vec(1usize..40, 2..6), seed in any::<u64>()) {
                let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
                let recs = labelled(&labels);
                let out = oversample(&recs, counts.len(), seed).unwrap();
                let dist = class_distribution(&out, counts.len()).unwrap();
                prop_assert_eq!(dist.spread(), 0);
                prop_assert_eq!(out.iter().filter(|r| !r.synthetic).count(), recs.len());
            }
        }
    }
}
