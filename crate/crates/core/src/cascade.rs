//! Five-grade prediction from a tree of binary classifiers.
//!
//! Every internal node splits its class set into a left and a right side and
//! carries a binary model whose sigmoid score is the probability of the
//! right side. A grade's probability is the product of branch probabilities
//! along its root-to-leaf path.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ImageRecord;
use crate::metrics::{argmax_decision, MetricsError, Scores};
use crate::modelkit::{load_checkpoint, Classifier, ModelError, Tensor};

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("no score for cascade node `{0}`")]
    MissingScore(String),
    #[error("score {score} for node `{node}` is outside [0, 1]")]
    ScoreOutOfRange { node: String, score: f64 },
    #[error("invalid cascade tree: {0}")]
    InvalidTree(String),
    #[error("no model for cascade node `{node}`{}", path.as_ref().map(|p| format!(" at {}", p.display())).unwrap_or_default())]
    MissingNodeModel { node: String, path: Option<PathBuf> },
    #[error("cascade file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeNode {
    pub id: String,
    /// Checkpoint sidecar of the node's binary model, relative to the
    /// cascade file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_ref: Option<PathBuf>,
    pub left_classes: Vec<u8>,
    pub right_classes: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<Box<CascadeNode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<Box<CascadeNode>>,
}

impl CascadeNode {
    pub fn new(id: &str, left_classes: &[u8], right_classes: &[u8]) -> Self {
        Self {
            id: id.into(),
            model_ref: None,
            left_classes: left_classes.to_vec(),
            right_classes: right_classes.to_vec(),
            left: None,
            right: None,
        }
    }

    pub fn with_children(mut self, left: Option<CascadeNode>, right: Option<CascadeNode>) -> Self {
        self.left = left.map(Box::new);
        self.right = right.map(Box::new);
        self
    }

    pub fn classes(&self) -> BTreeSet<u8> {
        self.left_classes.iter().chain(&self.right_classes).copied().collect()
    }

    pub fn child(&self, side: Side) -> Option<&CascadeNode> {
        match side {
            Side::Left => self.left.as_deref(),
            Side::Right => self.right.as_deref(),
        }
    }

    pub fn side_classes(&self, side: Side) -> &[u8] {
        match side {
            Side::Left => &self.left_classes,
            Side::Right => &self.right_classes,
        }
    }

    /// Binary label for a grade at this node: 0 left, 1 right, `None` when
    /// the grade does not reach the node.
    pub fn label_of(&self, grade: u8) -> Option<usize> {
        if self.left_classes.contains(&grade) {
            Some(0)
        } else if self.right_classes.contains(&grade) {
            Some(1)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTree {
    pub root: CascadeNode,
    pub classes: Vec<u8>,
}

/// {0} | {1,2,3,4}, then {1,2} | {3,4}, then 1 | 2 and 3 | 4.
pub fn build_default_tree() -> CascadeTree {
    let mild = CascadeNode::new("mild_vs_moderate", &[1], &[2]);
    let severe = CascadeNode::new("severe_vs_proliferative", &[3], &[4]);
    let stage = CascadeNode::new("nonsevere_vs_severe", &[1, 2], &[3, 4]).with_children(Some(mild), Some(severe));
    let root = CascadeNode::new("no_dr_vs_dr", &[0], &[1, 2, 3, 4]).with_children(None, Some(stage));
    CascadeTree { root, classes: vec![0, 1, 2, 3, 4] }
}

impl CascadeTree {
    /// Checks that sides are disjoint and non-empty, that every multi-class
    /// side has a child over exactly that set, that node ids are unique, and
    /// that the leaves partition `classes`.
    pub fn validate(&self) -> Result<(), CascadeError> {
        let bad = |m: String| Err(CascadeError::InvalidTree(m));
        let mut sorted = self.classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.classes.len() || sorted.len() < 2 {
            return bad("classes must be at least two distinct grades".into());
        }
        if self.root.classes() != sorted.iter().copied().collect() {
            return bad("root does not cover exactly the tree's classes".into());
        }
        let mut ids = BTreeSet::new();
        for node in self.internal_nodes() {
            if !ids.insert(node.id.as_str()) {
                return bad(format!("duplicate node id `{}`", node.id));
            }
            if node.left_classes.is_empty() || node.right_classes.is_empty() {
                return bad(format!("node `{}` has an empty side", node.id));
            }
            let left: BTreeSet<u8> = node.left_classes.iter().copied().collect();
            if node.right_classes.iter().any(|c| left.contains(c)) {
                return bad(format!("node `{}` has overlapping sides", node.id));
            }
            for side in [Side::Left, Side::Right] {
                let classes: BTreeSet<u8> = node.side_classes(side).iter().copied().collect();
                match (classes.len(), node.child(side)) {
                    (1, None) => {}
                    (_, Some(child)) if child.classes() == classes => {}
                    (1, Some(_)) => return bad(format!("node `{}` has a child under a single class", node.id)),
                    _ => return bad(format!("node `{}`: side {classes:?} needs a child over exactly it", node.id)),
                }
            }
        }
        Ok(())
    }

    /// Internal nodes in pre-order.
    pub fn internal_nodes(&self) -> Vec<&CascadeNode> {
        fn walk<'a>(n: &'a CascadeNode, out: &mut Vec<&'a CascadeNode>) {
            out.push(n);
            for side in [Side::Left, Side::Right] {
                if let Some(c) = n.child(side) {
                    walk(c, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Nodes and branches from the root to `grade`'s leaf.
    pub fn path_to(&self, grade: u8) -> Option<Vec<(&CascadeNode, Side)>> {
        let mut path = Vec::new();
        let mut node = &self.root;
        loop {
            let side = match node.label_of(grade)? {
                0 => Side::Left,
                _ => Side::Right,
            };
            path.push((node, side));
            match node.child(side) {
                Some(c) => node = c,
                None => return Some(path),
            }
        }
    }
}

/// Probability of each of `tree.classes` (in that order).
pub fn path_probabilities(tree: &CascadeTree, node_scores: &HashMap<String, f64>) -> Result<Vec<f64>, CascadeError> {
    let mut out = vec![0.0; tree.classes.len()];
    fn walk(
        node: &CascadeNode,
        mass: f64,
        scores: &HashMap<String, f64>,
        classes: &[u8],
        out: &mut [f64],
    ) -> Result<(), CascadeError> {
        let s = *scores.get(&node.id).ok_or_else(|| CascadeError::MissingScore(node.id.clone()))?;
        if !(0.0..=1.0).contains(&s) {
            return Err(CascadeError::ScoreOutOfRange { node: node.id.clone(), score: s });
        }
        for (side, p) in [(Side::Left, 1.0 - s), (Side::Right, s)] {
            match node.child(side) {
                Some(child) => walk(child, mass * p, scores, classes, out)?,
                None => {
                    let grade = node.side_classes(side)[0];
                    let idx = classes
                        .iter()
                        .position(|&c| c == grade)
                        .ok_or_else(|| CascadeError::InvalidTree(format!("grade {grade} not in tree classes")))?;
                    out[idx] += mass * p;
                }
            }
        }
        Ok(())
    }
    walk(&tree.root, 1.0, node_scores, &tree.classes, &mut out)?;
    Ok(out)
}

/// The grade with the highest path probability; ties go to the lower index.
pub fn cascade_predict(tree: &CascadeTree, node_scores: &HashMap<String, f64>) -> Result<u8, CascadeError> {
    let probs = path_probabilities(tree, node_scores)?;
    Ok(tree.classes[argmax_decision(&probs)?])
}

/// Training records for one node: grades outside the node are dropped, the
/// rest are relabelled 0 (left) or 1 (right).
pub fn node_records(records: &[ImageRecord], node: &CascadeNode) -> Vec<ImageRecord> {
    records
        .iter()
        .filter_map(|r| {
            let label = node.label_of(r.grade.value())?;
            let mut r = r.clone();
            r.task_label = Some(label);
            Some(r)
        })
        .collect()
}

pub fn load_tree(path: &Path) -> Result<CascadeTree, CascadeError> {
    let file_err = |message: String| CascadeError::File { path: path.to_path_buf(), message };
    let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    let tree: CascadeTree = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
    tree.validate()?;
    Ok(tree)
}

pub fn save_tree(tree: &CascadeTree, path: &Path) -> Result<(), CascadeError> {
    let file_err = |message: String| CascadeError::File { path: path.to_path_buf(), message };
    let json = serde_json::to_string_pretty(tree).map_err(|e| file_err(e.to_string()))?;
    fs::write(path, json + "\n").map_err(|e| file_err(e.to_string()))
}

/// Loaded node models keyed by node id.
pub struct CascadeModels {
    pub tree: CascadeTree,
    pub models: HashMap<String, Classifier>,
}

impl CascadeModels {
    /// Loads every node's checkpoint; `model_ref`s resolve against `base_dir`.
    pub fn load(tree: CascadeTree, base_dir: &Path) -> Result<Self, CascadeError> {
        tree.validate()?;
        let mut models = HashMap::new();
        for node in tree.internal_nodes() {
            let missing = |path| CascadeError::MissingNodeModel { node: node.id.clone(), path };
            let path = base_dir.join(node.model_ref.as_ref().ok_or_else(|| missing(None))?);
            if !path.is_file() {
                return Err(missing(Some(path)));
            }
            let (model, _) = load_checkpoint(&path)?;
            if model.spec().head.output_nodes != 1 {
                return Err(CascadeError::InvalidTree(format!("node `{}` needs a binary model", node.id)));
            }
            models.insert(node.id.clone(), model);
        }
        Ok(Self { tree, models })
    }

    /// Per-sample node scores for a batch. Nodes are evaluated concurrently.
    pub fn node_scores(&self, batch: &Tensor) -> Result<Vec<HashMap<String, f64>>, CascadeError> {
        let per_node: Vec<(String, Vec<f64>)> = self
            .models
            .par_iter()
            .map(|(id, model)| match model.forward(batch)? {
                Scores::Binary(s) => Ok((id.clone(), s)),
                Scores::Multiclass(_) => Err(CascadeError::InvalidTree(format!("node `{id}` is not binary"))),
            })
            .collect::<Result<_, CascadeError>>()?;
        let mut out = vec![HashMap::new(); batch.batch()];
        for (id, scores) in per_node {
            for (sample, s) in out.iter_mut().zip(scores) {
                sample.insert(id.clone(), s);
            }
        }
        Ok(out)
    }

    /// Five-way probability rows for a batch.
    pub fn predict_proba(&self, batch: &Tensor) -> Result<Vec<Vec<f64>>, CascadeError> {
        self.node_scores(batch)?.iter().map(|s| path_probabilities(&self.tree, s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn default_scores(root: f64, stage: f64, mild: f64, severe: f64) -> HashMap<String, f64> {
        scores(&[
            ("no_dr_vs_dr", root),
            ("nonsevere_vs_severe", stage),
            ("mild_vs_moderate", mild),
            ("severe_vs_proliferative", severe),
        ])
    }

    #[test]
    fn default_tree_shape() {
        let t = build_default_tree();
        t.validate().unwrap();
        assert_eq!(t.internal_nodes().len(), 4);
        assert_eq!(t.path_to(0).unwrap().len(), 1);
        for g in 0..5 {
            assert!(t.path_to(g).is_some());
        }
        assert!(t.path_to(7).is_none());
    }

    #[test]
    fn all_zero_scores() {
        let p = path_probabilities(&build_default_tree(), &default_scores(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_and_bad_scores() {
        let t = build_default_tree();
        let s = scores(&[("no_dr_vs_dr", 0.5)]);
        assert!(matches!(path_probabilities(&t, &s), Err(CascadeError::MissingScore(id)) if id == "nonsevere_vs_severe"));
        let s = default_scores(1.5, 0.0, 0.0, 0.0);
        assert!(matches!(path_probabilities(&t, &s), Err(CascadeError::ScoreOutOfRange { .. })));
    }

    #[test]
    fn validation_catches_broken_trees() {
        let mut t = build_default_tree();
        t.root.right = None;
        assert!(t.validate().is_err());
        let mut t = build_default_tree();
        t.root.left_classes = vec![0, 1];
        assert!(t.validate().is_err());
        let mut t = build_default_tree();
        t.root.right.as_mut().unwrap().id = "no_dr_vs_dr".into();
        assert!(t.validate().is_err());
    }

    #[test]
    fn node_records_relabel() {
        use crate::dataset::DiagnosisGrade;
        let recs: Vec<ImageRecord> =
            (0..5).map(|g| ImageRecord::new(format!("r{g}"), "x.png", DiagnosisGrade::new(g).unwrap())).collect();
        let t = build_default_tree();
        let stage = t.root.right.as_deref().unwrap();
        let sub = node_records(&recs, stage);
        let labels: Vec<_> = sub.iter().map(|r| (r.grade.value(), r.task_label.unwrap())).collect();
        assert_eq!(labels, vec![(1, 0), (2, 0), (3, 1), (4, 1)]);
    }

    #[test]
    fn tree_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cascade.json");
        let mut t = build_default_tree();
        t.root.model_ref = Some("root/best.json".into());
        save_tree(&t, &path).unwrap();
        assert_eq!(load_tree(&path).unwrap(), t);
    }
}
