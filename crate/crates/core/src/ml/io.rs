//! Model files: one JSON header line, then named matrices in plain text.
//!
//! ```text
//! {"format":"avgrasp-model","version":1,"kind":"qnet",...}
//! layer0.w 128 52
//! 0.0132 -0.2241 ...
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! f64, so files round-trip exactly.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::classifier::{ClassifierKind, LinearClassifier};
use super::pca::Pca;
use super::qnet::{Dense, Mlp};
use super::{QModel, SelfSupModel};
use crate::error::{Error, Result};

pub const FORMAT: &str = "avgrasp-model";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub version: u32,
    /// `logistic`, `lda` or `qnet`.
    pub kind: String,
    pub haf_grid: usize,
    pub haf_region_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_components: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
    pub training_objects: Vec<String>,
    pub config_hash: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelFile {
    SelfSup(SelfSupModel),
    Q(QModel),
}

impl ModelFile {
    pub fn training_objects(&self) -> &[String] {
        match self {
            ModelFile::SelfSup(m) => &m.training_objects,
            ModelFile::Q(m) => &m.training_objects,
        }
    }
}

fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    out.push_str(&format!("{name} {} {}\n", m.nrows(), m.ncols()));
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

fn col(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

pub fn to_text(model: &ModelFile) -> String {
    let mut out = String::new();
    match model {
        ModelFile::SelfSup(m) => {
            let header = ModelHeader {
                format: FORMAT.into(),
                version: VERSION,
                kind: m.classifier.kind.name().into(),
                haf_grid: m.haf_grid,
                haf_region_m: m.haf_region_m,
                pca_components: Some(m.pca.n_components()),
                layers: None,
                training_objects: m.training_objects.clone(),
                config_hash: m.config_hash.clone(),
                seed: m.seed,
                heldout_accuracy: m.heldout_accuracy,
            };
            out.push_str(&serde_json::to_string(&header).expect("header serializes"));
            out.push('\n');
            write_matrix(&mut out, "pca.mean", &col(&m.pca.mean));
            write_matrix(&mut out, "pca.components", &m.pca.components);
            write_matrix(
                &mut out,
                "pca.variance",
                &col(&DVector::from_vec(m.pca.explained_variance.clone())),
            );
            write_matrix(&mut out, "clf.mean", &col(&m.classifier.mean));
            write_matrix(&mut out, "clf.scale", &col(&m.classifier.scale));
            write_matrix(&mut out, "clf.weights", &m.classifier.weights);
        }
        ModelFile::Q(m) => {
            let header = ModelHeader {
                format: FORMAT.into(),
                version: VERSION,
                kind: "qnet".into(),
                haf_grid: m.haf_grid,
                haf_region_m: m.haf_region_m,
                pca_components: None,
                layers: Some(m.net.sizes()),
                training_objects: m.training_objects.clone(),
                config_hash: m.config_hash.clone(),
                seed: m.seed,
                heldout_accuracy: None,
            };
            out.push_str(&serde_json::to_string(&header).expect("header serializes"));
            out.push('\n');
            for (i, l) in m.net.layers.iter().enumerate() {
                write_matrix(&mut out, &format!("layer{i}.w"), &l.w);
                write_matrix(&mut out, &format!("layer{i}.b"), &col(&l.b));
            }
        }
    }
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl Reader<'_> {
    fn matrix(&mut self, want: &str) -> Result<DMatrix<f64>> {
        let bad = |line: usize, msg: String| Error::ModelFormat(format!("line {}: {msg}", line + 1));
        let (ln, head) = self
            .lines
            .next()
            .ok_or_else(|| Error::ModelFormat(format!("missing matrix {want}")))?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != want {
            return Err(bad(ln, format!("expected matrix {want}, found {head:?}")));
        }
        let rows: usize = parts[1].parse().map_err(|_| bad(ln, "bad row count".into()))?;
        let cols: usize = parts[2].parse().map_err(|_| bad(ln, "bad column count".into()))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, line) = self
                .lines
                .next()
                .ok_or_else(|| Error::ModelFormat(format!("matrix {want} is truncated")))?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| bad(ln, format!("bad number {tok:?}")))?);
            }
            if data.len() - before != cols {
                return Err(bad(ln, format!("expected {cols} values")));
            }
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn vector(&mut self, want: &str) -> Result<DVector<f64>> {
        let m = self.matrix(want)?;
        if m.ncols() != 1 {
            return Err(Error::ModelFormat(format!("{want} must be a column")));
        }
        Ok(DVector::from_column_slice(m.as_slice()))
    }
}

pub fn from_text(text: &str) -> Result<ModelFile> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::ModelFormat("empty file".into()))?;
    let h: ModelHeader = serde_json::from_str(first).map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
    if h.format != FORMAT || h.version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format {} version {}",
            h.format, h.version
        )));
    }
    let mut r = Reader { lines };
    match h.kind.as_str() {
        "logistic" | "lda" => {
            let kind = if h.kind == "lda" {
                ClassifierKind::Discriminant
            } else {
                ClassifierKind::Logistic
            };
            let mean = r.vector("pca.mean")?;
            let components = r.matrix("pca.components")?;
            let variance = r.vector("pca.variance")?;
            let pca = Pca {
                mean,
                components,
                explained_variance: variance.iter().copied().collect(),
            };
            let classifier = LinearClassifier {
                kind,
                mean: r.vector("clf.mean")?,
                scale: r.vector("clf.scale")?,
                weights: r.matrix("clf.weights")?,
            };
            if pca.components.ncols() != pca.mean.len() || classifier.weights.ncols() != pca.n_components() + 1 {
                return Err(Error::ModelFormat("matrix shapes do not agree".into()));
            }
            Ok(ModelFile::SelfSup(SelfSupModel {
                haf_grid: h.haf_grid,
                haf_region_m: h.haf_region_m,
                pca,
                classifier,
                training_objects: h.training_objects,
                config_hash: h.config_hash,
                seed: h.seed,
                heldout_accuracy: h.heldout_accuracy,
            }))
        }
        "qnet" => {
            let sizes = h
                .layers
                .ok_or_else(|| Error::ModelFormat("qnet header lacks layer sizes".into()))?;
            let mut layers = Vec::new();
            for i in 0..sizes.len().saturating_sub(1) {
                let w = r.matrix(&format!("layer{i}.w"))?;
                let b = r.vector(&format!("layer{i}.b"))?;
                if w.shape() != (sizes[i + 1], sizes[i]) || b.len() != sizes[i + 1] {
                    return Err(Error::ModelFormat(format!("layer {i} does not match the header")));
                }
                layers.push(Dense { w, b });
            }
            Ok(ModelFile::Q(QModel {
                haf_grid: h.haf_grid,
                haf_region_m: h.haf_region_m,
                net: Mlp { layers },
                training_objects: h.training_objects,
                config_hash: h.config_hash,
                seed: h.seed,
            }))
        }
        other => Err(Error::ModelFormat(format!("unknown model kind {other:?}"))),
    }
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}
