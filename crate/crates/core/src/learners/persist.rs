//! Versioned JSON model persistence: tensor shapes plus little-endian f64
//! parameter blobs in base64.

use std::collections::BTreeMap;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::cnn::{Cnn1dModel, CnnConfig, DenseHead, Trunk};
use super::linear::{LogisticModel, LrConfig, OneRuleSvm, ZeroRule};
use super::mtl::MtlModel;
use super::LearnerError;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub kind: String,
    pub version: u32,
    pub shapes: BTreeMap<String, Vec<usize>>,
    /// base64 of little-endian f64 values, flattened row-major.
    pub params: BTreeMap<String, String>,
    pub meta: serde_json::Value,
}

pub fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn decode_f64s(s: &str) -> Result<Vec<f64>, LearnerError> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(s)
        .map_err(|e| LearnerError::Artifact(format!("bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(LearnerError::Artifact("blob length not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl ModelArtifact {
    pub fn new(kind: &str, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.to_string(),
            version: ARTIFACT_VERSION,
            shapes: BTreeMap::new(),
            params: BTreeMap::new(),
            meta,
        }
    }

    pub fn put(&mut self, name: &str, shape: Vec<usize>, values: &[f64]) {
        assert_eq!(shape.iter().product::<usize>(), values.len());
        self.shapes.insert(name.to_string(), shape);
        self.params.insert(name.to_string(), encode_f64s(values));
    }

    pub fn get(&self, name: &str) -> Result<Vec<f64>, LearnerError> {
        let blob = self
            .params
            .get(name)
            .ok_or_else(|| LearnerError::Artifact(format!("missing tensor `{name}`")))?;
        let values = decode_f64s(blob)?;
        let shape = self
            .shapes
            .get(name)
            .ok_or_else(|| LearnerError::Artifact(format!("missing shape for `{name}`")))?;
        if shape.iter().product::<usize>() != values.len() {
            return Err(LearnerError::Artifact(format!("shape mismatch for `{name}`")));
        }
        Ok(values)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), LearnerError> {
        if self.kind != kind {
            return Err(LearnerError::Artifact(format!(
                "artifact kind `{}`, expected `{kind}`",
                self.kind
            )));
        }
        if self.version != ARTIFACT_VERSION {
            return Err(LearnerError::Artifact(format!("unsupported version {}", self.version)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnerError> {
        serde_json::from_str(s).map_err(|e| LearnerError::Artifact(e.to_string()))
    }
}

impl LogisticModel {
    pub fn to_artifact(&self, meta: serde_json::Value) -> ModelArtifact {
        let mut a = ModelArtifact::new("logistic", meta);
        a.put("weights", vec![self.weights.len()], &self.weights);
        a.put("bias", vec![1], &[self.bias]);
        a.put(
            "config",
            vec![3],
            &[self.config.l2, self.config.max_iter as f64, self.config.grad_tol],
        );
        a
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self, LearnerError> {
        a.expect_kind("logistic")?;
        let cfg = a.get("config")?;
        Ok(LogisticModel {
            weights: a.get("weights")?,
            bias: a.get("bias")?[0],
            config: LrConfig {
                l2: cfg[0],
                max_iter: cfg[1] as usize,
                grad_tol: cfg[2],
            },
        })
    }
}

impl OneRuleSvm {
    pub fn to_artifact(&self, meta: serde_json::Value) -> ModelArtifact {
        let mut a = ModelArtifact::new("one_rule_svm", meta);
        a.put("weight", vec![1], &[self.weight]);
        a.put("bias", vec![1], &[self.bias]);
        a
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self, LearnerError> {
        a.expect_kind("one_rule_svm")?;
        Ok(OneRuleSvm {
            weight: a.get("weight")?[0],
            bias: a.get("bias")?[0],
        })
    }
}

impl ZeroRule {
    pub fn to_artifact(&self, meta: serde_json::Value) -> ModelArtifact {
        let mut a = ModelArtifact::new("zero_rule", meta);
        let majority = match self.majority {
            crate::domain::Performance::High => 1.0,
            crate::domain::Performance::Low => 0.0,
        };
        a.put("state", vec![2], &[majority, self.train_low_fraction]);
        a
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self, LearnerError> {
        a.expect_kind("zero_rule")?;
        let state = a.get("state")?;
        Ok(ZeroRule {
            majority: if state[0] > 0.5 {
                crate::domain::Performance::High
            } else {
                crate::domain::Performance::Low
            },
            train_low_fraction: state[1],
        })
    }
}

fn put_cfg(a: &mut ModelArtifact, cfg: &CnnConfig) {
    a.put(
        "cnn_config",
        vec![6],
        &[
            cfg.in_features as f64,
            cfg.days as f64,
            cfg.kernel as f64,
            cfg.channels as f64,
            cfg.hidden as f64,
            cfg.dropout,
        ],
    );
}

fn get_cfg(a: &ModelArtifact) -> Result<CnnConfig, LearnerError> {
    let c = a.get("cnn_config")?;
    Ok(CnnConfig {
        in_features: c[0] as usize,
        days: c[1] as usize,
        kernel: c[2] as usize,
        channels: c[3] as usize,
        hidden: c[4] as usize,
        dropout: c[5],
    })
}

fn put_head(a: &mut ModelArtifact, prefix: &str, head: &DenseHead, cfg: &CnnConfig) {
    a.put(
        &format!("{prefix}_w1"),
        vec![cfg.hidden, cfg.flat_len()],
        &head.w1,
    );
    a.put(&format!("{prefix}_b1"), vec![cfg.hidden], &head.b1);
    a.put(&format!("{prefix}_w2"), vec![2, cfg.hidden], &head.w2);
    a.put(&format!("{prefix}_b2"), vec![2], &head.b2);
}

fn get_head(a: &ModelArtifact, prefix: &str) -> Result<DenseHead, LearnerError> {
    Ok(DenseHead {
        w1: a.get(&format!("{prefix}_w1"))?,
        b1: a.get(&format!("{prefix}_b1"))?,
        w2: a.get(&format!("{prefix}_w2"))?,
        b2: a.get(&format!("{prefix}_b2"))?,
    })
}

impl Cnn1dModel {
    pub fn to_artifact(&self, meta: serde_json::Value) -> ModelArtifact {
        let mut a = ModelArtifact::new("cnn1d", meta);
        let cfg = &self.trunk.cfg;
        put_cfg(&mut a, cfg);
        a.put(
            "conv_w",
            vec![cfg.channels, cfg.in_features, cfg.kernel],
            &self.trunk.conv_w,
        );
        a.put("conv_b", vec![cfg.channels], &self.trunk.conv_b);
        put_head(&mut a, "head", &self.head, cfg);
        a
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self, LearnerError> {
        a.expect_kind("cnn1d")?;
        let cfg = get_cfg(a)?;
        Ok(Cnn1dModel {
            trunk: Trunk {
                cfg,
                conv_w: a.get("conv_w")?,
                conv_b: a.get("conv_b")?,
            },
            head: get_head(a, "head")?,
        })
    }
}

impl MtlModel {
    pub fn to_artifact(&self, meta: serde_json::Value) -> ModelArtifact {
        let mut a = ModelArtifact::new("mtl_cnn1d", meta);
        let cfg = &self.trunk.cfg;
        put_cfg(&mut a, cfg);
        a.put(
            "conv_w",
            vec![cfg.channels, cfg.in_features, cfg.kernel],
            &self.trunk.conv_w,
        );
        a.put("conv_b", vec![cfg.channels], &self.trunk.conv_b);
        put_head(&mut a, "head_primary", &self.head_primary, cfg);
        put_head(&mut a, "head_secondary", &self.head_secondary, cfg);
        a
    }

    pub fn from_artifact(a: &ModelArtifact) -> Result<Self, LearnerError> {
        a.expect_kind("mtl_cnn1d")?;
        let cfg = get_cfg(a)?;
        Ok(MtlModel {
            trunk: Trunk {
                cfg,
                conv_w: a.get("conv_w")?,
                conv_b: a.get("conv_b")?,
            },
            head_primary: get_head(a, "head_primary")?,
            head_secondary: get_head(a, "head_secondary")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_blob_roundtrip() {
        let values = vec![0.0, -1.5, f64::MIN_POSITIVE, 3.141592653589793, 1e300];
        let back = decode_f64s(&encode_f64s(&values)).unwrap();
        assert_eq!(values, back);
    }

    #[test]
    fn cnn_artifact_roundtrip_is_exact() {
        let model = Cnn1dModel::init(CnnConfig::new(4, 7), 123).unwrap();
        let json = model.to_artifact(serde_json::json!({"note": "test"})).to_json();
        let back = Cnn1dModel::from_artifact(&ModelArtifact::from_json(&json).unwrap()).unwrap();
        assert_eq!(model.flat_params(), back.flat_params());
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let model = Cnn1dModel::init(CnnConfig::new(2, 7), 0).unwrap();
        let a = model.to_artifact(serde_json::Value::Null);
        assert!(LogisticModel::from_artifact(&a).is_err());
    }
}
