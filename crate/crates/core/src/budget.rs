//! Trainable-parameter, optimizer-state and storage accounting for adapter
//! methods over model shape manifests.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CosaError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    /// Output dimension.
    pub m: u64,
    /// Input dimension.
    pub n: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub model_name: String,
    pub layers: Vec<LayerShape>,
}

/// Manifests shipped with the crate: seven adapted projections (q, k, v, o, gate, up, down) per block.
pub const BUILTIN_MANIFESTS: &[(&str, &str)] = &[
    ("llama32-1b", include_str!("../manifests/llama32-1b.json")),
    ("llama31-8b", include_str!("../manifests/llama31-8b.json")),
    ("qwen2-7b", include_str!("../manifests/qwen2-7b.json")),
];

impl ModelManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: ModelManifest = serde_json::from_str(text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(CosaError::arg(format!("manifest {} has no layers", self.model_name)));
        }
        for l in &self.layers {
            if l.m == 0 || l.n == 0 || l.count == 0 {
                return Err(CosaError::arg(format!(
                    "layer {} in {} needs positive m, n and count",
                    l.name, self.model_name
                )));
            }
        }
        Ok(())
    }

    /// Bundled manifest by short name, with or without a `.json` suffix.
    pub fn builtin(name: &str) -> Option<Self> {
        let key = name.strip_suffix(".json").unwrap_or(name);
        BUILTIN_MANIFESTS
            .iter()
            .find(|(n, _)| *n == key)
            .map(|(_, text)| Self::from_json(text).expect("bundled manifests are valid"))
    }

    /// A file on disk if it exists, otherwise a bundled manifest of that name.
    pub fn load(path_or_name: &str) -> Result<Self> {
        let path = Path::new(path_or_name);
        if path.exists() {
            return Self::from_json(&std::fs::read_to_string(path)?);
        }
        let file_name = path.file_name().and_then(|f| f.to_str()).unwrap_or(path_or_name);
        Self::builtin(file_name).ok_or_else(|| {
            CosaError::arg(format!(
                "no manifest file {path_or_name:?} and no bundled manifest of that name (bundled: {})",
                BUILTIN_MANIFESTS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Lora,
    Pissa,
    Dora,
    Vera,
    Cosa,
    Full,
    Adalora,
}

impl FromStr for MethodKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "lora" => MethodKind::Lora,
            "pissa" => MethodKind::Pissa,
            "dora" => MethodKind::Dora,
            "vera" => MethodKind::Vera,
            "cosa" => MethodKind::Cosa,
            "full" => MethodKind::Full,
            "adalora" => MethodKind::Adalora,
            other => return Err(format!("unknown method {other:?}")),
        })
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MethodKind::Lora => "lora",
            MethodKind::Pissa => "pissa",
            MethodKind::Dora => "dora",
            MethodKind::Vera => "vera",
            MethodKind::Cosa => "cosa",
            MethodKind::Full => "full",
            MethodKind::Adalora => "adalora",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: MethodKind,
    pub rank: Option<u64>,
    pub a: Option<u64>,
    pub b: Option<u64>,
}

impl MethodSpec {
    pub fn lora(r: u64) -> Self {
        Self::ranked(MethodKind::Lora, r)
    }
    pub fn pissa(r: u64) -> Self {
        Self::ranked(MethodKind::Pissa, r)
    }
    pub fn dora(r: u64) -> Self {
        Self::ranked(MethodKind::Dora, r)
    }
    pub fn vera() -> Self {
        MethodSpec {
            method: MethodKind::Vera,
            rank: None,
            a: None,
            b: None,
        }
    }
    pub fn cosa(a: u64, b: u64) -> Self {
        MethodSpec {
            method: MethodKind::Cosa,
            rank: None,
            a: Some(a),
            b: Some(b),
        }
    }
    pub fn full() -> Self {
        MethodSpec {
            method: MethodKind::Full,
            rank: None,
            a: None,
            b: None,
        }
    }
    fn ranked(method: MethodKind, r: u64) -> Self {
        MethodSpec {
            method,
            rank: Some(r),
            a: None,
            b: None,
        }
    }

    fn need_rank(&self) -> Result<u64> {
        match self.rank {
            Some(r) if r > 0 => Ok(r),
            _ => Err(CosaError::arg(format!("method {} needs a positive rank r", self.method))),
        }
    }

    fn need_core(&self) -> Result<(u64, u64)> {
        match (self.a, self.b) {
            (Some(a), Some(b)) if a > 0 && b > 0 => Ok((a, b)),
            _ => Err(CosaError::arg("method cosa needs positive core dims a and b")),
        }
    }
}

/// Trainable parameters of one layer instance:
/// LoRA/PiSSA `(m+n)r`, DoRA `(m+n)r + m`, VeRA `m+n`, CoSA `ab`, full `mn`.
pub fn layer_params(spec: &MethodSpec, shape: &LayerShape) -> Result<u64> {
    let (m, n) = (shape.m, shape.n);
    Ok(match spec.method {
        MethodKind::Lora | MethodKind::Pissa => (m + n) * spec.need_rank()?,
        MethodKind::Dora => (m + n) * spec.need_rank()? + m,
        MethodKind::Vera => m + n,
        MethodKind::Cosa => {
            let (a, b) = spec.need_core()?;
            a * b
        }
        MethodKind::Full => m * n,
        MethodKind::Adalora => {
            return Err(CosaError::arg(
                "adalora has no closed-form parameter count; budgets are unsupported for it",
            ))
        }
    })
}

/// Adam-style moment buffers held per trainable parameter.
pub const ADAM_MOMENTS: u64 = 2;
pub const DEFAULT_BYTES_PER_PARAM: u64 = 4;
pub const DEFAULT_OPT_MULTIPLIER: f64 = 3.0;

/// `params * bytes_per_param * (1 + opt_multiplier)`, rounded to whole bytes.
pub fn memory_estimate(params: u64, bytes_per_param: u64, opt_multiplier: f64) -> u64 {
    (params as f64 * bytes_per_param as f64 * (1.0 + opt_multiplier)).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryModel {
    pub bytes_per_param: u64,
    pub opt_multiplier: f64,
}

impl Default for MemoryModel {
    fn default() -> Self {
        MemoryModel {
            bytes_per_param: DEFAULT_BYTES_PER_PARAM,
            opt_multiplier: DEFAULT_OPT_MULTIPLIER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBudget {
    pub name: String,
    pub m: u64,
    pub n: u64,
    pub count: u64,
    pub params_per_instance: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub model_name: String,
    pub method: MethodSpec,
    pub layers: Vec<LayerBudget>,
    pub total_params: u64,
    /// Adam first and second moments, in parameter units.
    pub optimizer_state_params: u64,
    /// Adapter payload on disk at `bytes_per_param`.
    pub storage_bytes: u64,
    pub memory: MemoryModel,
    /// Parameters plus optimizer state under `memory`.
    pub memory_bytes: u64,
}

pub fn model_budget(spec: &MethodSpec, manifest: &ModelManifest, memory: MemoryModel) -> Result<BudgetReport> {
    manifest.validate()?;
    let layers = manifest
        .layers
        .iter()
        .map(|shape| {
            let per = layer_params(spec, shape)?;
            Ok(LayerBudget {
                name: shape.name.clone(),
                m: shape.m,
                n: shape.n,
                count: shape.count,
                params_per_instance: per,
                params: per * shape.count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total_params = layers.iter().map(|l| l.params).sum();
    Ok(BudgetReport {
        model_name: manifest.model_name.clone(),
        method: *spec,
        layers,
        total_params,
        optimizer_state_params: ADAM_MOMENTS * total_params,
        storage_bytes: total_params * memory.bytes_per_param,
        memory,
        memory_bytes: memory_estimate(total_params, memory.bytes_per_param, memory.opt_multiplier),
    })
}

/// `29360128 -> "29.36M"`, `322961408 -> "322.96M"`.
pub fn format_millions(params: u64) -> String {
    format!("{:.2}M", params as f64 / 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(m: u64, n: u64) -> LayerShape {
        LayerShape {
            name: "w".into(),
            m,
            n,
            count: 1,
        }
    }

    #[test]
    fn formula_examples() {
        assert_eq!(layer_params(&MethodSpec::cosa(1024, 256), &shape(7, 9)).unwrap(), 262_144);
        assert_eq!(layer_params(&MethodSpec::lora(128), &shape(4096, 4096)).unwrap(), 1_048_576);
        assert_eq!(layer_params(&MethodSpec::dora(16), &shape(768, 768)).unwrap(), 25_344);
        assert_eq!(layer_params(&MethodSpec::vera(), &shape(768, 512)).unwrap(), 1280);
        assert_eq!(layer_params(&MethodSpec::full(), &shape(768, 512)).unwrap(), 393_216);
    }

    #[test]
    fn missing_hyperparameters_are_rejected() {
        let no_rank = MethodSpec {
            method: MethodKind::Lora,
            rank: None,
            a: None,
            b: None,
        };
        assert!(layer_params(&no_rank, &shape(4, 4)).is_err());
        let no_core = MethodSpec {
            method: MethodKind::Cosa,
            rank: Some(4),
            a: Some(3),
            b: None,
        };
        assert!(layer_params(&no_core, &shape(4, 4)).is_err());
        let ada = MethodSpec {
            method: MethodKind::Adalora,
            rank: Some(8),
            a: None,
            b: None,
        };
        assert!(layer_params(&ada, &shape(4, 4)).unwrap_err().to_string().contains("unsupported"));
    }

    #[test]
    fn llama_1b_totals() {
        let m = ModelManifest::builtin("llama32-1b").unwrap();
        let mem = MemoryModel::default();
        let cosa = model_budget(&MethodSpec::cosa(1024, 256), &m, mem).unwrap();
        assert_eq!(cosa.total_params, 29_360_128);
        assert_eq!(format_millions(cosa.total_params), "29.36M");
        let lora = model_budget(&MethodSpec::lora(128), &m, mem).unwrap();
        assert_eq!(lora.total_params, 90_177_536);
        assert_eq!(format_millions(lora.total_params), "90.18M");
        assert_eq!(lora.total_params, lora.layers.iter().map(|l| l.params).sum::<u64>());
    }

    #[test]
    fn memory_estimates() {
        assert_eq!(memory_estimate(58_720_256, 4, 0.0), 234_881_024);
        assert_eq!(memory_estimate(0, 4, 3.0), 0);
        assert_eq!(memory_estimate(1000, 4, 3.0), 4 * memory_estimate(1000, 4, 0.0));
    }

    #[test]
    fn manifest_parsing() {
        assert!(ModelManifest::from_json(r#"{"model_name":"x","layers":[]}"#).is_err());
        assert!(ModelManifest::from_json(r#"{"model_name":"x","layers":[{"name":"a","m":0,"n":2,"count":1}]}"#).is_err());
        assert!(ModelManifest::builtin("qwen2-7b.json").is_some());
        assert!(ModelManifest::load("no-such-model").is_err());
        assert_eq!("CoSA".parse::<MethodKind>(), Ok(MethodKind::Cosa));
    }

    /// Independently written Table 1 parameter formulas.
    fn reference_params(method: &str, m: u64, n: u64, r: u64, a: u64, b: u64) -> u64 {
        match method {
            "lora" | "pissa" => m * r + n * r,
            "dora" => m * r + n * r + m,
            "vera" => n + m,
            "cosa" => b * a,
            _ => n * m,
        }
    }

    proptest! {
        #[test]
        fn formulas_match_reference(m in 1u64..10_000, n in 1u64..10_000, r in 1u64..512, a in 1u64..2048, b in 1u64..2048) {
            let s = shape(m, n);
            for (name, spec) in [
                ("lora", MethodSpec::lora(r)),
                ("pissa", MethodSpec::pissa(r)),
                ("dora", MethodSpec::dora(r)),
                ("vera", MethodSpec::vera()),
                ("cosa", MethodSpec::cosa(a, b)),
                ("full", MethodSpec::full()),
            ] {
                prop_assert_eq!(layer_params(&spec, &s).unwrap(), reference_params(name, m, n, r, a, b));
            }
        }

        #[test]
        fn cosa_is_shape_independent(m1 in 1u64..9000, n1 in 1u64..9000, m2 in 1u64..9000, n2 in 1u64..9000, a in 1u64..1024, b in 1u64..1024) {
            let spec = MethodSpec::cosa(a, b);
            prop_assert_eq!(layer_params(&spec, &shape(m1, n1)).unwrap(), layer_params(&spec, &shape(m2, n2)).unwrap());
        }

        #[test]
        fn cosa_beats_lora_when_core_is_smaller(r in 1u64..256, a in 1u64..512, b in 1u64..512) {
            for (_, text) in BUILTIN_MANIFESTS {
                let manifest = ModelManifest::from_json(text).unwrap();
                let fits = manifest.layers.iter().all(|l| a * b < (l.m + l.n) * r);
                if fits {
                    let mem = MemoryModel::default();
                    let cosa = model_budget(&MethodSpec::cosa(a, b), &manifest, mem).unwrap().total_params;
                    let lora = model_budget(&MethodSpec::lora(r), &manifest, mem).unwrap().total_params;
                    prop_assert!(cosa < lora);
                }
            }
        }
    }
}
