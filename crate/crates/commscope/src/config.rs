//! Flat `key = value` config files for models, layouts, and fabrics.
//! One key per line, `#` comments, unknown keys are errors.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::report::AlphaBetaFabric;
use crate::types::{CollectiveKind, ModelConfig, ParallelLayout, ZeroStage};

fn kv_pairs(input: &str) -> Result<Vec<(usize, String, String)>> {
    let mut pairs = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(Error::BadConfigLine { line: line_no })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::BadConfigLine { line: line_no });
        }
        pairs.push((line_no, key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

fn parse_count(line: usize, key: &str, value: &str) -> Result<u64> {
    value.parse::<u64>().map_err(|_| Error::BadValue {
        line,
        key: key.to_string(),
        reason: format!("`{value}` is not a count"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::BadValue {
            line,
            key: key.to_string(),
            reason: format!("`{value}` is not a boolean"),
        }),
    }
}

fn parse_float(line: usize, key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|f| f.is_finite())
        .ok_or_else(|| Error::BadValue {
            line,
            key: key.to_string(),
            reason: format!("`{value}` is not a number"),
        })
}

/// Parses a model config document. Required keys: `vocab_size`, `hidden`,
/// `layers`, `seq_len`, `micro_batch`. Optional: `attn_heads` (1),
/// `mlp_expansion` (4), `elem_bytes` (2), `tied_embeddings` (false).
pub fn parse_model_config(input: &str) -> Result<ModelConfig> {
    let mut vocab_size = None;
    let mut hidden = None;
    let mut layers = None;
    let mut seq_len = None;
    let mut micro_batch = None;
    let mut cfg = ModelConfig::new(1, 1, 0, 1, 1);

    for (line, key, value) in kv_pairs(input)? {
        match key.as_str() {
            "vocab_size" => vocab_size = Some(parse_count(line, &key, &value)?),
            "hidden" => hidden = Some(parse_count(line, &key, &value)?),
            "layers" => layers = Some(parse_count(line, &key, &value)?),
            "seq_len" => seq_len = Some(parse_count(line, &key, &value)?),
            "micro_batch" => micro_batch = Some(parse_count(line, &key, &value)?),
            "attn_heads" => cfg.attn_heads = parse_count(line, &key, &value)?,
            "mlp_expansion" => cfg.mlp_expansion = parse_count(line, &key, &value)?,
            "elem_bytes" => {
                cfg.elem_bytes = parse_count(line, &key, &value)? as u32;
            }
            "tied_embeddings" => cfg.tied_embeddings = parse_bool(line, &key, &value)?,
            _ => return Err(Error::UnknownKey { line, key }),
        }
    }

    cfg.vocab_size = vocab_size.ok_or(Error::MissingKey { key: "vocab_size" })?;
    cfg.hidden = hidden.ok_or(Error::MissingKey { key: "hidden" })?;
    cfg.layers = layers.ok_or(Error::MissingKey { key: "layers" })?;
    cfg.seq_len = seq_len.ok_or(Error::MissingKey { key: "seq_len" })?;
    cfg.micro_batch = micro_batch.ok_or(Error::MissingKey { key: "micro_batch" })?;
    cfg.validated()
}

/// Parses a layout document. Required key: `devices`. Optional: `tensor`
/// (1), `pipeline` (1), `zero_stage` (none), `num_microbatches` (1).
pub fn parse_layout_config(input: &str) -> Result<ParallelLayout> {
    let mut devices = None;
    let mut layout = ParallelLayout::new(1);

    for (line, key, value) in kv_pairs(input)? {
        match key.as_str() {
            "devices" => devices = Some(parse_count(line, &key, &value)?),
            "tensor" => layout.tensor = parse_count(line, &key, &value)?,
            "pipeline" => layout.pipeline = parse_count(line, &key, &value)?,
            "zero_stage" => {
                layout.zero_stage =
                    ZeroStage::from_token(&value).ok_or_else(|| Error::BadValue {
                        line,
                        key,
                        reason: format!("`{value}` is not a ZeRO stage (none, 1, 2, 3)"),
                    })?;
            }
            "num_microbatches" => layout.num_microbatches = parse_count(line, &key, &value)?,
            _ => return Err(Error::UnknownKey { line, key }),
        }
    }

    layout.devices = devices.ok_or(Error::MissingKey { key: "devices" })?;
    layout.validated()
}

/// Parses a fabric document. Required: `name`, `alpha_us`,
/// `beta_us_per_mib`. Optional: `note`, and per-kind alpha overrides as
/// `alpha_us.<kind>` keys.
pub fn parse_fabric_config(input: &str) -> Result<AlphaBetaFabric> {
    let mut name = None;
    let mut alpha_us = None;
    let mut beta = None;
    let mut note = None;
    let mut overrides: BTreeMap<CollectiveKind, f64> = BTreeMap::new();

    for (line, key, value) in kv_pairs(input)? {
        match key.as_str() {
            "name" => name = Some(value),
            "alpha_us" => alpha_us = Some(parse_float(line, &key, &value)?),
            "beta_us_per_mib" => beta = Some(parse_float(line, &key, &value)?),
            "note" => note = Some(value),
            _ => {
                if let Some(kind_token) = key.strip_prefix("alpha_us.") {
                    let kind =
                        CollectiveKind::from_token(kind_token).ok_or_else(|| Error::BadValue {
                            line,
                            key: key.clone(),
                            reason: format!("`{kind_token}` is not a collective kind"),
                        })?;
                    overrides.insert(kind, parse_float(line, &key, &value)?);
                } else {
                    return Err(Error::UnknownKey { line, key });
                }
            }
        }
    }

    let mut fabric = AlphaBetaFabric::new(
        name.ok_or(Error::MissingKey { key: "name" })?,
        alpha_us.ok_or(Error::MissingKey { key: "alpha_us" })?,
        beta.ok_or(Error::MissingKey { key: "beta_us_per_mib" })?,
    );
    fabric.per_kind_alpha_us = overrides;
    fabric.note = note;
    fabric.validate()?;
    Ok(fabric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_model_file() {
        let input = "\
# tiny fixture
vocab_size = 8
hidden = 4
layers = 1
seq_len = 2
micro_batch = 1
";
        let cfg = parse_model_config(input).unwrap();
        assert_eq!(cfg, ModelConfig::new(8, 4, 1, 2, 1));
    }

    #[test]
    fn defaults_apply() {
        let cfg = parse_model_config(
            "vocab_size=8\nhidden=4\nlayers=1\nseq_len=2\nmicro_batch=1",
        )
        .unwrap();
        assert_eq!(cfg.attn_heads, 1);
        assert_eq!(cfg.mlp_expansion, 4);
        assert_eq!(cfg.elem_bytes, 2);
        assert!(!cfg.tied_embeddings);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = parse_model_config("vocab_size = 8\nvocab = 8").unwrap_err();
        assert!(matches!(err, Error::UnknownKey { line: 2, ref key } if key == "vocab"));
    }

    #[test]
    fn missing_keys_are_errors() {
        let err = parse_model_config("vocab_size = 8").unwrap_err();
        assert!(matches!(err, Error::MissingKey { key: "hidden" }));
    }

    #[test]
    fn invalid_values_name_the_key_and_line() {
        let err =
            parse_model_config("vocab_size = 8\nhidden = wide").unwrap_err();
        assert!(matches!(err, Error::BadValue { line: 2, ref key, .. } if key == "hidden"));

        let err = parse_model_config(
            "vocab_size=8\nhidden=4\nlayers=1\nseq_len=2\nmicro_batch=1\nelem_bytes=3",
        )
        .unwrap_err();
        assert!(matches!(err, Error::BadElemBytes { value: 3 }));
    }

    #[test]
    fn parses_a_layout_file() {
        let layout = parse_layout_config(
            "devices = 16\ntensor = 2\npipeline = 2\nzero_stage = 2\nnum_microbatches = 4",
        )
        .unwrap();
        assert_eq!(layout.devices, 16);
        assert_eq!(layout.tensor, 2);
        assert_eq!(layout.pipeline, 2);
        assert_eq!(layout.zero_stage, ZeroStage::Two);
        assert_eq!(layout.num_microbatches, 4);
        assert_eq!(layout.data_parallel().unwrap(), 4);
    }

    #[test]
    fn layout_invariants_surface() {
        let err = parse_layout_config("devices = 8\ntensor = 3").unwrap_err();
        assert!(matches!(err, Error::NonDivisibleLayout { .. }));

        let err = parse_layout_config("devices = 8\npipeline = 2\nzero_stage = 3").unwrap_err();
        assert!(matches!(err, Error::Zero3WithPipeline { pipeline: 2 }));
    }

    #[test]
    fn parses_a_fabric_file() {
        let fabric = parse_fabric_config(
            "name = testnet\nalpha_us = 10\nbeta_us_per_mib = 8\nalpha_us.allgather = 25\nnote = placeholder",
        )
        .unwrap();
        assert_eq!(fabric.name, "testnet");
        assert_eq!(fabric.alpha_for(CollectiveKind::Allgather), 25.0);
        assert_eq!(fabric.alpha_for(CollectiveKind::Allreduce), 10.0);
        assert_eq!(fabric.note.as_deref(), Some("placeholder"));

        let err = parse_fabric_config("name = x\nalpha_us = -1\nbeta_us_per_mib = 8").unwrap_err();
        assert!(matches!(err, Error::BadValue { .. }));
    }
}
