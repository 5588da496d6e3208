//! Projected gradient descent attacks and adversarial dataset assembly.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::nn::weights_io::{write_f64_block, BlockReader};
use crate::nn::{grad_input, network_file_hash, train_with, Network, TrainConfig, TrainStats};
use crate::tensor::{linf_distance, Tensor};
use crate::{Error, Result};

/// L-infinity PGD configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PgdConfig {
    /// Perturbation budget in input units.
    pub epsilon: f64,
    /// Per-step size; defaults to `2 * epsilon / steps` when absent.
    pub epsilon_iter: Option<f64>,
    pub steps: usize,
    pub clip_min: f64,
    pub clip_max: f64,
}

impl PgdConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            epsilon_iter: None,
            steps: 50,
            clip_min: 0.0,
            clip_max: 1.0,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.epsilon_iter
            .unwrap_or(2.0 * self.epsilon / self.steps as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::Config("epsilon must be >= 0".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("PGD needs at least one step".into()));
        }
        if self.clip_min >= self.clip_max {
            return Err(Error::Config("clip_min must be below clip_max".into()));
        }
        if self.epsilon > 0.0 && self.step_size() <= 0.0 {
            return Err(Error::Config("epsilon_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Untargeted PGD: ascend the true-class cross-entropy by signed gradient
/// steps, re-projecting onto the epsilon ball and the valid input range after
/// every step. Starts at the clean input.
pub fn pgd(net: &Network, x: &Tensor, label: usize, config: &PgdConfig) -> Result<Tensor> {
    config.validate()?;
    if x.data()
        .iter()
        .any(|&v| v < config.clip_min || v > config.clip_max)
    {
        return Err(Error::Config(format!(
            "input leaves the valid range [{}, {}]",
            config.clip_min, config.clip_max
        )));
    }
    let step = config.step_size();
    let mut adv = x.clone();
    for _ in 0..config.steps {
        let grad = grad_input(net, &adv, label)?;
        for (i, v) in adv.data_mut().iter_mut().enumerate() {
            let g = grad.data()[i];
            let sign = if g > 0.0 {
                1.0
            } else if g < 0.0 {
                -1.0
            } else {
                0.0
            };
            let orig = x.data()[i];
            let moved = *v + step * sign;
            let lo = (orig - config.epsilon).max(config.clip_min);
            let hi = (orig + config.epsilon).min(config.clip_max);
            *v = moved.clamp(lo, hi);
        }
    }
    Ok(adv)
}

/// One successful adversary.
#[derive(Debug, Clone)]
pub struct AdvExample {
    pub original: Tensor,
    pub perturbed: Tensor,
    pub label: usize,
    pub predicted: usize,
    /// Index of the source input in the attacked set.
    pub source_index: usize,
}

/// Clean examples kept apart from attack generation, plus the successful
/// adversaries.
#[derive(Debug, Clone)]
pub struct AdvDataset {
    pub clean_inputs: Vec<Tensor>,
    pub clean_labels: Vec<usize>,
    pub adv: Vec<AdvExample>,
    /// Successful adversaries / correctly-classified attack sources.
    pub success_rate: f64,
}

impl AdvDataset {
    /// Re-run the misclassification predicate on every stored pair.
    pub fn verify(&self, net: &Network, config: &PgdConfig) -> Result<bool> {
        for e in &self.adv {
            if linf_distance(&e.original, &e.perturbed) > config.epsilon + 1e-9 {
                return Ok(false);
            }
            let pred = net.predict(&e.perturbed)?;
            if pred == e.label || pred != e.predicted {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Attack the latter part of a labeled set, keeping the earlier part as the
/// untouched clean split.
///
/// Inputs the model misclassifies when clean are excluded from the attack
/// sources; an adversary counts as successful when the prediction moves off
/// the original label.
pub fn build_adv_dataset(
    net: &Network,
    inputs: &[Tensor],
    labels: &[usize],
    clean_count: usize,
    config: &PgdConfig,
) -> Result<AdvDataset> {
    config.validate()?;
    if inputs.len() != labels.len() || inputs.is_empty() {
        return Err(Error::Config("labeled dataset required".into()));
    }
    if clean_count >= inputs.len() {
        return Err(Error::Config(
            "clean split would leave no attack sources".into(),
        ));
    }
    let clean_inputs = inputs[..clean_count].to_vec();
    let clean_labels = labels[..clean_count].to_vec();

    // Attack only correctly-classified sources.
    let mut sources = Vec::new();
    for i in clean_count..inputs.len() {
        if net.predict(&inputs[i])? == labels[i] {
            sources.push(i);
        }
    }
    let attacked: Vec<Result<Option<AdvExample>>> = sources
        .par_iter()
        .map(|&i| {
            let adv = pgd(net, &inputs[i], labels[i], config)?;
            let predicted = net.predict(&adv)?;
            Ok((predicted != labels[i]).then(|| AdvExample {
                original: inputs[i].clone(),
                perturbed: adv,
                label: labels[i],
                predicted,
                source_index: i,
            }))
        })
        .collect();
    let mut adv = Vec::new();
    for r in attacked {
        if let Some(e) = r? {
            adv.push(e);
        }
    }
    let success_rate = if sources.is_empty() {
        0.0
    } else {
        adv.len() as f64 / sources.len() as f64
    };
    if adv.is_empty() {
        return Err(Error::EmptyAdvSplit);
    }
    Ok(AdvDataset {
        clean_inputs,
        clean_labels,
        adv,
        success_rate,
    })
}

/// Train with every batch replaced by its PGD perturbation before the
/// gradient step.
pub fn adversarial_train(
    net: &mut Network,
    inputs: &[Tensor],
    labels: &[usize],
    pgd_config: &PgdConfig,
    train_config: &TrainConfig,
) -> Result<TrainStats> {
    pgd_config.validate()?;
    train_with(net, inputs, labels, train_config, |net, batch, batch_y| {
        batch
            .iter()
            .zip(batch_y)
            .map(|(x, &y)| pgd(net, x, y, pgd_config))
            .collect()
    })
}

// --- serialization -----------------------------------------------------

const ADV_MAGIC: &[u8; 4] = b"ADV1";

#[derive(Debug, Serialize, Deserialize)]
struct AdvHeader {
    version: u32,
    attack: String,
    config: PgdConfig,
    network_hash: String,
    input_shape: Vec<usize>,
    clean_count: usize,
    adv_count: usize,
    clean_labels: Vec<usize>,
    adv_labels: Vec<usize>,
    adv_predicted: Vec<usize>,
    adv_source_index: Vec<usize>,
    success_rate: f64,
}

/// Serialize an adversarial dataset with its provenance (attack name, config,
/// network hash) using the same container family as weight files.
pub fn adv_dataset_to_bytes(
    ds: &AdvDataset,
    net: &Network,
    config: &PgdConfig,
) -> Result<Vec<u8>> {
    let input_shape = net.input_shape().to_vec();
    let header = AdvHeader {
        version: 1,
        attack: "pgd".into(),
        config: config.clone(),
        network_hash: network_file_hash(net)?,
        input_shape,
        clean_count: ds.clean_inputs.len(),
        adv_count: ds.adv.len(),
        clean_labels: ds.clean_labels.clone(),
        adv_labels: ds.adv.iter().map(|e| e.label).collect(),
        adv_predicted: ds.adv.iter().map(|e| e.predicted).collect(),
        adv_source_index: ds.adv.iter().map(|e| e.source_index).collect(),
        success_rate: ds.success_rate,
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(ADV_MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for t in &ds.clean_inputs {
        write_f64_block(&mut out, t.data());
    }
    for e in &ds.adv {
        write_f64_block(&mut out, e.original.data());
        write_f64_block(&mut out, e.perturbed.data());
    }
    Ok(out)
}

/// Load an adversarial dataset; `expected_network_hash` guards against pairing
/// it with the wrong weights.
pub fn adv_dataset_from_bytes(
    bytes: &[u8],
    expected_network_hash: Option<&str>,
) -> Result<(AdvDataset, PgdConfig, String)> {
    let mut r = BlockReader::new(bytes, 0);
    if r.take(4)? != ADV_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "bad magic; not an adversarial dataset container".into(),
        });
    }
    let header_len = r.read_u32()? as usize;
    let header: AdvHeader = serde_json::from_slice(r.take(header_len)?)?;
    if let Some(expect) = expected_network_hash {
        if expect != header.network_hash {
            return Err(Error::StaleCache {
                path: "<adv dataset>".into(),
                detail: "network hash mismatch".into(),
            });
        }
    }
    let shape = header.input_shape.clone();
    let mut clean_inputs = Vec::with_capacity(header.clean_count);
    for _ in 0..header.clean_count {
        clean_inputs.push(Tensor::new(shape.clone(), r.read_f64_block()?)?);
    }
    let mut adv = Vec::with_capacity(header.adv_count);
    for i in 0..header.adv_count {
        let original = Tensor::new(shape.clone(), r.read_f64_block()?)?;
        let perturbed = Tensor::new(shape.clone(), r.read_f64_block()?)?;
        adv.push(AdvExample {
            original,
            perturbed,
            label: header.adv_labels[i],
            predicted: header.adv_predicted[i],
            source_index: header.adv_source_index[i],
        });
    }
    Ok((
        AdvDataset {
            clean_inputs,
            clean_labels: header.clean_labels,
            adv,
            success_rate: header.success_rate,
        },
        header.config,
        header.network_hash,
    ))
}

pub fn save_adv_dataset(
    ds: &AdvDataset,
    net: &Network,
    config: &PgdConfig,
    path: &Path,
) -> Result<()> {
    fs::write(path, adv_dataset_to_bytes(ds, net, config)?)?;
    Ok(())
}
