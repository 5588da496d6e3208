//! End-to-end experiment orchestration.
//!
//! A single [`ExperimentConfig`] determines a full run: data, architecture,
//! training, attack, feature extraction, and detector. The pipeline caches
//! the expensive artifacts (trained network, adversarial dataset) keyed by
//! the exact configuration subset that produced them, so feature- and
//! detector-level settings never invalidate an attack.

pub mod cache;
pub mod data;
pub mod report;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::attack::{
    adv_dataset_from_bytes, adv_dataset_to_bytes, build_adv_dataset, pgd, AdvDataset, PgdConfig,
};
use crate::detector::{auc, bootstrap_ci, fit_binary, fit_one_class, DetectionReport};
use crate::graph::{
    apply_mask, positive_subgraph, raw_graph_features, select_edges, EdgeMask, GraphBuilder,
    SelectionCriterion, SelectionSide,
};
use crate::kernels::{
    median_rbf_sigma, median_sw_sigma, quantile_rbf_sigma, quantile_sw_sigma, rbf_gram, sw_gram,
    InfinityHandling,
};
use crate::nn::{
    network_file_hash, network_from_bytes, network_to_bytes, train, Activation, LayerDef, Network,
    TrainConfig,
};
use crate::persistence::{diagram_to_csv, pd0, pd_stats, PersistenceDiagram};
use crate::tensor::Tensor;
use crate::{Error, Result};
use cache::Cache;
use data::{gen_toy, load_idx, split_dataset, subset, Dataset, SplitIndices, ToySpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Toy(ToySpec),
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchSpec {
    /// One 2x2 conv (12 channels) and a 48-24-12-2 dense stack, sized for
    /// 3x3 inputs. Wide enough to be over-parametrized on the toy task, so
    /// under-optimized edges actually exist, and deep enough that parasitic
    /// multi-hop paths are available to an attacker.
    Toy,
    Custom {
        input_shape: Vec<usize>,
        class_count: usize,
        layers: Vec<LayerDef>,
    },
}

impl ArchSpec {
    pub fn resolve(&self) -> (Vec<usize>, Vec<LayerDef>, usize) {
        match self {
            ArchSpec::Toy => (
                vec![1, 3, 3],
                vec![
                    LayerDef::Conv2d {
                        in_ch: 1,
                        out_ch: 12,
                        kh: 2,
                        kw: 2,
                        stride: 1,
                        padding: 0,
                        bias: true,
                        activation: Activation::Relu,
                    },
                    LayerDef::Flatten,
                    LayerDef::Dense {
                        n_in: 48,
                        n_out: 24,
                        bias: true,
                        activation: Activation::Relu,
                    },
                    LayerDef::Dense {
                        n_in: 24,
                        n_out: 12,
                        bias: true,
                        activation: Activation::Relu,
                    },
                    LayerDef::Dense {
                        n_in: 12,
                        n_out: 2,
                        bias: true,
                        activation: Activation::Identity,
                    },
                ],
                2,
            ),
            ArchSpec::Custom {
                input_shape,
                class_count,
                layers,
            } => (input_shape.clone(), layers.clone(), *class_count),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaPolicy {
    /// Median pairwise distance over the clean fit split.
    Median,
    /// A chosen quantile of the pairwise distances over the clean fit split.
    /// The clean split spans every class, so its all-pairs median sits at the
    /// between-class distance; the default lower quartile recovers the
    /// within-class scale, which is what the kernel needs to resolve.
    Quantile(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    Unsupervised,
    Supervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Persistence diagrams with the sliced-Wasserstein kernel.
    Pd,
    /// Raw masked-graph weight vectors with an RBF kernel.
    Rg,
    /// (total, infinite) diagram point counts with an RBF kernel.
    PdCounts,
}

/// Everything a detection run depends on. The experiment `seed` drives data
/// generation, splits, initialization, training, and the bootstrap; the
/// train config's own seed field is overridden.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub attack: PgdConfig,
    pub q: f64,
    /// Parameterized-layer ordinals to select edges from; `None` = all.
    pub layers: Option<Vec<usize>>,
    pub criterion: SelectionCriterion,
    /// Sliced-Wasserstein direction count (M).
    pub directions: usize,
    pub sigma: SigmaPolicy,
    pub infinity: InfinityHandling,
    pub nu: f64,
    pub c: f64,
    pub mode: DetectorMode,
    pub feature: FeatureKind,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Toy(ToySpec::default()),
            arch: ArchSpec::Toy,
            train: TrainConfig {
                optimizer: crate::nn::OptimizerKind::Adam,
                lr: 0.01,
                epochs: 30,
                batch_size: 32,
                seed: 0,
            },
            attack: PgdConfig::new(0.1),
            q: 0.1,
            layers: None,
            criterion: SelectionCriterion::MagnitudeIncrease,
            directions: 50,
            sigma: SigmaPolicy::Quantile(0.25),
            infinity: InfinityHandling::RangeCap,
            nu: 0.1,
            c: 10.0,
            mode: DetectorMode::Unsupervised,
            feature: FeatureKind::Pd,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn toy(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Config(format!("q must lie in (0, 1], got {}", self.q)));
        }
        if self.directions == 0 {
            return Err(Error::Config("directions must be >= 1".into()));
        }
        if !(0.0 < self.nu && self.nu < 1.0) {
            return Err(Error::Config(format!("nu must lie in (0, 1), got {}", self.nu)));
        }
        if self.c <= 0.0 {
            return Err(Error::Config("c must be positive".into()));
        }
        match self.sigma {
            SigmaPolicy::Fixed(s) if s <= 0.0 => {
                return Err(Error::Config("sigma must be positive".into()));
            }
            SigmaPolicy::Quantile(p) if !(0.0..=1.0).contains(&p) => {
                return Err(Error::Config(format!(
                    "sigma quantile {} outside [0, 1]",
                    p
                )));
            }
            _ => {}
        }
        self.attack.validate()?;
        match &self.dataset {
            DatasetSpec::Toy(spec) => spec.validate()?,
            DatasetSpec::Idx { images, labels } => {
                for p in [images, labels] {
                    if !p.exists() {
                        return Err(Error::Config(format!(
                            "dataset file {} does not exist",
                            p.display()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Stable per-stage seed derivation from the experiment seed.
fn derive_seed(seed: u64, salt: &str) -> u64 {
    let mut h = 1469598103934665603u64;
    for b in salt.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    seed ^ h
}

/// Network and adversarial artifacts for one configuration, plus the source
/// dataset and split they came from.
pub struct Prepared {
    pub network: Network,
    pub adv: AdvDataset,
    pub dataset: Dataset,
    pub split: SplitIndices,
}

fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.dataset {
        DatasetSpec::Toy(spec) => gen_toy(spec, derive_seed(config.seed, "data")),
        DatasetSpec::Idx { images, labels } => load_idx(images, labels),
    }
}

fn network_cache_key(config: &ExperimentConfig) -> Result<String> {
    Ok(serde_json::to_string(&json!({
        "dataset": &config.dataset,
        "arch": &config.arch,
        "train": {
            "optimizer": config.train.optimizer,
            "lr": config.train.lr,
            "epochs": config.train.epochs,
            "batch_size": config.train.batch_size,
        },
        "seed": config.seed,
    }))?)
}

/// Train the configured network, or fetch it from the cache.
pub fn prepare_network(
    config: &ExperimentConfig,
    cache: &Cache,
) -> Result<(Network, Dataset, SplitIndices)> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let split = split_dataset(dataset.len(), derive_seed(config.seed, "split"));
    if split.test.is_empty() || split.train.is_empty() {
        return Err(Error::Config("dataset too small to split".into()));
    }

    let net_key = network_cache_key(config)?;
    let network = match cache.get("net", &net_key)? {
        Some(bytes) => network_from_bytes(&bytes)?,
        None => {
            let (input_shape, defs, class_count) = config.arch.resolve();
            if class_count != dataset.class_count {
                return Err(Error::Config(format!(
                    "architecture has {} classes, dataset has {}",
                    class_count, dataset.class_count
                )));
            }
            let mut net = Network::init(
                input_shape,
                &defs,
                class_count,
                derive_seed(config.seed, "init"),
            )?;
            let train_ds = subset(&dataset, &split.train);
            let mut tc = config.train.clone();
            tc.seed = derive_seed(config.seed, "train");
            train(&mut net, &train_ds.inputs, &train_ds.labels, &tc)?;
            cache.put("net", &net_key, &network_to_bytes(&net)?)?;
            net
        }
    };
    Ok((network, dataset, split))
}

/// Train the configured network (or fetch it from the cache) and build the
/// adversarial dataset from the test split (or fetch it). Step one of the
/// detection pipeline.
pub fn prepare(config: &ExperimentConfig, cache: &Cache) -> Result<Prepared> {
    let (network, dataset, split) = prepare_network(config, cache)?;

    // Attack sources come from the test split only; the leading 40% of it is
    // the untouched clean pool.
    let clean_count = split.test.len() * 40 / 100;
    let clean_ids = &split.test[..clean_count];
    let source_ids = &split.test[clean_count..];
    assert!(
        clean_ids.iter().all(|i| !source_ids.contains(i)),
        "clean pool must not intersect the attack sources"
    );
    let test_ds = subset(&dataset, &split.test);

    let adv_key = serde_json::to_string(&json!({
        "net": network_file_hash(&network)?,
        "attack": &config.attack,
        "clean_count": clean_count,
    }))?;
    let adv = match cache.get("adv", &adv_key)? {
        Some(bytes) => adv_dataset_from_bytes(&bytes, Some(&network_file_hash(&network)?))?.0,
        None => {
            let adv = build_adv_dataset(
                &network,
                &test_ds.inputs,
                &test_ds.labels,
                clean_count,
                &config.attack,
            )?;
            cache.put(
                "adv",
                &adv_key,
                &adv_dataset_to_bytes(&adv, &network, &config.attack)?,
            )?;
            adv
        }
    };
    Ok(Prepared {
        network,
        adv,
        dataset,
        split,
    })
}

fn resolve_layers(config: &ExperimentConfig, net: &Network) -> Vec<usize> {
    config
        .layers
        .clone()
        .unwrap_or_else(|| (0..net.param_layer_indices().len()).collect())
}

fn extract_diagrams(
    net: &Network,
    builder: &GraphBuilder,
    mask: &EdgeMask,
    inputs: &[&Tensor],
) -> Result<Vec<PersistenceDiagram>> {
    inputs
        .par_iter()
        .map(|x| {
            let (_, record) = net.forward(x)?;
            let graph = builder.induce(&record)?;
            pd0(&positive_subgraph(&apply_mask(&graph, mask)))
        })
        .collect()
}

fn extract_vectors(
    net: &Network,
    builder: &GraphBuilder,
    mask: &EdgeMask,
    inputs: &[&Tensor],
    kind: FeatureKind,
) -> Result<Vec<Vec<f64>>> {
    inputs
        .par_iter()
        .map(|x| {
            let (_, record) = net.forward(x)?;
            let graph = builder.induce(&record)?;
            match kind {
                FeatureKind::Rg => Ok(raw_graph_features(&graph, mask)),
                FeatureKind::PdCounts => {
                    let stats = pd_stats(&pd0(&positive_subgraph(&apply_mask(&graph, mask)))?);
                    Ok(vec![
                        stats.total_points as f64,
                        stats.infinite_points as f64,
                    ])
                }
                FeatureKind::Pd => unreachable!("diagram features use extract_diagrams"),
            }
        })
        .collect()
}

struct FittedScores {
    scores: Vec<f64>,
    labels: Vec<bool>,
    sigma: f64,
}

fn fit_and_score(
    config: &ExperimentConfig,
    net: &Network,
    mask: &EdgeMask,
    clean_fit: &[&Tensor],
    clean_eval: &[&Tensor],
    adv_fit: &[&Tensor],
    adv_eval: &[&Tensor],
) -> Result<FittedScores> {
    let builder = GraphBuilder::new(net)?;
    let eval: Vec<&Tensor> = clean_eval.iter().chain(adv_eval.iter()).copied().collect();
    let labels: Vec<bool> = (0..clean_eval.len())
        .map(|_| true)
        .chain((0..adv_eval.len()).map(|_| false))
        .collect();

    let (scores, sigma) = match config.feature {
        FeatureKind::Pd => {
            let fit_clean_d = extract_diagrams(net, &builder, mask, clean_fit)?;
            let eval_d = extract_diagrams(net, &builder, mask, &eval)?;
            let sigma = match config.sigma {
                SigmaPolicy::Fixed(s) => s,
                SigmaPolicy::Median => {
                    median_sw_sigma(&fit_clean_d, config.directions, config.infinity)?
                }
                SigmaPolicy::Quantile(p) => {
                    quantile_sw_sigma(&fit_clean_d, config.directions, config.infinity, p)?
                }
            };
            let scores = match config.mode {
                DetectorMode::Unsupervised => {
                    let gram = sw_gram(
                        &fit_clean_d,
                        &fit_clean_d,
                        config.directions,
                        sigma,
                        config.infinity,
                    )?;
                    let model = fit_one_class(&gram, config.nu)?;
                    let cross = sw_gram(
                        &eval_d,
                        &fit_clean_d,
                        config.directions,
                        sigma,
                        config.infinity,
                    )?;
                    model.score(&cross)?
                }
                DetectorMode::Supervised => {
                    let fit_adv_d = extract_diagrams(net, &builder, mask, adv_fit)?;
                    let fit_all: Vec<PersistenceDiagram> = fit_clean_d
                        .iter()
                        .chain(fit_adv_d.iter())
                        .cloned()
                        .collect();
                    let fit_labels: Vec<bool> = (0..fit_clean_d.len())
                        .map(|_| true)
                        .chain((0..fit_adv_d.len()).map(|_| false))
                        .collect();
                    let gram = sw_gram(
                        &fit_all,
                        &fit_all,
                        config.directions,
                        sigma,
                        config.infinity,
                    )?;
                    let model = fit_binary(&gram, &fit_labels, config.c)?;
                    let cross = sw_gram(
                        &eval_d,
                        &fit_all,
                        config.directions,
                        sigma,
                        config.infinity,
                    )?;
                    model.score(&cross)?
                }
            };
            (scores, sigma)
        }
        FeatureKind::Rg | FeatureKind::PdCounts => {
            let kind = config.feature;
            let fit_clean_v = extract_vectors(net, &builder, mask, clean_fit, kind)?;
            let eval_v = extract_vectors(net, &builder, mask, &eval, kind)?;
            let sigma = match config.sigma {
                SigmaPolicy::Fixed(s) => s,
                SigmaPolicy::Median => median_rbf_sigma(&fit_clean_v),
                SigmaPolicy::Quantile(p) => quantile_rbf_sigma(&fit_clean_v, p),
            };
            let scores = match config.mode {
                DetectorMode::Unsupervised => {
                    let gram = rbf_gram(&fit_clean_v, &fit_clean_v, sigma)?;
                    let model = fit_one_class(&gram, config.nu)?;
                    let cross = rbf_gram(&eval_v, &fit_clean_v, sigma)?;
                    model.score(&cross)?
                }
                DetectorMode::Supervised => {
                    let fit_adv_v = extract_vectors(net, &builder, mask, adv_fit, kind)?;
                    let fit_all: Vec<Vec<f64>> = fit_clean_v
                        .iter()
                        .chain(fit_adv_v.iter())
                        .cloned()
                        .collect();
                    let fit_labels: Vec<bool> = (0..fit_clean_v.len())
                        .map(|_| true)
                        .chain((0..fit_adv_v.len()).map(|_| false))
                        .collect();
                    let gram = rbf_gram(&fit_all, &fit_all, sigma)?;
                    let model = fit_binary(&gram, &fit_labels, config.c)?;
                    let cross = rbf_gram(&eval_v, &fit_all, sigma)?;
                    model.score(&cross)?
                }
            };
            (scores, sigma)
        }
    };
    Ok(FittedScores {
        scores,
        labels,
        sigma,
    })
}

/// Full detection pipeline with an explicit selection side (the edge
/// comparison flips it to `Largest`).
pub fn run_detection_with_side(
    config: &ExperimentConfig,
    cache: &Cache,
    side: SelectionSide,
) -> Result<DetectionReport> {
    let prepared = prepare(config, cache)?;
    let net = &prepared.network;
    let layers = resolve_layers(config, net);
    let mask = select_edges(net, config.q, &layers, config.criterion, side)?;

    // Clean pool halves into detector-fit and evaluation; adversaries halve
    // into a supervised-fit reserve and evaluation, so both modes score the
    // same evaluation set.
    let clean: Vec<&Tensor> = prepared.adv.clean_inputs.iter().collect();
    let (clean_fit, clean_eval) = clean.split_at(clean.len() / 2);
    let advs: Vec<&Tensor> = prepared.adv.adv.iter().map(|e| &e.perturbed).collect();
    let (adv_fit, adv_eval) = advs.split_at(advs.len() / 2);

    let fitted = fit_and_score(config, net, &mask, clean_fit, clean_eval, adv_fit, adv_eval)?;
    let point_auc = auc(&fitted.scores, &fitted.labels)?;
    let (ci_low, ci_high) = bootstrap_ci(
        &fitted.scores,
        &fitted.labels,
        100,
        derive_seed(config.seed, "bootstrap"),
    )?;

    Ok(DetectionReport {
        auc: point_auc,
        ci_low,
        ci_high,
        scores: fitted.scores,
        labels: fitted.labels,
        config: json!({
            "feature": config.feature,
            "mode": config.mode,
            "criterion": config.criterion,
            "side": side,
            "q": config.q,
            "epsilon": config.attack.epsilon,
            "directions": config.directions,
            "sigma": fitted.sigma,
            "nu": config.nu,
            "c": config.c,
            "seed": config.seed,
            "attack_success_rate": prepared.adv.success_rate,
            "clean_fit": clean_fit.len(),
            "clean_eval": clean_eval.len(),
            "adv_fit": adv_fit.len(),
            "adv_eval": adv_eval.len(),
            "experiment": config,
        }),
    })
}

/// Three-step detection pipeline: attack, feature extraction, detector.
pub fn run_detection(config: &ExperimentConfig, cache: &Cache) -> Result<DetectionReport> {
    run_detection_with_side(config, cache, SelectionSide::Smallest)
}

/// One row of the pruning sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneRow {
    pub fraction: f64,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: f64,
    /// Set when the fraction zeroes every parameter.
    pub degenerate: bool,
}

/// Zero the `fraction` most under-optimized parameters of every layer.
fn prune_network(net: &Network, fraction: f64) -> Result<Network> {
    let mut pruned = net.clone();
    if fraction <= 0.0 {
        return Ok(pruned);
    }
    let layers: Vec<usize> = (0..net.param_layer_indices().len()).collect();
    let mask = select_edges(
        net,
        fraction.min(1.0),
        &layers,
        SelectionCriterion::MagnitudeIncrease,
        SelectionSide::Smallest,
    )?;
    for (ordinal, &spec) in net.param_layer_indices().iter().enumerate() {
        let kept = mask.kept_indices(ordinal);
        let layer = &mut pruned.layers_mut()[spec];
        match layer {
            crate::nn::Layer::Dense(d) => {
                for &p in &kept {
                    d.weight[p] = 0.0;
                }
            }
            crate::nn::Layer::Conv2d(c) => {
                for &p in &kept {
                    c.kernel[p] = 0.0;
                }
            }
            crate::nn::Layer::Flatten => {}
        }
    }
    Ok(pruned)
}

/// Prune at each fraction and re-measure clean and adversarial accuracy on
/// the test split, regenerating the attack against each pruned network.
pub fn run_pruning_sweep(
    config: &ExperimentConfig,
    cache: &Cache,
    fractions: &[f64],
) -> Result<Vec<PruneRow>> {
    let prepared = prepare(config, cache)?;
    let test = subset(&prepared.dataset, &prepared.split.test);
    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config(format!(
                "prune fraction {} outside [0, 1]",
                fraction
            )));
        }
        let pruned = prune_network(&prepared.network, fraction)?;
        let clean_accuracy = pruned.accuracy(&test.inputs, &test.labels)?;
        let hits: Vec<bool> = test
            .inputs
            .par_iter()
            .zip(&test.labels)
            .map(|(x, &y)| {
                let adv = pgd(&pruned, x, y, &config.attack)?;
                Ok(pruned.predict(&adv)? == y)
            })
            .collect::<Result<_>>()?;
        let adversarial_accuracy =
            hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
        rows.push(PruneRow {
            fraction,
            clean_accuracy,
            adversarial_accuracy,
            degenerate: fraction >= 1.0,
        });
    }
    Ok(rows)
}

/// Paired reports: identical pipeline with the under-optimized (smallest
/// criterion) edges and the well-optimized (largest) ones.
pub struct EdgeComparison {
    pub under_optimized: DetectionReport,
    pub well_optimized: DetectionReport,
}

pub fn run_edge_comparison(config: &ExperimentConfig, cache: &Cache) -> Result<EdgeComparison> {
    Ok(EdgeComparison {
        under_optimized: run_detection_with_side(config, cache, SelectionSide::Smallest)?,
        well_optimized: run_detection_with_side(config, cache, SelectionSide::Largest)?,
    })
}

/// Raw-graph or point-count feature vectors per evaluated input, labeled
/// clean/adv, for the extract command.
pub fn export_vectors(
    config: &ExperimentConfig,
    cache: &Cache,
    kind: FeatureKind,
) -> Result<Vec<(String, Vec<f64>)>> {
    if kind == FeatureKind::Pd {
        return Err(Error::Config(
            "diagram features are exported as CSV diagrams, not vectors".into(),
        ));
    }
    let prepared = prepare(config, cache)?;
    let net = &prepared.network;
    let layers = resolve_layers(config, net);
    let mask = select_edges(
        net,
        config.q,
        &layers,
        config.criterion,
        SelectionSide::Smallest,
    )?;
    let builder = GraphBuilder::new(net)?;
    let mut out = Vec::new();
    let clean: Vec<&Tensor> = prepared.adv.clean_inputs.iter().collect();
    let advs: Vec<&Tensor> = prepared.adv.adv.iter().map(|e| &e.perturbed).collect();
    for (name, inputs) in [("clean", clean), ("adv", advs)] {
        let vectors = extract_vectors(net, &builder, &mask, &inputs, kind)?;
        for (i, v) in vectors.into_iter().enumerate() {
            out.push((format!("{}-{:04}", name, i), v));
        }
    }
    Ok(out)
}

/// Dump every evaluated input's diagram as CSV text, for offline plotting.
pub fn export_diagrams(
    config: &ExperimentConfig,
    cache: &Cache,
) -> Result<Vec<(String, String)>> {
    let prepared = prepare(config, cache)?;
    let net = &prepared.network;
    let layers = resolve_layers(config, net);
    let mask = select_edges(
        net,
        config.q,
        &layers,
        config.criterion,
        SelectionSide::Smallest,
    )?;
    let builder = GraphBuilder::new(net)?;
    let mut out = Vec::new();
    let clean: Vec<&Tensor> = prepared.adv.clean_inputs.iter().collect();
    let advs: Vec<&Tensor> = prepared.adv.adv.iter().map(|e| &e.perturbed).collect();
    for (name, inputs) in [("clean", clean), ("adv", advs)] {
        let diagrams = extract_diagrams(net, &builder, &mask, &inputs)?;
        for (i, d) in diagrams.iter().enumerate() {
            out.push((format!("{}-{:04}", name, i), diagram_to_csv(d)));
        }
    }
    Ok(out)
}
