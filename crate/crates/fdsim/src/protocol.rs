//! The federated-distillation round engine: knowledge extraction, the
//! poisoning hook, server aggregation (per-class averaging or the
//! per-sample knowledge cache), broadcast, and local SGD updates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{apply_attack, select_malicious, AttackAssignment, AttackKind};
use crate::config::{DatasetSpec, ExperimentConfig, Protocol};
use crate::data::{
    csv_loader::load_csv, dirichlet_partition, generate_synthetic, idx::load_idx, Dataset,
    Partition, RandomProjection, SampleHash, Split,
};
use crate::error::{Result, SimError};
use crate::metrics::evaluate;
use crate::nn::{
    backward_and_step, local_objective, make_model, normalize_teacher, softmax, ArchId,
    LossBreakdown,
};
use crate::Net;

/// One participant: its model, its view of the training data, and
/// whether it poisons its uploads.
pub struct ClientState {
    pub id: usize,
    pub net: Net,
    /// Indices into the shared training set.
    pub indices: Vec<usize>,
    pub malicious: bool,
    pub attack: AttackKind,
    train_rng: ChaCha8Rng,
    attack_rng: ChaCha8Rng,
}

/// A client's upload: per-sample confidence vectors plus the per-class
/// means computed from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Knowledge {
    /// (global sample index, confidence vector), in local sample order.
    pub entries: Vec<(usize, Vec<f64>)>,
    /// Per class: (mean vector, contributing sample count).
    pub class_means: Vec<Option<(Vec<f64>, usize)>>,
}

impl Knowledge {
    /// Recomputes the per-class means from the per-sample entries, so
    /// poisoned entries feed both aggregation paths consistently.
    pub fn recompute_class_means(&mut self, labels: &[usize], n_classes: usize) {
        let mut sums: Vec<Option<(Vec<f64>, usize)>> = vec![None; n_classes];
        for (sample, conf) in &self.entries {
            let class = labels[*sample];
            let slot = sums[class].get_or_insert_with(|| (vec![0.0; conf.len()], 0));
            for (s, &c) in slot.0.iter_mut().zip(conf) {
                *s += c;
            }
            slot.1 += 1;
        }
        for slot in sums.iter_mut().flatten() {
            for s in &mut slot.0 {
                *s /= slot.1 as f64;
            }
        }
        self.class_means = sums;
    }
}

/// Server-side aggregate broadcast back to the clients.
#[derive(Debug, Clone)]
pub enum GlobalKnowledge {
    FdAvg { per_class: Vec<Option<Vec<f64>>> },
    Cache(ServerCache),
}

/// Per-sample knowledge cache: the latest uploaded confidence vector for
/// every (owner, sample), keyed by the sample's projection hash.
#[derive(Debug, Clone, Default)]
pub struct ServerCache {
    entries: Vec<CacheEntry>,
}

#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub owner: usize,
    pub sample: usize,
    pub hash: SampleHash,
    pub confidence: Vec<f64>,
}

impl ServerCache {
    /// Replaces the owner's previous upload with the new one.
    pub fn update(&mut self, owner: usize, uploads: Vec<(usize, SampleHash, Vec<f64>)>) {
        self.entries.retain(|e| e.owner != owner);
        for (sample, hash, confidence) in uploads {
            self.entries.push(CacheEntry {
                owner,
                sample,
                hash,
                confidence,
            });
        }
    }

    /// Mean of the `r` most cosine-similar entries owned by other
    /// clients. Fewer than `r` available: average what exists. None
    /// available: no teacher.
    pub fn fetch(&self, hash: &SampleHash, owner: usize, r: usize) -> Option<Vec<f64>> {
        let mut scored: Vec<(f64, &CacheEntry)> = self
            .entries
            .iter()
            .filter(|e| e.owner != owner)
            .map(|e| (hash.cosine(&e.hash), e))
            .collect();
        if scored.is_empty() {
            return None;
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        let take = r.min(scored.len());
        let n = scored[0].1.confidence.len();
        let mut mean = vec![0.0; n];
        for (_, e) in &scored[..take] {
            for (m, &c) in mean.iter_mut().zip(&e.confidence) {
                *m += c;
            }
        }
        for m in &mut mean {
            *m /= take as f64;
        }
        Some(mean)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-round record: accuracies after the round's local updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub per_client_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub losses: Vec<LossBreakdown>,
    /// Teachers that arrived off the simplex and fell back to uniform.
    pub degenerate_teachers: usize,
    /// Clients whose update hit a non-finite loss this round.
    pub diverged_clients: Vec<usize>,
}

/// Full-run result: the per-round stream plus the final summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub reports: Vec<RoundReport>,
    pub final_mean_accuracy: f64,
}

/// Per-sample softmax outputs over the client's full local training set,
/// plus per-class means.
pub fn extract_knowledge(client: &ClientState, train: &Dataset) -> Result<Knowledge> {
    if client.indices.is_empty() {
        return Err(SimError::config(format!(
            "client {} has no local data",
            client.id
        )));
    }
    let batch = train.features.select_rows(&client.indices);
    let logits = client.net.forward(&batch)?;
    let mut entries = Vec::with_capacity(client.indices.len());
    for (row, &sample) in client.indices.iter().enumerate() {
        entries.push((sample, softmax(logits.row(row))?));
    }
    let mut knowledge = Knowledge {
        entries,
        class_means: Vec::new(),
    };
    knowledge.recompute_class_means(&train.labels, train.n_classes);
    Ok(knowledge)
}

/// Knowledge averaging over uploads: the global per-class mean of the
/// clients' per-class means. `exclude` drops one client's contribution
/// (the per-recipient variant).
pub fn aggregate_fd(uploads: &[Knowledge], exclude: Option<usize>) -> Result<GlobalKnowledge> {
    if uploads.is_empty() {
        return Err(SimError::input("no uploads to aggregate".to_string()));
    }
    let n_classes = uploads[0].class_means.len();
    let mut per_class: Vec<Option<Vec<f64>>> = vec![None; n_classes];
    for class in 0..n_classes {
        let mut sum: Option<Vec<f64>> = None;
        let mut contributors = 0usize;
        for (k, upload) in uploads.iter().enumerate() {
            if Some(k) == exclude {
                continue;
            }
            if let Some((mean, count)) = &upload.class_means[class] {
                if *count == 0 {
                    continue;
                }
                let acc = sum.get_or_insert_with(|| vec![0.0; mean.len()]);
                for (a, &m) in acc.iter_mut().zip(mean) {
                    *a += m;
                }
                contributors += 1;
            }
        }
        per_class[class] = sum.map(|mut v| {
            for x in &mut v {
                *x /= contributors as f64;
            }
            v
        });
    }
    Ok(GlobalKnowledge::FdAvg { per_class })
}

/// The whole simulated federation: shared data, clients, server state.
pub struct Simulation {
    pub cfg: ExperimentConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub partition: Partition,
    pub clients: Vec<ClientState>,
    pub assignment: AttackAssignment,
    cache: ServerCache,
    hashes: Vec<SampleHash>,
}

fn per_client_seed(base: u64, id: usize) -> u64 {
    base ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn client_rng(base: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(id as u64 + 1);
    rng
}

pub fn load_dataset(spec: &DatasetSpec, data_seed: u64) -> Result<(Dataset, Dataset)> {
    match spec {
        DatasetSpec::Synthetic {
            n_classes,
            per_class,
            dim,
            separation,
        } => generate_synthetic(*n_classes, *per_class, *dim, *separation, data_seed),
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train = load_idx(train_images, train_labels, Split::Train)?;
            let mut test = load_idx(test_images, test_labels, Split::Test)?;
            test.n_classes = test.n_classes.max(train.n_classes);
            Ok((train, test))
        }
        DatasetSpec::Csv { train, test } => {
            let train_ds = load_csv(train, Split::Train)?;
            let mut test_ds = load_csv(test, Split::Test)?;
            test_ds.n_classes = test_ds.n_classes.max(train_ds.n_classes);
            Ok((train_ds, test_ds))
        }
    }
}

impl Simulation {
    pub fn new(cfg: ExperimentConfig) -> Result<Simulation> {
        cfg.validate()?;
        let (train, test) = load_dataset(&cfg.dataset, cfg.seeds.data)?;
        let partition = dirichlet_partition(&train, cfg.clients, cfg.alpha, cfg.seeds.data)?;
        let assignment = select_malicious(cfg.clients, cfg.poison_ratio, cfg.seeds.attack)?;

        let mut clients = Vec::with_capacity(cfg.clients);
        for (id, indices) in partition.assignments.iter().enumerate() {
            let arch = if cfg.heterogeneous_models {
                ArchId::for_client(id)
            } else {
                ArchId::A1
            };
            let net = make_model(
                arch,
                train.dim(),
                train.n_classes,
                per_client_seed(cfg.seeds.model, id),
            )?;
            clients.push(ClientState {
                id,
                net,
                indices: indices.clone(),
                malicious: assignment.is_malicious(id),
                attack: cfg.attack,
                train_rng: client_rng(cfg.seeds.training, id),
                attack_rng: client_rng(cfg.seeds.attack, id),
            });
        }

        let projection = RandomProjection::new(cfg.seeds.data, train.dim(), cfg.hash_dim)?;
        let mut hashes = Vec::with_capacity(train.len());
        for i in 0..train.len() {
            hashes.push(projection.hash(train.features.row(i))?);
        }

        Ok(Simulation {
            cfg,
            train,
            test,
            partition,
            clients,
            assignment,
            cache: ServerCache::default(),
            hashes,
        })
    }

    /// One communication round: extract, poison, aggregate, broadcast,
    /// local update, evaluate.
    pub fn run_round(&mut self, round: usize) -> Result<RoundReport> {
        // Client side: extract and (for venomous clients) poison uploads.
        let mut uploads = Vec::with_capacity(self.clients.len());
        for client in &mut self.clients {
            let mut knowledge = extract_knowledge(client, &self.train)
                .map_err(|e| SimError::config(format!("round {round}: {e}")))?;
            if client.malicious {
                apply_attack(&mut knowledge.entries, client.attack, &mut client.attack_rng);
                knowledge.recompute_class_means(&self.train.labels, self.train.n_classes);
            }
            uploads.push(knowledge);
        }

        // Server side: aggregate and broadcast.
        match self.cfg.protocol {
            Protocol::FdAvg => {}
            Protocol::Cache => {
                for (k, upload) in uploads.iter().enumerate() {
                    let entries = upload
                        .entries
                        .iter()
                        .map(|(sample, conf)| (*sample, self.hashes[*sample].clone(), conf.clone()))
                        .collect();
                    self.cache.update(k, entries);
                }
            }
        }

        // Client side: build per-sample teachers and run local SGD.
        let mut degenerate_teachers = 0usize;
        let mut diverged = Vec::new();
        let mut losses = Vec::with_capacity(self.clients.len());
        let shared_zs = match self.cfg.protocol {
            Protocol::FdAvg if !self.cfg.exclude_self => Some(aggregate_fd(&uploads, None)?),
            _ => None,
        };
        for k in 0..self.clients.len() {
            let teachers = match self.cfg.protocol {
                Protocol::FdAvg => {
                    let global = match &shared_zs {
                        Some(g) => g.clone(),
                        None => aggregate_fd(&uploads, Some(k))?,
                    };
                    let GlobalKnowledge::FdAvg { per_class } = global else {
                        unreachable!()
                    };
                    self.clients[k]
                        .indices
                        .iter()
                        .map(|&i| per_class[self.train.labels[i]].clone())
                        .collect::<Vec<_>>()
                }
                Protocol::Cache => self.clients[k]
                    .indices
                    .iter()
                    .map(|&i| self.cache.fetch(&self.hashes[i], k, self.cfg.neighbors))
                    .collect(),
            };
            let teachers: Vec<Option<Vec<f64>>> = teachers
                .into_iter()
                .map(|t| {
                    t.map(|raw| {
                        let (normalized, was_degenerate) = normalize_teacher(&raw);
                        if was_degenerate {
                            degenerate_teachers += 1;
                        }
                        normalized
                    })
                })
                .collect();

            match self.local_update(k, &teachers) {
                Ok(loss) => losses.push(loss),
                Err(SimError::Numeric(_)) => {
                    diverged.push(k);
                    losses.push(LossBreakdown {
                        ce: f64::NAN,
                        kd: f64::NAN,
                        total: f64::NAN,
                    });
                }
                Err(e) => {
                    return Err(SimError::config(format!(
                        "round {round}, client {k}: {e}"
                    )))
                }
            }
        }

        // Evaluate every client on the shared test split.
        let per_client_accuracy: Vec<f64> = self
            .clients
            .iter()
            .map(|c| evaluate(&c.net, &self.test))
            .collect::<Result<_>>()?;
        let mean_accuracy =
            per_client_accuracy.iter().sum::<f64>() / per_client_accuracy.len() as f64;
        Ok(RoundReport {
            round,
            per_client_accuracy,
            mean_accuracy,
            losses,
            degenerate_teachers,
            diverged_clients: diverged,
        })
    }

    /// `local_epochs` passes of minibatch SGD on the distillation
    /// objective. Returns the post-update loss over the full local set.
    fn local_update(
        &mut self,
        k: usize,
        teachers: &[Option<Vec<f64>>],
    ) -> Result<LossBreakdown> {
        let cfg = &self.cfg;
        let n_local = self.clients[k].indices.len();
        for _ in 0..cfg.local_epochs {
            let mut order: Vec<usize> = (0..n_local).collect();
            order.shuffle(&mut self.clients[k].train_rng);
            for chunk in order.chunks(cfg.batch_size) {
                let global: Vec<usize> =
                    chunk.iter().map(|&i| self.clients[k].indices[i]).collect();
                let batch = self.train.features.select_rows(&global);
                let labels: Vec<usize> = global.iter().map(|&i| self.train.labels[i]).collect();
                let batch_teachers: Vec<Option<Vec<f64>>> =
                    chunk.iter().map(|&i| teachers[i].clone()).collect();
                backward_and_step(
                    &mut self.clients[k].net,
                    &batch,
                    &labels,
                    &batch_teachers,
                    cfg.beta,
                    cfg.temperature,
                    cfg.lr,
                )?;
            }
        }
        let all: Vec<usize> = self.clients[k].indices.clone();
        let batch = self.train.features.select_rows(&all);
        let labels: Vec<usize> = all.iter().map(|&i| self.train.labels[i]).collect();
        local_objective(
            &self.clients[k].net,
            &batch,
            &labels,
            teachers,
            cfg.beta,
            cfg.temperature,
        )
    }

    pub fn run(&mut self) -> Result<ExperimentResult> {
        let mut reports = Vec::with_capacity(self.cfg.rounds);
        for round in 0..self.cfg.rounds {
            reports.push(self.run_round(round)?);
        }
        let final_mean_accuracy = reports.last().map_or(0.0, |r| r.mean_accuracy);
        Ok(ExperimentResult {
            reports,
            final_mean_accuracy,
        })
    }
}

/// Builds the world from a config and runs it to completion.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Simulation, ExperimentResult)> {
    let mut sim = Simulation::new(cfg.clone())?;
    let result = sim.run()?;
    Ok((sim, result))
}
