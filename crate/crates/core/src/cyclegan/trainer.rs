use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bundle::{image_to_tensor, Direction, ModelBundle};
use super::config::TrainingConfig;
use super::losses::{cycle_consistency_loss, identity_loss, l1_grad, score_loss, GeneratorLosses};
use super::model::NetworkRole;
use super::pool::ImagePool;
use super::report::{LossReport, LOSS_CSV_HEADER};
use super::EngineError;
use crate::dataset::DatasetPair;
use crate::nn::{Adam, Gradients, Tensor};
use crate::pupil::PupilConfig;
use crate::types::EyeImage;

pub const TRAIN_LOG_FILE: &str = "train.log";
pub const LOSS_CSV_FILE: &str = "losses.csv";
pub const BEST_MARKER_FILE: &str = "best.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

// Domains larger than this are read from disk per batch.
const CACHE_LIMIT: usize = 512;

/// Per-role masks of parameters that must not change.
pub type FrozenMasks = BTreeMap<NetworkRole, Vec<bool>>;

/// Resolves freeze entries against parameter names.
///
/// An entry is a name prefix (`down1` freezes `down1.weight` and `down1.bias`
/// in both generators and, if present, discriminators) optionally qualified by
/// a network (`G.down1`). Entries matching nothing are rejected.
pub fn resolve_freeze(bundle: &ModelBundle, spec: &[String]) -> Result<FrozenMasks, EngineError> {
    let mut masks: FrozenMasks = NetworkRole::ALL
        .iter()
        .map(|&r| (r, vec![false; bundle.network(r).params().len()]))
        .collect();
    for entry in spec {
        let (roles, prefix): (Vec<NetworkRole>, &str) = match entry.split_once('.') {
            Some((head, rest)) if NetworkRole::ALL.iter().any(|r| r.as_str() == head) => {
                (NetworkRole::ALL.into_iter().filter(|r| r.as_str() == head).collect(), rest)
            }
            _ => (NetworkRole::ALL.to_vec(), entry.as_str()),
        };
        let mut matched = false;
        for role in roles {
            for (i, p) in bundle.network(role).params().iter().enumerate() {
                if !prefix.is_empty() && p.name.starts_with(prefix) {
                    masks.get_mut(&role).unwrap()[i] = true;
                    matched = true;
                }
            }
        }
        if !matched {
            return Err(EngineError::UnknownLayerName(entry.clone()));
        }
    }
    Ok(masks)
}

/// Losses and parameter gradients of both composite generator objectives,
/// without touching any weights.
#[derive(Clone, Debug)]
pub struct GeneratorPass {
    pub g_a_to_b: GeneratorLosses,
    pub g_b_to_a: GeneratorLosses,
    /// d(g_AtoB)/d(G parameters).
    pub grads_g: Gradients,
    /// d(g_BtoA)/d(F parameters).
    pub grads_f: Gradients,
    pub fake_a: Tensor,
    pub fake_b: Tensor,
}

fn check_batch(a: &Tensor, b: &Tensor) -> Result<(), EngineError> {
    if a.shape() != b.shape() {
        return Err(EngineError::ShapeMismatch(format!("batch A {} vs batch B {}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Composite generator losses, forward only.
pub fn generator_losses(
    bundle: &ModelBundle,
    a: &Tensor,
    b: &Tensor,
    cfg: &TrainingConfig,
) -> Result<(GeneratorLosses, GeneratorLosses), EngineError> {
    check_batch(a, b)?;
    let fake_b = bundle.g.forward(a)?;
    let fake_a = bundle.f.forward(b)?;
    let rec_a = bundle.f.forward(&fake_b)?;
    let rec_b = bundle.g.forward(&fake_a)?;
    let cyc_a = cycle_consistency_loss(a, &rec_a)?;
    let cyc_b = cycle_consistency_loss(b, &rec_b)?;
    let id_b = identity_loss(b, &bundle.g.forward(b)?)?;
    let id_a = identity_loss(a, &bundle.f.forward(a)?)?;
    let form = cfg.adversarial_form;
    let s_fb = bundle.d_y.forward(&fake_b)?;
    let s_fa = bundle.d_x.forward(&fake_a)?;
    let (adv_g, _) = score_loss(form, &s_fb, &vec![1.0; s_fb.data().len()]);
    let (adv_f, _) = score_loss(form, &s_fa, &vec![1.0; s_fa.data().len()]);
    Ok((
        GeneratorLosses::new(adv_g, cyc_a, cyc_b, id_b, cfg)?,
        GeneratorLosses::new(adv_f, cyc_b, cyc_a, id_a, cfg)?,
    ))
}

/// Forward and backward pass of both generator objectives.
///
/// G minimises adv(D_Y(G(a))) + λc·(|F(G(a))−a| + |G(F(b))−b|) + λi·|G(b)−b|,
/// F the mirror image. Gradients flow through the other generator but only
/// G's and F's own parameter gradients are kept.
pub fn generator_pass(
    bundle: &ModelBundle,
    a: &Tensor,
    b: &Tensor,
    cfg: &TrainingConfig,
) -> Result<GeneratorPass, EngineError> {
    check_batch(a, b)?;
    super::model::check_shape(&bundle.g.net, a.shape(), true)?;
    let (g, f) = (&bundle.g.net, &bundle.f.net);
    let (dx, dy) = (&bundle.d_x.net, &bundle.d_y.net);
    let (lc, li) = (cfg.lambda_cycle, cfg.lambda_identity);
    let mut grads_g = Gradients::zeros_like(g);
    let mut grads_f = Gradients::zeros_like(f);

    let (fake_b, t_fake_b) = g.forward_with_tape(a);
    let (fake_a, t_fake_a) = f.forward_with_tape(b);

    // a → G → F → a
    let (rec_a, t_rec_a) = f.forward_with_tape(&fake_b);
    let cyc_a = cycle_consistency_loss(a, &rec_a)?;
    let d_fake_b_cycle = f.backward(&t_rec_a, l1_grad(&rec_a, a, lc), Some(&mut grads_f), true).unwrap();
    drop(t_rec_a);

    // b → F → G → b
    let (rec_b, t_rec_b) = g.forward_with_tape(&fake_a);
    let cyc_b = cycle_consistency_loss(b, &rec_b)?;
    let d_fake_a_cycle = g.backward(&t_rec_b, l1_grad(&rec_b, b, lc), Some(&mut grads_g), true).unwrap();
    drop(t_rec_b);

    let form = cfg.adversarial_form;
    let (s_fb, t_s_fb) = dy.forward_with_tape(&fake_b);
    let (adv_g, d_s_fb) = score_loss(form, &s_fb, &vec![1.0; s_fb.data().len()]);
    let mut d_fake_b = dy.backward(&t_s_fb, d_s_fb, None, true).unwrap();
    d_fake_b.add_assign(&d_fake_b_cycle);
    g.backward(&t_fake_b, d_fake_b, Some(&mut grads_g), false);
    drop(t_fake_b);

    let (s_fa, t_s_fa) = dx.forward_with_tape(&fake_a);
    let (adv_f, d_s_fa) = score_loss(form, &s_fa, &vec![1.0; s_fa.data().len()]);
    let mut d_fake_a = dx.backward(&t_s_fa, d_s_fa, None, true).unwrap();
    d_fake_a.add_assign(&d_fake_a_cycle);
    f.backward(&t_fake_a, d_fake_a, Some(&mut grads_f), false);
    drop(t_fake_a);

    let (idt_b, t_idt_b) = g.forward_with_tape(b);
    let id_b = identity_loss(b, &idt_b)?;
    if li > 0.0 {
        g.backward(&t_idt_b, l1_grad(&idt_b, b, li), Some(&mut grads_g), false);
    }
    drop(t_idt_b);
    let (idt_a, t_idt_a) = f.forward_with_tape(a);
    let id_a = identity_loss(a, &idt_a)?;
    if li > 0.0 {
        f.backward(&t_idt_a, l1_grad(&idt_a, a, li), Some(&mut grads_f), false);
    }

    Ok(GeneratorPass {
        g_a_to_b: GeneratorLosses::new(adv_g, cyc_a, cyc_b, id_b, cfg)?,
        g_b_to_a: GeneratorLosses::new(adv_f, cyc_b, cyc_a, id_a, cfg)?,
        grads_g,
        grads_f,
        fake_a,
        fake_b,
    })
}

/// Stateful trainer over a [`ModelBundle`].
#[derive(Debug)]
pub struct Trainer {
    pub bundle: ModelBundle,
    cfg: TrainingConfig,
    pool_a: ImagePool,
    pool_b: ImagePool,
    label_rng: ChaCha8Rng,
    frozen: FrozenMasks,
}

impl Trainer {
    /// Trains `bundle` under `cfg`; the bundle's config snapshot is replaced.
    pub fn new(mut bundle: ModelBundle, cfg: TrainingConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        if cfg.arch != bundle.config.arch {
            return Err(EngineError::InvalidConfig(
                "architecture differs from the loaded checkpoint".into(),
            ));
        }
        bundle.config = cfg.clone();
        let frozen = resolve_freeze(&bundle, &[])?;
        let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
        seeds.set_stream(5);
        Ok(Self {
            pool_a: ImagePool::new(cfg.pool_size, seeds.gen()),
            pool_b: ImagePool::new(cfg.pool_size, seeds.gen()),
            label_rng: ChaCha8Rng::seed_from_u64(seeds.gen()),
            bundle,
            cfg,
            frozen,
        })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.cfg
    }

    pub fn freeze(&mut self, spec: &[String]) -> Result<(), EngineError> {
        self.frozen = resolve_freeze(&self.bundle, spec)?;
        Ok(())
    }

    pub fn frozen(&self) -> &FrozenMasks {
        &self.frozen
    }

    /// Discriminator targets: real → real_label + U(−a, a), fake → U(0, a).
    pub fn discriminator_targets(&mut self, len: usize, real: bool) -> Vec<f32> {
        let amp = self.cfg.label_noise_amplitude;
        (0..len)
            .map(|_| {
                if amp == 0.0 {
                    if real {
                        self.cfg.real_label
                    } else {
                        0.0
                    }
                } else if real {
                    self.cfg.real_label + self.label_rng.gen_range(-amp..=amp)
                } else {
                    self.label_rng.gen_range(0.0..=amp)
                }
            })
            .collect()
    }

    /// One update of G, F, D_X and D_Y on normalised batches.
    pub fn train_step(&mut self, a: &Tensor, b: &Tensor) -> Result<LossReport, EngineError> {
        let step = self.bundle.step + 1;
        let non_finite = |what: &str| EngineError::NonFiniteLoss { step: Some(step), what: what.to_string() };
        let pass = generator_pass(&self.bundle, a, b, &self.cfg).map_err(|e| match e {
            EngineError::NonFiniteLoss { what, .. } => non_finite(&what),
            other => other,
        })?;
        if !pass.grads_g.is_finite() || !pass.grads_f.is_finite() {
            return Err(non_finite("generator gradients"));
        }
        let adam = Adam::new(self.cfg.learning_rate, self.cfg.adam_beta1);
        for (role, grads) in [(NetworkRole::G, &pass.grads_g), (NetworkRole::F, &pass.grads_f)] {
            self.update(role, &adam, grads);
        }

        let pooled_a = self.pool_a.query(&pass.fake_a);
        let pooled_b = self.pool_b.query(&pass.fake_b);
        let (d_a_real, d_a_fake, grads_dx) = self.discriminator_pass(NetworkRole::DX, a, &pooled_a);
        let (d_b_real, d_b_fake, grads_dy) = self.discriminator_pass(NetworkRole::DY, b, &pooled_b);
        if !grads_dx.is_finite() || !grads_dy.is_finite() {
            return Err(non_finite("discriminator gradients"));
        }
        self.update(NetworkRole::DX, &adam, &grads_dx);
        self.update(NetworkRole::DY, &adam, &grads_dy);

        let report = LossReport {
            step,
            d_a_real,
            d_a_fake,
            d_b_real,
            d_b_fake,
            g_a_to_b: pass.g_a_to_b,
            g_b_to_a: pass.g_b_to_a,
        };
        if !report.is_finite() {
            return Err(non_finite("loss report"));
        }
        self.bundle.step = step;
        Ok(report)
    }

    fn discriminator_pass(&mut self, role: NetworkRole, real: &Tensor, fake: &Tensor) -> (f64, f64, Gradients) {
        let form = self.cfg.adversarial_form;
        let mut grads = Gradients::zeros_like(self.bundle.network(role));
        let (s_real, t_real) = self.bundle.network(role).forward_with_tape(real);
        let targets = self.discriminator_targets(s_real.data().len(), true);
        let (l_real, mut g_real) = score_loss(form, &s_real, &targets);
        g_real.scale(0.5);
        self.bundle.network(role).backward(&t_real, g_real, Some(&mut grads), false);
        drop(t_real);
        let (s_fake, t_fake) = self.bundle.network(role).forward_with_tape(fake);
        let targets = self.discriminator_targets(s_fake.data().len(), false);
        let (l_fake, mut g_fake) = score_loss(form, &s_fake, &targets);
        g_fake.scale(0.5);
        self.bundle.network(role).backward(&t_fake, g_fake, Some(&mut grads), false);
        (l_real, l_fake, grads)
    }

    fn update(&mut self, role: NetworkRole, adam: &Adam, grads: &Gradients) {
        let frozen = self.frozen[&role].clone();
        let mut state = self.bundle.optim.remove(&role).expect("optimizer state for every role");
        state.update(adam, self.bundle.network_mut(role), grads, &frozen);
        self.bundle.optim.insert(role, state);
    }
}

/// Best epoch by validation detection-success rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestMarker {
    pub epoch: u64,
    pub step: u64,
    pub success_rate: f64,
    pub checkpoint: PathBuf,
}

/// Result of a [`train`] or [`fine_tune`] run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub reports: Vec<LossReport>,
    pub epoch_checkpoints: Vec<PathBuf>,
    pub step_checkpoints: Vec<PathBuf>,
    pub validation: Vec<(u64, f64)>,
    pub best: Option<BestMarker>,
}

enum Domain {
    Cached(Vec<Tensor>),
    Lazy(Vec<PathBuf>),
}

impl Domain {
    fn open(pair: &DatasetPair, names: &[String], a: bool) -> Result<Self, EngineError> {
        let paths: Vec<PathBuf> = names.iter().map(|n| if a { pair.path_a(n) } else { pair.path_b(n) }).collect();
        if paths.len() > CACHE_LIMIT {
            return Ok(Domain::Lazy(paths));
        }
        let load = |n: &String| if a { pair.load_a(n) } else { pair.load_b(n) };
        let images = names
            .iter()
            .map(|n| Ok(image_to_tensor(load(n)?.pixels())))
            .collect::<Result<Vec<_>, EngineError>>()?;
        Ok(Domain::Cached(images))
    }

    fn len(&self) -> usize {
        match self {
            Domain::Cached(v) => v.len(),
            Domain::Lazy(v) => v.len(),
        }
    }

    fn get(&self, i: usize) -> Result<Tensor, EngineError> {
        match self {
            Domain::Cached(v) => Ok(v[i].clone()),
            Domain::Lazy(v) => {
                let img = image::open(&v[i]).map_err(crate::dataset::DatasetError::from)?.to_rgb8();
                let eye = EyeImage::new(img, crate::types::Provenance::Raw)
                    .map_err(|e| EngineError::ShapeMismatch(format!("{}: {e}", v[i].display())))?;
                Ok(image_to_tensor(eye.pixels()))
            }
        }
    }
}

/// Trains a freshly initialised bundle on `pair`, writing logs and
/// checkpoints below `out`.
pub fn train(pair: &DatasetPair, cfg: &TrainingConfig, out: &Path) -> Result<TrainOutcome, EngineError> {
    cfg.validate()?;
    let bundle = ModelBundle::new(cfg.clone())?;
    run(Trainer::new(bundle, cfg.clone())?, pair, out)
}

/// Continues training `bundle` with the layers named in `freeze` held fixed.
/// The epoch and step counters restart so the run is bookkept like [`train`].
pub fn fine_tune(
    mut bundle: ModelBundle,
    pair: &DatasetPair,
    freeze: &[String],
    cfg: &TrainingConfig,
    out: &Path,
) -> Result<TrainOutcome, EngineError> {
    bundle.step = 0;
    bundle.epoch = 0;
    for role in NetworkRole::ALL {
        bundle.optim.insert(role, crate::nn::AdamState::new(bundle.network(role)));
    }
    let mut trainer = Trainer::new(bundle, cfg.clone())?;
    trainer.freeze(freeze)?;
    run(trainer, pair, out)
}

fn validation_set(pair: &DatasetPair, count: usize) -> Vec<(String, f64, f64)> {
    let mut named: Vec<_> = pair
        .domain_a
        .iter()
        .filter_map(|n| pair.label_for(n).map(|l| (n.clone(), l.cx as f64, l.cy as f64)))
        .collect();
    named.sort_by(|x, y| x.0.cmp(&y.0));
    named.truncate(count);
    named
}

/// Share of labelled A images whose translated pupil lands within `tol` px.
pub fn detection_success_rate(
    bundle: &ModelBundle,
    pair: &DatasetPair,
    names: &[(String, f64, f64)],
    tol: f64,
) -> Result<f64, EngineError> {
    if names.is_empty() {
        return Ok(0.0);
    }
    let detector = PupilConfig::default();
    let mut hits = 0usize;
    for (name, cx, cy) in names {
        let translated = bundle.translate(&pair.load_a(name)?, Direction::AtoB)?;
        if let Some(d) = detector.detect(&translated) {
            if (d.cx - cx).hypot(d.cy - cy) <= tol {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / names.len() as f64)
}

fn run(mut trainer: Trainer, pair: &DatasetPair, out: &Path) -> Result<TrainOutcome, EngineError> {
    let cfg = trainer.config().clone();
    if pair.domain_a.is_empty() {
        return Err(EngineError::EmptyDomain("A".into()));
    }
    if pair.domain_b.is_empty() {
        return Err(EngineError::EmptyDomain("B".into()));
    }
    let dom_a = Domain::open(pair, &pair.domain_a, true)?;
    let dom_b = Domain::open(pair, &pair.domain_b, false)?;
    let validation = validation_set(pair, cfg.validation_images);

    let ckpt_root = out.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt_root)?;
    let mut log = BufWriter::new(File::create(out.join(TRAIN_LOG_FILE))?);
    let mut csv = BufWriter::new(File::create(out.join(LOSS_CSV_FILE))?);
    writeln!(csv, "{LOSS_CSV_HEADER}")?;

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(6);
    let bs = cfg.batch_size;
    let steps_per_epoch = dom_a.len().max(dom_b.len()).div_ceil(bs);
    let mut outcome = TrainOutcome {
        bundle: trainer.bundle.clone(),
        reports: Vec::new(),
        epoch_checkpoints: Vec::new(),
        step_checkpoints: Vec::new(),
        validation: Vec::new(),
        best: None,
    };
    let mut done = false;
    for epoch in 1..=cfg.epochs as u64 {
        let mut order_a: Vec<usize> = (0..dom_a.len()).collect();
        let mut order_b: Vec<usize> = (0..dom_b.len()).collect();
        order_a.shuffle(&mut order_rng);
        order_b.shuffle(&mut order_rng);
        for i in 0..steps_per_epoch {
            let batch = |dom: &Domain, order: &[usize]| -> Result<Tensor, EngineError> {
                let items = (0..bs)
                    .map(|j| dom.get(order[(i * bs + j) % order.len()]))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Tensor::stack(&items))
            };
            let (a, b) = (batch(&dom_a, &order_a)?, batch(&dom_b, &order_b)?);
            let report = match trainer.train_step(&a, &b) {
                Ok(r) => r,
                Err(e) => {
                    writeln!(log, "aborted: {e}")?;
                    log.flush()?;
                    return Err(e);
                }
            };
            writeln!(log, "{}", report.log_line())?;
            writeln!(csv, "{}", report.csv_row())?;
            outcome.reports.push(report);
            if cfg.checkpoint_every > 0 && report.step % cfg.checkpoint_every == 0 {
                let dir = ckpt_root.join(format!("step_{:06}", report.step));
                trainer.bundle.save(&dir)?;
                outcome.step_checkpoints.push(dir);
            }
            if cfg.max_steps.is_some_and(|m| report.step >= m) {
                done = true;
                break;
            }
        }
        log.flush()?;
        csv.flush()?;
        trainer.bundle.epoch = epoch;
        let dir = ckpt_root.join(format!("epoch_{epoch:03}"));
        trainer.bundle.save(&dir)?;
        outcome.epoch_checkpoints.push(dir.clone());
        if !validation.is_empty() {
            let rate = detection_success_rate(&trainer.bundle, pair, &validation, cfg.validation_tolerance_px)?;
            log::info!("epoch {epoch}: validation detection success {:.3}", rate);
            outcome.validation.push((epoch, rate));
            if outcome.best.as_ref().is_none_or(|b| rate > b.success_rate) {
                let marker = BestMarker { epoch, step: trainer.bundle.step, success_rate: rate, checkpoint: dir };
                fs::write(out.join(BEST_MARKER_FILE), serde_json::to_vec_pretty(&marker)?)?;
                outcome.best = Some(marker);
            }
        }
        if done {
            break;
        }
    }
    outcome.bundle = trainer.bundle;
    Ok(outcome)
}
