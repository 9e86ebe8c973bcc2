//! Training loop: each iteration draws one of the K selected views and a
//! batch of its pixels (half by local entropy, half uniform), renders them,
//! and takes one Adam step on the mean squared color error.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{check_batch, local_entropy_map, rgb_to_gray, to_distribution, RaySampler, DEFAULT_BINS, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldParams};
use crate::geometry::{camera_ray, Ray, DEFAULT_GRID_RESOLUTION};
use crate::io::{MetricsRow, SceneBundle};
use crate::metrics::psnr;
use crate::real::Real;
use crate::render::{render_batch, render_image, RenderConfig};
use crate::selection::{CoverageSolver, ViewPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    /// Coverage set, then baseline diversity.
    Keynerf,
    /// K views drawn uniformly without replacement; the control arm.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Number of training views.
    pub k: usize,
    /// Rays per iteration.
    pub batch: usize,
    pub n_iter: usize,
    /// Initial learning rate.
    pub lr: f64,
    /// The learning rate falls by 10× every this many iterations; `None` uses `n_iter`.
    pub lr_decay_steps: Option<usize>,
    pub seed: u64,
    pub log_every: usize,
    /// Held-out PSNR cadence; 0 evaluates only after the last iteration.
    pub eval_every: usize,
    /// Entropy-weighted pixel sampling; off draws every pixel uniformly.
    pub entropy: bool,
    pub selection: SelectionMethod,
    pub grid_resolution: usize,
    pub exact_threshold: usize,
    pub entropy_window: usize,
    pub entropy_bins: usize,
    pub field: FieldConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 16,
            batch: 1024,
            n_iter: 5000,
            lr: 5e-4,
            lr_decay_steps: None,
            seed: 0,
            log_every: 100,
            eval_every: 0,
            entropy: true,
            selection: SelectionMethod::Keynerf,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            exact_threshold: CoverageSolver::default().exact_threshold,
            entropy_window: DEFAULT_WINDOW,
            entropy_bins: DEFAULT_BINS,
            field: FieldConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        check_batch(self.batch)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.lr_decay_steps == Some(0) || self.log_every == 0 {
            return Err(Error::invalid("lr_decay_steps and log_every must be positive"));
        }
        self.field.validate()
    }

    pub fn learning_rate(&self, iteration: usize) -> f64 {
        let steps = self.lr_decay_steps.unwrap_or(self.n_iter).max(1);
        self.lr * 0.1f64.powf(iteration as f64 / steps as f64)
    }
}

/// Adam with bias correction; moments are kept in the parameter precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl<T: Real> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64) {
        assert!(params.len() == self.m.len() && grads.len() == self.m.len());
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i].f64();
            let m = ADAM_BETA1 * self.m[i].f64() + (1.0 - ADAM_BETA1) * g;
            let v = ADAM_BETA2 * self.v[i].f64() + (1.0 - ADAM_BETA2) * g * g;
            self.m[i] = T::of(m);
            self.v[i] = T::of(v);
            let update = lr * (m / c1) / ((v / c2).sqrt() + ADAM_EPS);
            params[i] = T::of(params[i].f64() - update);
        }
    }
}

/// Mean over rays and channels of the squared error, and its gradient with
/// respect to `pred`.
pub fn mse_loss(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::invalid(format!("mse over {} predictions and {} targets", pred.len(), gt.len())));
    }
    let count = (3 * pred.len()) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            [0, 1, 2].map(|i| {
                let d = p[i] - g[i];
                loss += d * d;
                2.0 * d / count
            })
        })
        .collect();
    Ok((loss / count, grad))
}

/// One iteration's draw: a position in the selected view list and pixel indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub view: usize,
    pub pixels: Vec<usize>,
}

/// Picks one view uniformly, then `batch` pixels of it.
pub fn make_batch<R: Rng + ?Sized>(samplers: &[RaySampler], batch: usize, entropy: bool, rng: &mut R) -> Result<Batch> {
    if samplers.is_empty() {
        return Err(Error::invalid("no views selected"));
    }
    check_batch(batch)?;
    let view = rng.random_range(0..samplers.len());
    let pixels = if entropy {
        samplers[view].sample(batch, rng)?
    } else {
        let n = samplers[view].n_pixels();
        (0..batch).map(|_| rng.random_range(0..n)).collect()
    };
    Ok(Batch { view, pixels })
}

#[derive(Debug, Clone)]
pub struct TrainState<T = f32> {
    pub iteration: usize,
    pub params: FieldParams<T>,
    pub optimizer: Adam<T>,
    /// Batch loss of every iteration so far.
    pub losses: Vec<f64>,
    pub rng: ChaCha8Rng,
}

impl<T: Real> TrainState<T> {
    pub fn new(params: FieldParams<T>, seed: u64) -> Self {
        let n = params.len();
        Self { iteration: 0, params, optimizer: Adam::new(n), losses: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

/// Renders `rays` with stratified samples, backpropagates the MSE against
/// `gt` and applies one Adam update. Returns the batch loss.
pub fn train_step<T: Real>(
    state: &mut TrainState<T>,
    rays: &[Ray],
    gt: &[[f64; 3]],
    cfg: &TrainConfig,
    render: &RenderConfig,
) -> Result<f64> {
    let render = RenderConfig { stratified: true, ..*render };
    let seed = state.rng.next_u64();
    let (out, tape) = render_batch(&state.params, rays, &render, seed)?;
    let pred: Vec<[f64; 3]> = out.iter().map(|r| r.rgb).collect();
    let (loss, d_pred) = mse_loss(&pred, gt)?;
    if !loss.is_finite() {
        return Err(Error::Diverged { iteration: state.iteration, last_loss: state.losses.last().copied() });
    }
    let grads = tape.backward(&state.params, &d_pred)?;
    if grads.data.iter().any(|g| !g.f64().is_finite()) {
        return Err(Error::Diverged { iteration: state.iteration, last_loss: Some(loss) });
    }
    let lr = cfg.learning_rate(state.iteration);
    state.optimizer.step(&mut state.params.data, &grads.data, lr);
    state.iteration += 1;
    state.losses.push(loss);
    Ok(loss)
}

/// Views used for training, in selection order.
pub fn choose_views(scene: &SceneBundle, cfg: &TrainConfig) -> Result<Vec<usize>> {
    let n = scene.len();
    if cfg.k > n {
        return Err(Error::invalid(format!("K = {} exceeds the {n} available views", cfg.k)));
    }
    match cfg.selection {
        SelectionMethod::Keynerf => {
            let grid = scene.grid(cfg.grid_resolution)?;
            let solver = CoverageSolver { exact_threshold: cfg.exact_threshold };
            ViewPlan::compute(&scene.cameras, &grid, scene.depth_range(), solver)?.take(cfg.k)
        }
        SelectionMethod::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1);
            Ok(rand::seq::index::sample(&mut rng, n, cfg.k).into_vec())
        }
    }
}

/// Entropy-based samplers for the given views, computed once up front.
pub fn view_samplers(scene: &SceneBundle, views: &[usize], window: usize, bins: usize) -> Result<Vec<RaySampler>> {
    views
        .par_iter()
        .map(|&v| {
            let em = local_entropy_map(&rgb_to_gray(&scene.images[v]), window, bins)?;
            RaySampler::new(&to_distribution(&em, 0.0))
        })
        .collect()
}

/// Mean PSNR of full-frame renders against the given views.
pub fn evaluate<T: Real>(params: &FieldParams<T>, scene: &SceneBundle, render: &RenderConfig) -> Result<f64> {
    if scene.is_empty() {
        return Err(Error::invalid("no evaluation views"));
    }
    let render = RenderConfig { background: scene.options.background, t_near: scene.options.t_near, t_far: scene.options.t_far, ..*render };
    let mut total = 0.0;
    for (cam, img) in scene.cameras.iter().zip(&scene.images) {
        total += psnr(&render_image(params, cam, &render)?, img)?;
    }
    Ok(total / scene.len() as f64)
}

/// A configured training run over one scene.
pub struct Trainer<'a> {
    scene: &'a SceneBundle,
    cfg: TrainConfig,
    render: RenderConfig,
    views: Vec<usize>,
    samplers: Vec<RaySampler>,
    pub state: TrainState<f32>,
}

impl<'a> Trainer<'a> {
    /// Selects views, caches their pixel distributions and initializes the field
    /// from `cfg.seed`. Ray bounds and background come from the scene.
    pub fn new(scene: &'a SceneBundle, cfg: TrainConfig, render: RenderConfig) -> Result<Self> {
        cfg.validate()?;
        let render = RenderConfig {
            background: scene.options.background,
            t_near: scene.options.t_near,
            t_far: scene.options.t_far,
            ..render
        };
        render.validate()?;
        let views = choose_views(scene, &cfg)?;
        let samplers = view_samplers(scene, &views, cfg.entropy_window, cfg.entropy_bins)?;
        let params = FieldParams::init(cfg.field, cfg.seed)?;
        let mut state = TrainState::new(params, cfg.seed);
        state.rng.set_stream(2);
        Ok(Self { scene, cfg, render, views, samplers, state })
    }

    pub fn views(&self) -> &[usize] {
        &self.views
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn render_config(&self) -> &RenderConfig {
        &self.render
    }

    pub fn step(&mut self) -> Result<f64> {
        let batch = make_batch(&self.samplers, self.cfg.batch, self.cfg.entropy, &mut self.state.rng)?;
        let idx = self.views[batch.view];
        let (cam, img) = (&self.scene.cameras[idx], &self.scene.images[idx]);
        let w = img.width;
        let mut rays = Vec::with_capacity(batch.pixels.len());
        let mut gt = Vec::with_capacity(batch.pixels.len());
        for &p in &batch.pixels {
            rays.push(camera_ray(cam, (p % w) as f64, (p / w) as f64, self.render.t_near, self.render.t_far)?);
            gt.push(img.pixels[p]);
        }
        train_step(&mut self.state, &rays, &gt, &self.cfg, &self.render)
    }

    /// Runs until `cfg.n_iter` iterations are done. A row is logged every
    /// `log_every` iterations and after the last one, holding the mean batch
    /// loss since the previous row; PSNR on `eval` is added at the eval cadence
    /// and on the final row.
    pub fn run(&mut self, eval: Option<&SceneBundle>, mut on_row: impl FnMut(&MetricsRow)) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        let mut since = self.state.iteration;
        while self.state.iteration < self.cfg.n_iter {
            self.step()?;
            let it = self.state.iteration;
            let last = it == self.cfg.n_iter;
            let eval_now = eval.is_some() && (last || (self.cfg.eval_every > 0 && it % self.cfg.eval_every == 0));
            if it % self.cfg.log_every == 0 || last || eval_now {
                let window = &self.state.losses[since..it];
                let loss = window.iter().sum::<f64>() / window.len() as f64;
                let psnr = match eval {
                    Some(scene) if eval_now => Some(evaluate(&self.state.params, scene, &self.render)?),
                    _ => None,
                };
                let row = MetricsRow { iteration: it, loss, psnr };
                on_row(&row);
                rows.push(row);
                since = it;
            }
        }
        Ok(rows)
    }
}

/// Trains from scratch and returns the final state and the metrics log.
pub fn train(
    scene: &SceneBundle,
    eval: Option<&SceneBundle>,
    cfg: TrainConfig,
    render: RenderConfig,
) -> Result<(TrainState<f32>, Vec<MetricsRow>)> {
    let mut trainer = Trainer::new(scene, cfg, render)?;
    let rows = trainer.run(eval, |_| {})?;
    Ok((trainer.state, rows))
}

/// Iterations needed to draw as many rays as the selected views have pixels.
pub fn iterations_per_epoch(k: usize, pixels_per_view: usize, batch: usize) -> usize {
    (k * pixels_per_view).div_ceil(batch)
}
