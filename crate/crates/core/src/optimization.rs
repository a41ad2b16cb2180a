//! Gradient-based reconstruction with a mixed on-axis / off-axis loss.
//!
//! Per sensor `s` the loss term is
//! `MSE_s = (1/N) sum_i sum_px (|A_s psi_i|^2 - D_is / w_s)^2`, where `D_is`
//! is the measured frame and `w_s` the sensor's exposure weight. The total is
//! `L = (1 - gamma) * sum_on MSE_s + gamma * sum_off MSE_s`; a sensor is
//! "on-axis" when its window offset is zero.
//!
//! Gradients are returned as `dL/dRe + i dL/dIm` (twice the Wirtinger
//! derivative with respect to the conjugate), computed by the adjoint chain
//! residual -> `A_s^H` -> conjugate probe (or object) product -> scatter-add.

use std::fmt::Write as _;

use ndarray::{s, Array2, Zip};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{exit_values, Dataset, SceneModel};
use crate::grid::{ComplexField, RealField};
use crate::propagation::PropagationPlan;

/// Optimizer hyperparameters and loss schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub gamma_initial: f64,
    pub gamma_final: f64,
    pub gamma_switch_epoch: usize,
    pub optimize_probe: bool,
    pub rng_seed: u64,
    /// Positions per update; `0` means every position in one update.
    pub batch_size: usize,
    /// Standard deviation of seeded complex noise added to the initial object.
    pub init_noise: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            epochs: 40,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            gamma_initial: 0.0,
            gamma_final: 0.5,
            gamma_switch_epoch: 20,
            optimize_probe: false,
            rng_seed: 0,
            batch_size: 0,
            init_noise: 0.0,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::param("learning_rate", "must be > 0"));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::param(name, format!("must lie in (0, 1), got {b}")));
            }
        }
        if !(self.adam_epsilon.is_finite() && self.adam_epsilon > 0.0) {
            return Err(Error::param("adam_epsilon", "must be > 0"));
        }
        check_gamma(self.gamma_initial)?;
        check_gamma(self.gamma_final)?;
        if self.gamma_switch_epoch > self.epochs {
            return Err(Error::param(
                "gamma_switch_epoch",
                format!(
                    "{} exceeds epochs = {}",
                    self.gamma_switch_epoch, self.epochs
                ),
            ));
        }
        if !(self.init_noise.is_finite() && self.init_noise >= 0.0) {
            return Err(Error::param("init_noise", "must be >= 0"));
        }
        Ok(())
    }

    pub fn gamma_at(&self, epoch: usize) -> f64 {
        if epoch < self.gamma_switch_epoch {
            self.gamma_initial
        } else {
            self.gamma_final
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::param(
            "gamma",
            format!("must lie in [0, 1], got {gamma}"),
        ))
    }
}

/// Loss terms for one epoch. Sensors whose loss weight is zero are not
/// evaluated and report `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub gamma: f64,
    pub sensor_mse: Vec<Option<f64>>,
    pub mse_on: Option<f64>,
    pub mse_off: Option<f64>,
    pub loss: f64,
}

/// Tab-separated loss table, one row per epoch.
pub fn loss_table(history: &[LossReport]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.9e}"));
    let mut out = String::from("epoch\tmse_on\tmse_off\tgamma\tloss\n");
    for r in history {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.9e}",
            r.epoch,
            fmt(r.mse_on),
            fmt(r.mse_off),
            r.gamma,
            r.loss
        );
    }
    out
}

/// `(1/N) sum_i sum_px (measured - predicted)^2` over stacks of `N` frames.
pub fn mse(predicted: &[RealField], measured: &[RealField]) -> Result<f64> {
    if predicted.len() != measured.len() {
        return Err(Error::ShapeMismatch {
            expected: (predicted.len(), 1),
            found: (measured.len(), 1),
        });
    }
    if predicted.is_empty() {
        return Err(Error::param("predicted", "empty stack"));
    }
    let mut total = 0.0;
    for (p, m) in predicted.iter().zip(measured) {
        if p.grid().dims() != m.grid().dims() {
            return Err(Error::ShapeMismatch {
                expected: p.grid().dims(),
                found: m.grid().dims(),
            });
        }
        total += Zip::from(p.values())
            .and(m.values())
            .fold(0.0, |acc, &a, &b| acc + (b - a) * (b - a));
    }
    Ok(total / predicted.len() as f64)
}

/// `(1 - gamma) * mse_on + gamma * mse_off`.
pub fn mixed_loss(mse_on: f64, mse_off: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(mixed(mse_on, mse_off, gamma))
}

fn mixed(mse_on: f64, mse_off: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        mse_on
    } else if gamma == 1.0 {
        mse_off
    } else {
        (1.0 - gamma) * mse_on + gamma * mse_off
    }
}

/// Adam moments for a complex parameter array; real and imaginary parts are
/// tracked independently in the corresponding components.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Array2<Complex64>,
    pub v: Array2<Complex64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(dims: (usize, usize)) -> Self {
        OptimizerState {
            m: Array2::zeros(dims),
            v: Array2::zeros(dims),
            t: 0,
        }
    }
}

/// Adam step size and moment decay rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl From<&ReconstructionConfig> for AdamParams {
    fn from(c: &ReconstructionConfig) -> Self {
        AdamParams {
            learning_rate: c.learning_rate,
            beta1: c.adam_beta1,
            beta2: c.adam_beta2,
            epsilon: c.adam_epsilon,
        }
    }
}

/// One bias-corrected Adam update, applied to real and imaginary parts
/// separately.
pub fn adam_step(
    params: &mut Array2<Complex64>,
    grads: &Array2<Complex64>,
    state: &mut OptimizerState,
    adam: &AdamParams,
) -> Result<()> {
    if params.dim() != grads.dim() || params.dim() != state.m.dim() {
        return Err(Error::ShapeMismatch {
            expected: params.dim(),
            found: grads.dim(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (adam.beta1, adam.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let (lr, eps) = (adam.learning_rate, adam.epsilon);
    let update = |m: &mut f64, v: &mut f64, g: f64| -> f64 {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        lr * (*m / bc1) / ((*v / bc2).sqrt() + eps)
    };
    Zip::from(params)
        .and(grads)
        .and(&mut state.m)
        .and(&mut state.v)
        .for_each(|p, g, m, v| {
            let dr = update(&mut m.re, &mut v.re, g.re);
            let di = update(&mut m.im, &mut v.im, g.im);
            p.re -= dr;
            p.im -= di;
        });
    Ok(())
}

/// Gradients of the mixed loss.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub report: LossReport,
    pub object: ComplexField,
    pub probe: Option<ComplexField>,
}

/// Precomputed plans and loss weights for repeated loss/gradient evaluation.
pub struct LossEvaluator<'a> {
    dataset: &'a Dataset,
    plans: Vec<PropagationPlan>,
    origins: Vec<(usize, usize)>,
}

struct PositionTerms {
    squared: Vec<f64>,
    chi: Array2<Complex64>,
}

impl<'a> LossEvaluator<'a> {
    pub fn new(scene: &SceneModel, dataset: &'a Dataset) -> Result<Self> {
        check_geometry(scene, dataset)?;
        let origins = (0..scene.position_count())
            .map(|i| scene.crop_origin(i))
            .collect::<Result<Vec<_>>>()?;
        Ok(LossEvaluator {
            dataset,
            plans: scene.plans()?,
            origins,
        })
    }

    fn coefficients(&self, gamma: f64) -> Vec<f64> {
        self.dataset
            .sensors
            .iter()
            .map(|s| if s.is_on_axis() { 1.0 - gamma } else { gamma })
            .collect()
    }

    fn position_terms(
        &self,
        object: &Array2<Complex64>,
        probe: &Array2<Complex64>,
        index: usize,
        coeffs: &[f64],
        scale: f64,
    ) -> PositionTerms {
        let psi = exit_values(object, probe, self.origins[index]);
        let mut chi = Array2::<Complex64>::zeros(psi.dim());
        let mut squared = vec![0.0; coeffs.len()];
        for (k, plan) in self.plans.iter().enumerate() {
            if coeffs[k] == 0.0 {
                continue;
            }
            let w = self.dataset.sensors[k].exposure_weight;
            let measured = self.dataset.frame(index, k);
            let mut field = plan.forward_values(&psi);
            let factor = 4.0 * coeffs[k] * scale;
            let mut sq = 0.0;
            Zip::from(&mut field).and(measured).for_each(|f, &d| {
                let r = f.norm_sqr() - d / w;
                sq += r * r;
                *f *= factor * r;
            });
            squared[k] = sq;
            chi += &plan.adjoint_values(&field);
        }
        PositionTerms { squared, chi }
    }

    /// Squared-residual sums per sensor and gradients for a subset of
    /// positions. `scale` multiplies every gradient contribution.
    fn evaluate(
        &self,
        object: &Array2<Complex64>,
        probe: &Array2<Complex64>,
        positions: &[usize],
        gamma: f64,
        scale: f64,
        want_probe: bool,
    ) -> (Vec<f64>, Array2<Complex64>, Option<Array2<Complex64>>) {
        let coeffs = self.coefficients(gamma);
        let terms: Vec<PositionTerms> = positions
            .par_iter()
            .map(|&i| self.position_terms(object, probe, i, &coeffs, scale))
            .collect();
        let (pny, pnx) = probe.dim();
        let mut squared = vec![0.0; coeffs.len()];
        let mut g_obj = Array2::<Complex64>::zeros(object.dim());
        let mut g_probe = want_probe.then(|| Array2::<Complex64>::zeros(probe.dim()));
        for (&i, t) in positions.iter().zip(&terms) {
            for (acc, v) in squared.iter_mut().zip(&t.squared) {
                *acc += v;
            }
            let (oy, ox) = self.origins[i];
            let mut window = g_obj.slice_mut(s![oy..oy + pny, ox..ox + pnx]);
            Zip::from(&mut window)
                .and(&t.chi)
                .and(probe)
                .for_each(|g, c, p| *g += c * p.conj());
            if let Some(gp) = g_probe.as_mut() {
                let crop = object.slice(s![oy..oy + pny, ox..ox + pnx]);
                Zip::from(gp)
                    .and(&t.chi)
                    .and(&crop)
                    .for_each(|g, c, o| *g += c * o.conj());
            }
        }
        (squared, g_obj, g_probe)
    }

    fn report(&self, epoch: usize, gamma: f64, squared: &[f64], n: usize) -> LossReport {
        let coeffs = self.coefficients(gamma);
        let sensor_mse: Vec<Option<f64>> = squared
            .iter()
            .zip(&coeffs)
            .map(|(&s, &c)| (c != 0.0).then_some(s / n as f64))
            .collect();
        let group = |on: bool| -> Option<f64> {
            let vals: Vec<f64> = self
                .dataset
                .sensors
                .iter()
                .zip(&sensor_mse)
                .filter(|(s, _)| s.is_on_axis() == on)
                .filter_map(|(_, m)| *m)
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum())
        };
        let (mse_on, mse_off) = (group(true), group(false));
        LossReport {
            epoch,
            gamma,
            sensor_mse,
            mse_on,
            mse_off,
            loss: mixed(mse_on.unwrap_or(0.0), mse_off.unwrap_or(0.0), gamma),
        }
    }
}

fn check_geometry(scene: &SceneModel, dataset: &Dataset) -> Result<()> {
    if scene.sensors != dataset.sensors {
        return Err(Error::param(
            "dataset",
            "sensor list differs from the scene",
        ));
    }
    if scene.position_count() != dataset.position_count() {
        return Err(Error::param(
            "dataset",
            format!(
                "{} positions in the dataset, {} in the scene",
                dataset.position_count(),
                scene.position_count()
            ),
        ));
    }
    if !dataset.grid.same_sampling(scene.probe.grid())
        || dataset.grid.dims() != scene.probe.grid().dims()
    {
        return Err(Error::param("dataset", "probe grid differs from the scene"));
    }
    Ok(())
}

/// Mixed loss and its gradients for `scene` against `dataset`.
pub fn loss_gradient(
    scene: &SceneModel,
    dataset: &Dataset,
    gamma: f64,
    with_probe: bool,
) -> Result<Gradient> {
    check_gamma(gamma)?;
    let eval = LossEvaluator::new(scene, dataset)?;
    let n = dataset.position_count();
    let all: Vec<usize> = (0..n).collect();
    let (squared, g_obj, g_probe) = eval.evaluate(
        scene.object.values(),
        scene.probe.values(),
        &all,
        gamma,
        1.0 / n as f64,
        with_probe,
    );
    Ok(Gradient {
        report: eval.report(0, gamma, &squared, n),
        object: ComplexField::from_parts_unchecked(*scene.object.grid(), g_obj),
        probe: g_probe.map(|g| ComplexField::from_parts_unchecked(*scene.probe.grid(), g)),
    })
}

/// Result of [`reconstruct`].
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub object: ComplexField,
    pub probe: ComplexField,
    pub history: Vec<LossReport>,
}

/// Adam minimization of the mixed loss starting from `initial`.
///
/// Each epoch visits every position once, in batches of `batch_size`
/// (seeded shuffle) or all together when `batch_size` is 0. The recorded
/// loss for an epoch accumulates the residuals seen before each update.
pub fn reconstruct(
    dataset: &Dataset,
    initial: &SceneModel,
    config: &ReconstructionConfig,
) -> Result<Reconstruction> {
    config.validate()?;
    let eval = LossEvaluator::new(initial, dataset)?;
    let adam = AdamParams::from(config);
    let n = dataset.position_count();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut object = initial.object.values().clone();
    if config.init_noise > 0.0 {
        for v in object.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *v += config.init_noise * Complex64::new(re, im);
        }
    }
    let mut probe = initial.probe.values().clone();
    let mut obj_state = OptimizerState::new(object.dim());
    let mut probe_state = OptimizerState::new(probe.dim());
    let mut history = Vec::with_capacity(config.epochs);
    let batch = if config.batch_size == 0 {
        n
    } else {
        config.batch_size.min(n)
    };
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        let gamma = config.gamma_at(epoch);
        if batch < n {
            order.shuffle(&mut rng);
        }
        let mut squared = vec![0.0; dataset.sensors.len()];
        for chunk in order.chunks(batch) {
            let (sq, g_obj, g_probe) = eval.evaluate(
                &object,
                &probe,
                chunk,
                gamma,
                1.0 / n as f64,
                config.optimize_probe,
            );
            for (a, b) in squared.iter_mut().zip(&sq) {
                *a += b;
            }
            if !sq.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam_step(&mut object, &g_obj, &mut obj_state, &adam)?;
            if let Some(gp) = g_probe {
                adam_step(&mut probe, &gp, &mut probe_state, &adam)?;
            }
        }
        let report = eval.report(epoch, gamma, &squared, n);
        if !report.loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log::info!(
            "epoch {epoch}: gamma {gamma} loss {:.6e} (on {:?}, off {:?})",
            report.loss,
            report.mse_on,
            report.mse_off
        );
        history.push(report);
    }
    Ok(Reconstruction {
        object: ComplexField::new(*initial.object.grid(), object)?,
        probe: ComplexField::new(*initial.probe.grid(), probe)?,
        history,
    })
}
