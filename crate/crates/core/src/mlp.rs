//! One-hidden-layer tanh perceptron and its Levenberg-Marquardt training.
//!
//! The model is
//!
//! ```text
//! y = w0 + sum_j v_j * tanh(b_j + sum_i w_ji * x_i)
//! ```
//!
//! with an optional sigmoid applied to the whole affine output. A network
//! with zero hidden units is the multilinear regression `w0 + sum_i c_i x_i`.
//!
//! Weights live in one flat vector in this order: hidden biases `b_j`,
//! hidden input weights `w_ji` (row-major, one row per hidden unit), output
//! bias `w0`, output weights `v_j`, and for zero hidden units the linear
//! coefficients `c_i`. A boolean mask of the same length marks pruned
//! weights, which are held at exactly zero.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Identity,
    Sigmoid,
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^u)` without overflow.
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    inputs: usize,
    hidden: usize,
    output_kind: OutputKind,
    weights: Vec<f64>,
    mask: Vec<bool>,
}

impl Network {
    pub fn param_count(inputs: usize, hidden: usize) -> usize {
        hidden * (inputs + 2) + 1 + if hidden == 0 { inputs } else { 0 }
    }

    /// All weights zero and active.
    pub fn zeros(inputs: usize, hidden: usize, output_kind: OutputKind) -> Self {
        let len = Self::param_count(inputs, hidden);
        Network {
            inputs,
            hidden,
            output_kind,
            weights: vec![0.0; len],
            mask: vec![true; len],
        }
    }

    pub fn from_parts(
        inputs: usize,
        hidden: usize,
        output_kind: OutputKind,
        weights: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let net = Network {
            inputs,
            hidden,
            output_kind,
            weights,
            mask,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks lengths and that masked weights are zero.
    pub fn validate(&self) -> Result<()> {
        let len = Self::param_count(self.inputs, self.hidden);
        for got in [self.weights.len(), self.mask.len()] {
            if got != len {
                return Err(Error::DimensionMismatch { expected: len, got });
            }
        }
        if self
            .weights
            .iter()
            .zip(&self.mask)
            .any(|(w, m)| !m && *w != 0.0 || !w.is_finite())
        {
            return Err(Error::InvalidConfig(
                "masked weights must be zero and all weights finite".into(),
            ));
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn output_kind(&self) -> OutputKind {
        self.output_kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn hidden_bias_index(&self, j: usize) -> usize {
        j
    }

    pub fn input_weight_index(&self, j: usize, i: usize) -> usize {
        self.hidden + j * self.inputs + i
    }

    pub fn output_bias_index(&self) -> usize {
        self.hidden * (self.inputs + 1)
    }

    pub fn output_weight_index(&self, j: usize) -> usize {
        self.output_bias_index() + 1 + j
    }

    /// Direct input coefficient; only networks without hidden units have them.
    pub fn linear_weight_index(&self, i: usize) -> usize {
        debug_assert_eq!(self.hidden, 0);
        1 + i
    }

    pub fn set_weight(&mut self, idx: usize, value: f64) {
        if self.mask[idx] {
            self.weights[idx] = value;
        }
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    /// Mask a weight and set it to zero.
    pub fn prune(&mut self, idx: usize) {
        self.mask[idx] = false;
        self.weights[idx] = 0.0;
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&k| self.mask[k]).collect()
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn active_weights(&self) -> Vec<f64> {
        self.active_indices().iter().map(|&k| self.weights[k]).collect()
    }

    /// Copy the pruning pattern of a network with the same dimensions.
    pub fn apply_mask_of(&mut self, template: &Network) -> Result<()> {
        if template.mask.len() != self.mask.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mask.len(),
                got: template.mask.len(),
            });
        }
        for (k, keep) in template.mask.iter().enumerate() {
            if !keep {
                self.prune(k);
            }
        }
        Ok(())
    }

    pub fn with_output_kind(mut self, kind: OutputKind) -> Self {
        self.output_kind = kind;
        self
    }

    pub fn hidden_unit_alive(&self, j: usize) -> bool {
        self.mask[self.output_weight_index(j)]
    }

    pub fn alive_hidden_units(&self) -> usize {
        (0..self.hidden).filter(|&j| self.hidden_unit_alive(j)).count()
    }

    pub fn remove_hidden_unit(&mut self, j: usize) {
        self.prune(self.hidden_bias_index(j));
        for i in 0..self.inputs {
            self.prune(self.input_weight_index(j, i));
        }
        self.prune(self.output_weight_index(j));
    }

    /// An input is eliminated once no live path from it reaches the output.
    pub fn input_eliminated(&self, i: usize) -> bool {
        if self.hidden == 0 {
            return !self.mask[self.linear_weight_index(i)];
        }
        (0..self.hidden).all(|j| !self.mask[self.input_weight_index(j, i)] || !self.hidden_unit_alive(j))
    }

    pub fn retained_inputs(&self) -> Vec<usize> {
        (0..self.inputs).filter(|&i| !self.input_eliminated(i)).collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.inputs {
            return Err(Error::DimensionMismatch {
                expected: self.inputs,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn affine_unchecked(&self, x: &[f64]) -> f64 {
        let (n, p, w) = (self.hidden, self.inputs, &self.weights);
        let ob = self.output_bias_index();
        let mut u = w[ob];
        if n == 0 {
            u += w[1..=p].iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>();
        }
        for j in 0..n {
            let row = &w[n + j * p..n + (j + 1) * p];
            let h = w[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            u += w[ob + 1 + j] * h.tanh();
        }
        u
    }

    /// Affine output `w0 + sum_j v_j tanh(...)`, before any output function.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.affine_unchecked(x))
    }

    /// Model output: the affine output, passed through the sigmoid for classifiers.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let u = self.affine_unchecked(x);
        match self.output_kind {
            OutputKind::Identity => u,
            OutputKind::Sigmoid => sigmoid(u),
        }
    }

    /// Gradient of the affine output with respect to every weight
    /// (masked ones included), written into `out`. Returns the affine output.
    fn affine_gradient_full(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let (n, p, w) = (self.hidden, self.inputs, &self.weights);
        let ob = self.output_bias_index();
        out[ob] = 1.0;
        let mut u = w[ob];
        if n == 0 {
            for i in 0..p {
                out[1 + i] = x[i];
                u += w[1 + i] * x[i];
            }
        }
        for j in 0..n {
            let row = &w[n + j * p..n + (j + 1) * p];
            let h = w[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            let t = h.tanh();
            let v = w[ob + 1 + j];
            u += v * t;
            out[ob + 1 + j] = t;
            let d = v * (1.0 - t * t);
            out[j] = d;
            for i in 0..p {
                out[n + j * p + i] = d * x[i];
            }
        }
        u
    }

    /// Gradient of the model output with respect to the active weights, in
    /// `active_indices` order.
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut full = vec![0.0; self.weights.len()];
        let u = self.affine_gradient_full(x, &mut full);
        let scale = self.output_scale(u);
        Ok(self
            .active_indices()
            .into_iter()
            .map(|k| scale * full[k])
            .collect())
    }

    fn output_scale(&self, u: f64) -> f64 {
        match self.output_kind {
            OutputKind::Identity => 1.0,
            OutputKind::Sigmoid => {
                let s = sigmoid(u);
                s * (1.0 - s)
            }
        }
    }

    /// Stacked output gradients over the rows of `x`, one row per example.
    pub fn jacobian_matrix(&self, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let active = self.active_indices();
        let q = active.len();
        let mut full = vec![0.0; self.weights.len()];
        let mut buf = Vec::with_capacity(rows.len() * q);
        for x in rows {
            self.check_dim(x)?;
            let u = self.affine_gradient_full(x, &mut full);
            let scale = self.output_scale(u);
            buf.extend(active.iter().map(|&k| scale * full[k]));
        }
        Ok(DMatrix::from_row_slice(rows.len(), q, &buf))
    }

    fn set_active_from(&mut self, active: &[usize], values: &DVector<f64>) {
        for (k, v) in active.iter().zip(values.iter()) {
            self.weights[*k] = *v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// Half the sum of squared residuals.
    #[default]
    SquaredError,
    /// Bernoulli negative log-likelihood; sigmoid outputs only.
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iterations: 500,
            initial_damping: 1e-2,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            tolerance: 1e-9,
            restarts: 1,
            seed: 0,
            loss: Loss::SquaredError,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.max_iterations > 0
            && self.initial_damping > 0.0
            && self.damping_increase > 1.0
            && self.damping_decrease > 1.0
            && self.tolerance > 0.0
            && self.restarts >= 1;
        if !positive {
            return Err(Error::InvalidConfig(format!("bad training configuration: {self:?}")));
        }
        Ok(())
    }
}

/// Damping above this means no step can lower the cost at working precision.
const MAX_DAMPING: f64 = 1e16;

/// Training cost of `net` on `train` under `loss`.
pub fn cost(net: &Network, train: &FeatureTable, loss: Loss) -> f64 {
    match loss {
        Loss::SquaredError => {
            0.5 * train
                .rows
                .iter()
                .zip(&train.targets)
                .map(|(x, y)| {
                    let r = y - net.predict_unchecked(x);
                    r * r
                })
                .sum::<f64>()
        }
        Loss::CrossEntropy => train
            .rows
            .iter()
            .zip(&train.targets)
            .map(|(x, t)| {
                let u = net.affine_unchecked(x);
                // -[t ln s(u) + (1-t) ln(1 - s(u))]
                t * softplus(-u) + (1.0 - t) * softplus(u)
            })
            .sum(),
    }
}

pub fn mse(net: &Network, train: &FeatureTable) -> f64 {
    2.0 * cost(net, train, Loss::SquaredError) / train.len() as f64
}

/// Gauss-Newton normal equations `(J^T J, J^T r)` over the active weights.
fn normal_equations(
    net: &Network,
    active: &[usize],
    train: &FeatureTable,
    loss: Loss,
) -> (DMatrix<f64>, DVector<f64>) {
    let q = active.len();
    let n = train.len();
    let mut full = vec![0.0; net.weights.len()];
    let mut jac = Vec::with_capacity(n * q);
    let mut res = Vec::with_capacity(n);
    for (x, t) in train.rows.iter().zip(&train.targets) {
        let u = net.affine_gradient_full(x, &mut full);
        let (scale, r) = match (net.output_kind, loss) {
            (OutputKind::Identity, _) => (1.0, t - u),
            (OutputKind::Sigmoid, Loss::SquaredError) => {
                let s = sigmoid(u);
                (s * (1.0 - s), t - s)
            }
            (OutputKind::Sigmoid, Loss::CrossEntropy) => {
                // Fisher scoring written as weighted least squares.
                let s = sigmoid(u);
                let w = (s * (1.0 - s)).max(1e-12);
                let sw = w.sqrt();
                (sw, (t - s) / sw)
            }
        };
        jac.extend(active.iter().map(|&k| scale * full[k]));
        res.push(r);
    }
    let j = DMatrix::from_row_slice(n, q, &jac);
    let r = DVector::from_vec(res);
    (j.tr_mul(&j), j.tr_mul(&r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: Network,
    /// Cost at the start and after every accepted step.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
}

impl TrainOutcome {
    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("trace holds the initial cost")
    }
}

/// Levenberg-Marquardt on the active weights, starting from `net`.
pub fn train_lm(net: &Network, train: &FeatureTable, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    if train.width() != net.inputs {
        return Err(Error::DimensionMismatch {
            expected: net.inputs,
            got: train.width(),
        });
    }
    if cfg.loss == Loss::CrossEntropy && net.output_kind != OutputKind::Sigmoid {
        return Err(Error::WrongOutputKind);
    }
    let mut work = net.clone();
    let mut current = cost(&work, train, cfg.loss);
    if !current.is_finite() {
        return Err(Error::NonFiniteCost);
    }
    let mut trace = vec![current];
    let active = work.active_indices();
    if active.is_empty() || current == 0.0 {
        return Ok(TrainOutcome {
            network: work,
            cost_trace: trace,
            iterations: 0,
        });
    }

    let mut theta = DVector::from_iterator(active.len(), active.iter().map(|&k| work.weights[k]));
    let (mut jtj, mut jtr) = normal_equations(&work, &active, train, cfg.loss);
    let mut damping = cfg.initial_damping;
    let mut trial = work.clone();
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut system = jtj.clone();
        for k in 0..active.len() {
            system[(k, k)] += damping;
        }
        let Some(step) = linalg::solve_spd(system, &jtr) else {
            damping *= cfg.damping_increase;
            if damping > MAX_DAMPING {
                break;
            }
            continue;
        };
        let candidate = &theta + step;
        trial.set_active_from(&active, &candidate);
        let next = cost(&trial, train, cfg.loss);
        if next.is_finite() && next < current {
            let relative = (current - next) / current;
            current = next;
            theta = candidate;
            work.set_active_from(&active, &theta);
            trace.push(current);
            damping = (damping / cfg.damping_decrease).max(f64::MIN_POSITIVE);
            if relative < cfg.tolerance || current == 0.0 {
                break;
            }
            (jtj, jtr) = normal_equations(&work, &active, train, cfg.loss);
        } else {
            damping *= cfg.damping_increase;
            if damping > MAX_DAMPING {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        network: work,
        cost_trace: trace,
        iterations,
    })
}

/// Start from a least-squares fit of the targets on the inputs.
///
/// Every hidden unit receives the regression slopes as input weights (plus
/// N(0, 0.01^2) noise from `seed` so that units differ) and an output weight
/// of `1/n`; the output bias is the target mean. Without hidden units the
/// network is the regression itself. Sigmoid networks get the same slopes on
/// the logit scale.
pub fn init_from_linear(
    train: &FeatureTable,
    hidden_dim: usize,
    output_kind: OutputKind,
    seed: u64,
) -> Result<Network> {
    let p = train.width();
    let design = linalg::design_with_intercept(&train.rows, p);
    let y = DVector::from_column_slice(&train.targets);
    let beta = linalg::least_squares(&design, &y)?;
    let mean = linalg::mean(&train.targets);
    // Logit-scale slope of the sigmoid at its centre.
    let (gain, bias) = match output_kind {
        OutputKind::Identity => (1.0, mean),
        OutputKind::Sigmoid => {
            let m = mean.clamp(1e-3, 1.0 - 1e-3);
            (4.0, (m / (1.0 - m)).ln())
        }
    };
    let mut net = Network::zeros(p, hidden_dim, output_kind);
    let ob = net.output_bias_index();
    if hidden_dim == 0 {
        net.weights[ob] = match output_kind {
            OutputKind::Identity => beta[0],
            OutputKind::Sigmoid => bias,
        };
        for i in 0..p {
            net.weights[1 + i] = gain * beta[1 + i];
        }
        return Ok(net);
    }
    let noise = Normal::new(0.0, 0.01).expect("valid stdev");
    let mut rng = rng::stream(seed, 0);
    net.weights[ob] = bias;
    for j in 0..hidden_dim {
        net.weights[j] = noise.sample(&mut rng);
        for i in 0..p {
            let k = net.input_weight_index(j, i);
            net.weights[k] = beta[1 + i] + noise.sample(&mut rng);
        }
        let k = net.output_weight_index(j);
        net.weights[k] = gain / hidden_dim as f64;
    }
    Ok(net)
}

/// Every active weight drawn uniformly from [-0.5, 0.5].
pub fn random_init<R: Rng>(template: &Network, rng: &mut R) -> Network {
    let mut net = template.clone();
    for k in 0..net.weights.len() {
        let w: f64 = rng.random_range(-0.5..=0.5);
        if net.mask[k] {
            net.weights[k] = w;
        }
    }
    net
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultistartOutcome {
    pub network: Network,
    pub cost: f64,
    /// Index of the winning restart.
    pub restart: usize,
    /// Final cost per restart; `None` for restarts that diverged.
    pub restart_costs: Vec<Option<f64>>,
}

pub fn multistart(
    train: &FeatureTable,
    hidden_dim: usize,
    cfg: &TrainConfig,
) -> Result<MultistartOutcome> {
    let template = Network::zeros(train.width(), hidden_dim, OutputKind::Identity);
    multistart_from(&template, train, cfg)
}

/// Best of `cfg.restarts` trainings sharing the dimensions, output kind and
/// mask of `template`.
///
/// Restart 0 starts from [`init_from_linear`], the others from
/// [`random_init`] on their own random stream. Restarts may run on any
/// number of threads; the winner is the lowest final cost, ties going to the
/// lower restart index.
pub fn multistart_from(
    template: &Network,
    train: &FeatureTable,
    cfg: &TrainConfig,
) -> Result<MultistartOutcome> {
    cfg.validate()?;
    let mut first = init_from_linear(train, template.hidden, template.output_kind, cfg.seed)?;
    first.apply_mask_of(template)?;
    let mut starts = vec![first];
    for k in 1..cfg.restarts {
        let mut rng = rng::stream(cfg.seed, k as u64);
        starts.push(random_init(template, &mut rng));
    }
    let results: Vec<Result<TrainOutcome>> = starts
        .into_par_iter()
        .map(|net| train_lm(&net, train, cfg))
        .collect();

    let mut restart_costs = Vec::with_capacity(results.len());
    let mut best: Option<(usize, TrainOutcome)> = None;
    for (k, result) in results.into_iter().enumerate() {
        match result {
            Ok(outcome) => {
                let c = outcome.final_cost();
                restart_costs.push(Some(c));
                let better = match &best {
                    None => true,
                    Some((_, b)) => c.total_cmp(&b.final_cost()).is_lt(),
                };
                if better {
                    best = Some((k, outcome));
                }
            }
            Err(Error::NonFiniteCost) => restart_costs.push(None),
            Err(e) => return Err(e),
        }
    }
    let (restart, outcome) = best.ok_or(Error::NoViableRestart)?;
    Ok(MultistartOutcome {
        cost: outcome.final_cost(),
        network: outcome.network,
        restart,
        restart_costs,
    })
}
