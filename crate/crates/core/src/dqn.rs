//! Deep Q-learning for the reduced accept/assign decision.
//!
//! The network maps the normalized state features to one Q-value per reduced
//! decision (reject, vehicle 1, ..., vehicle P). Training is plain deep
//! Q-learning: epsilon-greedy exploration restricted to feasible decisions,
//! uniform experience replay, and a periodically synced target network.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{sample_day, DayScenario, Geography, ServiceParams};
use crate::intraday::{extract_features, run_day_with, Decision, DecisionPoint, FeatureScaler};
use crate::seeds::{derive_seed, STREAM_TEST_POOL, STREAM_TRAIN_INIT, STREAM_TRAIN_POOL};
use crate::shaping::{sample_training_demands, ShapedDemandLaw};

pub const HIDDEN_UNITS: usize = 50;
/// Loss above which training is considered divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, &b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

/// Feedforward Q-network: ReLU after every layer except the output.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    pub layers: Vec<Dense>,
    pub num_vehicles: usize,
}

impl QNetwork {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], num_vehicles: usize, rng: &mut R) -> Self {
        let mut net = QNetwork::zeros(sizes, num_vehicles);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn zeros(sizes: &[usize], num_vehicles: usize) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        QNetwork {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            num_vehicles,
        }
    }

    /// `features -> 50 -> 50 -> P + 1`.
    pub fn for_problem<R: Rng + ?Sized>(features: usize, num_vehicles: usize, rng: &mut R) -> Self {
        QNetwork::new(
            &[features, HIDDEN_UNITS, HIDDEN_UNITS, num_vehicles + 1],
            num_vehicles,
            rng,
        )
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("nonempty").outputs
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|w| w.is_finite()))
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_len() {
            return Err(Error::Contract(format!(
                "network expects {} features, got {}",
                self.input_len(),
                features.len()
            )));
        }
        Ok(self.activations(features).pop().expect("output layer"))
    }

    /// Q-values without the dimension check of [`QNetwork::forward`].
    pub fn q_values(&self, features: &[f64]) -> Vec<f64> {
        debug_assert_eq!(features.len(), self.input_len());
        self.activations(features).pop().expect("output layer")
    }

    /// Layer-by-layer outputs, starting with the input itself.
    fn activations(&self, features: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(features.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.affine(acts.last().expect("input pushed"), &mut out);
            if k < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        QNetwork::from_text(&std::fs::read_to_string(path)?)
    }

    /// Text format: a header with layer sizes, feature count and fleet size,
    /// then per layer one line per weight row followed by a bias line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sizes = self.sizes();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "sdd-qnetwork 1").unwrap();
        writeln!(s, "features {}", self.input_len()).unwrap();
        writeln!(s, "vehicles {}", self.num_vehicles).unwrap();
        writeln!(
            s,
            "sizes {}",
            sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
        )
        .unwrap();
        for (k, layer) in self.layers.iter().enumerate() {
            writeln!(s, "layer {k} {} {}", layer.outputs, layer.inputs).unwrap();
            for row in layer.weights.chunks(layer.inputs) {
                writeln!(s, "{}", join(row)).unwrap();
            }
            writeln!(s, "bias {}", join(&layer.bias)).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::parse("weight file", detail);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| bad(format!("unexpected end of file, expected {what}")))
        };
        if next("header")?.trim() != "sdd-qnetwork 1" {
            return Err(bad("unknown header".into()));
        }
        let keyed = |line: &str, key: &str| -> Result<Vec<usize>> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(format!("expected `{key}` line, got `{line}`")));
            }
            it.map(|t| t.parse().map_err(|e| bad(format!("{key}: {e}"))))
                .collect()
        };
        let features = keyed(next("features")?, "features")?;
        let vehicles = keyed(next("vehicles")?, "vehicles")?;
        let sizes = keyed(next("sizes")?, "sizes")?;
        if features.len() != 1 || vehicles.len() != 1 || sizes.len() < 2 || sizes[0] != features[0] {
            return Err(bad("inconsistent header".into()));
        }
        let floats = |line: &str| -> Result<Vec<f64>> {
            line.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| bad(format!("`{t}`: {e}"))))
                .collect()
        };
        let mut net = QNetwork::zeros(&sizes, vehicles[0]);
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let head = keyed(next("layer")?, "layer")?;
            if head != [k, layer.outputs, layer.inputs] {
                return Err(bad(format!("layer {k} header mismatch")));
            }
            for o in 0..layer.outputs {
                let row = floats(next("weight row")?)?;
                if row.len() != layer.inputs {
                    return Err(bad(format!("layer {k} row {o} has {} values", row.len())));
                }
                layer.weights[o * layer.inputs..(o + 1) * layer.inputs].copy_from_slice(&row);
            }
            let bias_line = next("bias")?;
            let bias = floats(bias_line.trim_start().strip_prefix("bias").ok_or_else(|| {
                bad(format!("layer {k}: expected bias line"))
            })?)?;
            if bias.len() != layer.outputs {
                return Err(bad(format!("layer {k} bias has {} values", bias.len())));
            }
            layer.bias = bias;
        }
        if net.output_len() != net.num_vehicles + 1 {
            return Err(bad("output size must be vehicles + 1".into()));
        }
        Ok(net)
    }
}

/// Gradient of every layer's weights and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Mean squared error between `Q(s_b, a_b)` and `targets[b]` and its
/// gradient with respect to every parameter.
pub fn backward(net: &QNetwork, batch: &[(&[f64], usize)], targets: &[f64]) -> (f64, Gradients) {
    assert!(!batch.is_empty(), "empty batch");
    assert_eq!(batch.len(), targets.len());
    let mut grads = Gradients {
        layers: net
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect(),
    };
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (&(features, action), &target) in batch.iter().zip(targets) {
        let acts = net.activations(features);
        let q = acts.last().expect("output")[action];
        let err = q - target;
        loss += err * err * scale;
        let mut delta = vec![0.0; net.output_len()];
        delta[action] = 2.0 * err * scale;
        for k in (0..net.layers.len()).rev() {
            let layer = &net.layers[k];
            let input = &acts[k];
            let (gw, gb) = &mut grads.layers[k];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, &x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if k == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // ReLU derivative on the hidden activation
            for (p, &a) in prev.iter_mut().zip(input) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    (loss, grads)
}

/// Mean squared error only.
pub fn batch_loss(net: &QNetwork, batch: &[(&[f64], usize)], targets: &[f64]) -> f64 {
    let scale = 1.0 / batch.len() as f64;
    batch
        .iter()
        .zip(targets)
        .map(|(&(f, a), &t)| {
            let q = net.activations(f).pop().expect("output")[a];
            (q - t) * (q - t) * scale
        })
        .sum()
}

/// Adam optimizer state.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(net: &QNetwork, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: net
                .layers
                .iter()
                .map(|l| {
                    (
                        vec![0.0; l.weights.len()],
                        vec![0.0; l.weights.len()],
                        vec![0.0; l.bias.len()],
                        vec![0.0; l.bias.len()],
                    )
                })
                .collect(),
        }
    }

    pub fn apply(&mut self, net: &mut QNetwork, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..params.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        };
        for ((layer, (gw, gb)), (mw, vw, mb, vb)) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.moments)
        {
            update(&mut layer.weights, gw, mw, vw);
            update(&mut layer.bias, gb, mb, vb);
        }
    }
}

/// Argmax of `q` over decisions with `mask[d] == true`; ties go to the
/// lowest index.
pub fn greedy_decide(q: &[f64], mask: &[bool]) -> Decision {
    let mut best: Option<(usize, f64)> = None;
    for (d, (&v, &ok)) in q.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|(_, b)| v > b) {
            best = Some((d, v));
        }
    }
    Decision(best.expect("at least one feasible decision").0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub features: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    /// Features and feasibility mask of the next decision point; `None` at
    /// the end of the day.
    pub next: Option<(Vec<f64>, Vec<bool>)>,
}

/// Fixed-capacity FIFO buffer with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    head: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            items: Vec::with_capacity(capacity),
            capacity,
            head: 0,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest-first view.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items[self.head..].iter().chain(&self.items[..self.head])
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn get(&self, idx: usize) -> &T {
        &self.items[idx]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    /// One episode is one simulated day.
    pub episodes: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    /// Gradient updates between target-network syncs.
    pub target_sync: u64,
    pub replay_capacity: usize,
    pub train_pool: u64,
    pub test_pool: u64,
}

impl Default for TrainSchedule {
    /// Desk-scale schedule.
    fn default() -> Self {
        TrainSchedule {
            episodes: 5_000,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            learning_rate: 1e-3,
            batch_size: 32,
            gamma: 1.0,
            target_sync: 1_000,
            replay_capacity: 10_000,
            train_pool: 1_500,
            test_pool: 500,
        }
    }
}

impl TrainSchedule {
    pub fn full_scale() -> Self {
        TrainSchedule {
            episodes: 200_000,
            ..TrainSchedule::default()
        }
    }

    /// Exponential decay from `epsilon_start` at episode 0 to `epsilon_end`
    /// at the last episode.
    pub fn epsilon(&self, episode: u64) -> f64 {
        if self.episodes <= 1 {
            return self.epsilon_start;
        }
        let frac = episode.min(self.episodes - 1) as f64 / (self.episodes - 1) as f64;
        self.epsilon_start * (self.epsilon_end / self.epsilon_start).powf(frac)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.batch_size == 0 || self.replay_capacity == 0 {
            return Err(Error::config("train: episodes, batch_size, replay_capacity must be > 0"));
        }
        if !(self.epsilon_start >= self.epsilon_end && self.epsilon_end > 0.0 && self.epsilon_start <= 1.0) {
            return Err(Error::config("train: need 0 < epsilon_end <= epsilon_start <= 1"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("train: learning_rate > 0 and gamma in [0, 1] required"));
        }
        if self.train_pool == 0 || self.target_sync == 0 {
            return Err(Error::config("train: train_pool and target_sync must be > 0"));
        }
        Ok(())
    }
}

/// Where training days come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScenarioSource {
    /// Every day drawn with the same expected demands.
    Fixed(Vec<f64>),
    /// Each day first draws its expected demands from a shaped law.
    Shaped(ShapedDemandLaw),
    /// A fixed list of days, cycled.
    Days(Vec<DayScenario>),
}

impl ScenarioSource {
    /// Instance `index` of the pool in `stream`: the day and the expected
    /// demands the policy observes on it.
    pub fn instance(
        &self,
        geo: &Geography,
        params: &ServiceParams,
        seed: u64,
        stream: u64,
        index: u64,
    ) -> (DayScenario, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index));
        match self {
            ScenarioSource::Fixed(d) => (sample_day(geo, params, d, &mut rng), d.clone()),
            ScenarioSource::Shaped(law) => {
                let d = sample_training_demands(law, &mut rng);
                (sample_day(geo, params, &d, &mut rng), d)
            }
            ScenarioSource::Days(days) => {
                let day = &days[(index % days.len() as u64) as usize];
                (day.clone(), day.expected_demands.clone())
            }
        }
    }
}

/// Immediate reward of an acceptance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RewardRule {
    Unit,
    /// Per-region reward (reward shaping).
    PerRegion(Vec<f64>),
}

impl RewardRule {
    pub fn reward(&self, region: usize) -> f64 {
        match self {
            RewardRule::Unit => 1.0,
            RewardRule::PerRegion(w) => w[region],
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: QNetwork,
    /// Mean batch loss per episode (NaN for episodes without updates).
    pub loss_trace: Vec<f64>,
    pub updates: u64,
}

struct Learner<'a> {
    net: QNetwork,
    target: QNetwork,
    adam: Adam,
    buffer: ReplayBuffer<Transition>,
    schedule: &'a TrainSchedule,
    updates: u64,
    fault: Option<Error>,
}

impl Learner<'_> {
    fn learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        if self.buffer.len() < self.schedule.batch_size || self.fault.is_some() {
            return None;
        }
        let idx = self.buffer.sample_indices(self.schedule.batch_size, rng);
        let mut targets = Vec::with_capacity(idx.len());
        let mut batch: Vec<(&[f64], usize)> = Vec::with_capacity(idx.len());
        for &i in &idx {
            let t = self.buffer.get(i);
            let y = match &t.next {
                None => t.reward,
                Some((f, mask)) => {
                    let q = self.target.activations(f).pop().expect("output");
                    let best = q
                        .iter()
                        .zip(mask)
                        .filter(|(_, &ok)| ok)
                        .map(|(&v, _)| v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    t.reward + self.schedule.gamma * best
                }
            };
            targets.push(y);
            batch.push((&t.features, t.action));
        }
        let (loss, grads) = backward(&self.net, &batch, &targets);
        self.adam.apply(&mut self.net, &grads);
        self.updates += 1;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS || !self.net.all_finite() {
            self.fault = Some(Error::Divergence {
                update: self.updates,
                reason: format!("batch loss {loss:e}"),
            });
        }
        if self.updates % self.schedule.target_sync == 0 {
            self.target = self.net.clone();
        }
        Some(loss)
    }
}

/// Trains a Q-network on days from `source`.
pub fn train(
    geo: &Geography,
    params: &ServiceParams,
    source: &ScenarioSource,
    reward: &RewardRule,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    let scaler = FeatureScaler::new(geo, params);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_TRAIN_INIT, 0));
    let net = QNetwork::for_problem(scaler.len(), params.vehicles, &mut rng);
    let mut learner = Learner {
        target: net.clone(),
        adam: Adam::new(&net, schedule.learning_rate),
        net,
        buffer: ReplayBuffer::new(schedule.replay_capacity),
        schedule,
        updates: 0,
        fault: None,
    };
    let mut loss_trace = Vec::with_capacity(schedule.episodes as usize);

    for episode in 0..schedule.episodes {
        let epsilon = schedule.epsilon(episode);
        let (day, demands) = source.instance(
            geo,
            params,
            seed,
            STREAM_TRAIN_POOL,
            episode % schedule.train_pool,
        );
        let mut pending: Option<(Vec<f64>, usize, f64)> = None;
        let (mut loss_sum, mut loss_n) = (0.0, 0usize);
        run_day_with(geo, params, &day, &demands, |point: &DecisionPoint<'_>| {
            let features = extract_features(point, geo, &scaler).0;
            let mask = point.feasibility_mask();
            if let Some((f, a, r)) = pending.take() {
                learner.buffer.push(Transition {
                    features: f,
                    action: a,
                    reward: r,
                    next: Some((features.clone(), mask.clone())),
                });
                if let Some(l) = learner.learn(&mut rng) {
                    loss_sum += l;
                    loss_n += 1;
                }
            }
            let choice = if rng.random::<f64>() < epsilon {
                let feasible = point.feasible();
                feasible[rng.random_range(0..feasible.len())]
            } else {
                let q = learner.net.activations(&features).pop().expect("output");
                greedy_decide(&q, &mask)
            };
            let r = if choice.is_accept() {
                reward.reward(point.region())
            } else {
                0.0
            };
            pending = Some((features, choice.0, r));
            choice
        })?;
        if let Some((f, a, r)) = pending.take() {
            learner.buffer.push(Transition {
                features: f,
                action: a,
                reward: r,
                next: None,
            });
            if let Some(l) = learner.learn(&mut rng) {
                loss_sum += l;
                loss_n += 1;
            }
        }
        if let Some(err) = learner.fault.take() {
            return Err(err);
        }
        loss_trace.push(if loss_n > 0 {
            loss_sum / loss_n as f64
        } else {
            f64::NAN
        });
    }
    Ok(TrainOutcome {
        network: learner.net,
        loss_trace,
        updates: learner.updates,
    })
}

/// Mean daily services of greedy play over the first `count` days of the test pool.
pub fn evaluate_test_pool(
    net: &QNetwork,
    geo: &Geography,
    params: &ServiceParams,
    source: &ScenarioSource,
    seed: u64,
    count: u64,
) -> Result<f64> {
    let scaler = FeatureScaler::new(geo, params);
    let mut total = 0.0;
    for idx in 0..count {
        let (day, demands) = source.instance(geo, params, seed, STREAM_TEST_POOL, idx);
        let res = run_day_with(geo, params, &day, &demands, |point| {
            let f = extract_features(point, geo, &scaler).0;
            let q = net.activations(&f).pop().expect("output");
            greedy_decide(&q, &point.feasibility_mask())
        })?;
        total += res.total_services as f64;
    }
    Ok(total / count.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(&[4, 5, 5, 3], 2);
        assert_eq!(net.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_construction() {
        let mut net = QNetwork::zeros(&[1, 1], 0);
        net.layers[0].weights[0] = 1.0;
        assert_eq!(net.forward(&[0.37]).unwrap(), vec![0.37]);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let net = QNetwork::zeros(&[4, 3, 2], 1);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn greedy_masks_infeasible() {
        assert_eq!(greedy_decide(&[0.4, 5.0, 0.9], &[true, false, true]), Decision(2));
        assert_eq!(greedy_decide(&[0.4, 5.0, 0.9], &[true, false, false]), Decision(0));
        assert_eq!(greedy_decide(&[1.0, 1.0, 1.0], &[true, true, true]), Decision(0));
    }

    #[test]
    fn epsilon_endpoints() {
        let s = TrainSchedule {
            episodes: 1000,
            ..TrainSchedule::default()
        };
        assert!((s.epsilon(0) - 1.0).abs() < 1e-12);
        assert!((s.epsilon(999) - 0.01).abs() < 1e-9);
        for e in 1..1000 {
            assert!(s.epsilon(e) < s.epsilon(e - 1));
        }
    }

    #[test]
    fn targets_equal_predictions_give_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = QNetwork::new(&[3, 6, 6, 2], 1, &mut rng);
        let xs = [vec![0.1, 0.5, 0.9], vec![0.3, 0.2, 0.7]];
        let batch: Vec<(&[f64], usize)> = vec![(&xs[0], 0), (&xs[1], 1)];
        let targets: Vec<f64> = batch
            .iter()
            .map(|(f, a)| net.forward(f).unwrap()[*a])
            .collect();
        let (loss, g) = backward(&net, &batch, &targets);
        assert_eq!(loss, 0.0);
        assert!(g.layers.iter().all(|(w, b)| w.iter().chain(b).all(|&x| x == 0.0)));
    }

    #[test]
    fn replay_ring_evicts_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(i);
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn weight_file_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = QNetwork::for_problem(14, 2, &mut rng);
        let back = QNetwork::from_text(&net.to_text()).unwrap();
        assert_eq!(back, net);
        assert!(QNetwork::from_text("garbage").is_err());
    }
}
