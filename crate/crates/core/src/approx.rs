//! Approximate Q-learning over continuous price states: a per-action linear
//! model and a pair of per-action neural networks.

use std::io::{BufRead, Read, Write};

use crate::env::{Action, PriceState, RewardConfig, RewardMode, WindowEnv};
use crate::error::{Error, Result};
use crate::evaluation::Policy;
use crate::market_data::{PriceSeries, TimeWindow};
use crate::nn::{LayerSpec, Mlp};
use crate::tabular::{agent_rng, epsilon_greedy, AgentRng, greedy_action, EpochStats, TrainConfig, TrainingLog};

/// Feature count for history length `h`: four returns per day, day index, bias.
pub fn feature_len(h: usize) -> usize {
    4 * (h + 1) + 2
}

/// Scale-free encoding of a price state.
///
/// Every price becomes a return against the window anchor (`p / anchor - 1`),
/// oldest day first in open/high/low/close order, followed by the day index
/// normalised to `[0, 1]` and a constant 1.
pub fn featurize(state: &PriceState) -> Vec<f64> {
    let anchor = state.anchor();
    let mut phi = Vec::with_capacity(feature_len(state.history().len() - 1));
    for row in state.history() {
        phi.extend(row.iter().map(|p| p / anchor - 1.0));
    }
    phi.push(state.day() as f64 / (state.window_len() - 1) as f64);
    phi.push(1.0);
    phi
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How the linear agent applies its TD target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// `w_a += α (r + γ max Q(s',·) - Q(s,a)) φ(s)`.
    #[default]
    TdError,
    /// `w_a += α (r + γ max Q(s',·)) φ(s)`, without the `-Q(s,a)` term.
    /// Kept for comparison; it diverges on any stream with non-zero rewards.
    Literal,
}

/// One weight vector per action.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    weights: [Vec<f64>; 2],
}

impl LinearWeights {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: [vec![0.0; dim], vec![0.0; dim]],
        }
    }

    pub fn from_vectors(buy: Vec<f64>, wait: Vec<f64>) -> Result<Self> {
        if buy.len() != wait.len() {
            return Err(Error::Usage("per-action weight vectors differ in length".into()));
        }
        Ok(Self {
            weights: [buy, wait],
        })
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn for_action(&self, a: Action) -> &[f64] {
        &self.weights[a.index()]
    }

    pub fn q(&self, phi: &[f64], a: Action) -> Result<f64> {
        if phi.len() != self.dim() {
            return Err(Error::Usage(format!(
                "feature vector has {} entries, weights expect {}",
                phi.len(),
                self.dim()
            )));
        }
        Ok(dot(&self.weights[a.index()], phi))
    }

    pub fn q_values(&self, phi: &[f64]) -> Result<[f64; 2]> {
        Ok([self.q(phi, Action::Buy)?, self.q(phi, Action::Wait)?])
    }

    /// Applies one TD update to action `a`'s weights and returns δ.
    /// `next` is `None` on terminal transitions.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        phi: &[f64],
        a: Action,
        reward: f64,
        next: Option<&[f64]>,
        alpha: f64,
        gamma: f64,
        rule: UpdateRule,
    ) -> Result<f64> {
        let bootstrap = match next {
            Some(n) => {
                let [b, w] = self.q_values(n)?;
                b.max(w)
            }
            None => 0.0,
        };
        let target = reward + gamma * bootstrap;
        let delta = match rule {
            UpdateRule::TdError => target - self.q(phi, a)?,
            UpdateRule::Literal => target,
        };
        if !delta.is_finite() {
            return Err(Error::Numerical(format!("non-finite TD error {delta}")));
        }
        for (w, f) in self.weights[a.index()].iter_mut().zip(phi) {
            *w += alpha * delta * f;
        }
        Ok(delta)
    }

    /// `action,feature,weight` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["action", "feature", "weight"])?;
        for a in Action::ALL {
            for (i, w) in self.weights[a.index()].iter().enumerate() {
                wtr.write_record([a.name().to_string(), i.to_string(), w.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut vecs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for record in rdr.records() {
            let record = record?;
            let row = record.position().map_or(0, |p| p.line());
            let bad = |msg: &str| Error::Parse {
                row,
                msg: msg.to_string(),
            };
            if record.len() != 3 {
                return Err(bad("expected action,feature,weight"));
            }
            let a = Action::from_name(&record[0]).ok_or_else(|| bad("bad action"))?;
            let i: usize = record[1].parse().map_err(|_| bad("bad feature index"))?;
            let w: f64 = record[2].parse().map_err(|_| bad("bad weight"))?;
            let v = &mut vecs[a.index()];
            if i != v.len() {
                return Err(bad("feature indices must be consecutive"));
            }
            v.push(w);
        }
        let [buy, wait] = vecs;
        Self::from_vectors(buy, wait)
    }
}

impl Policy for LinearWeights {
    fn act(&self, state: &PriceState) -> Action {
        let phi = featurize(state);
        greedy_action(self.q_values(&phi).expect("policy used with a mismatched history length"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepHyperparams {
    pub n_hidden_layers: usize,
    pub n_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub epsilon_floor: Option<f64>,
}

impl Default for DeepHyperparams {
    fn default() -> Self {
        Self {
            n_hidden_layers: 2,
            n_units: 16,
            learning_rate: 1e-3,
            epochs: 30,
            seed: 0,
            epsilon: 0.1,
            epsilon_floor: None,
        }
    }
}

impl DeepHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.n_hidden_layers == 0 || self.n_units == 0 {
            return Err(Error::Config("hidden layers and units must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.schedule().validate()
    }

    fn schedule(&self) -> TrainConfig {
        TrainConfig {
            alpha: 1.0,
            epsilon: self.epsilon,
            epsilon_floor: self.epsilon_floor,
            epochs: self.epochs,
            seed: self.seed,
        }
    }
}

/// One network per action: index 0 scores Buy, index 1 scores Wait.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepQ {
    nets: [Mlp; 2],
}

impl DeepQ {
    /// Both networks drawn from one seeded stream, Buy first.
    pub fn init(spec: &LayerSpec, seed: u64) -> Self {
        Self::init_with_rng(spec, &mut agent_rng(seed))
    }

    pub fn init_with_rng(spec: &LayerSpec, rng: &mut AgentRng) -> Self {
        let buy = Mlp::init_with_rng(spec, rng);
        let wait = Mlp::init_with_rng(spec, rng);
        Self { nets: [buy, wait] }
    }

    pub fn from_networks(buy: Mlp, wait: Mlp) -> Result<Self> {
        if buy.spec() != wait.spec() {
            return Err(Error::Usage("per-action networks differ in shape".into()));
        }
        Ok(Self { nets: [buy, wait] })
    }

    pub fn network(&self, a: Action) -> &Mlp {
        &self.nets[a.index()]
    }

    pub fn q(&self, phi: &[f64], a: Action) -> Result<f64> {
        self.nets[a.index()].predict(phi)
    }

    pub fn q_values(&self, phi: &[f64]) -> Result<[f64; 2]> {
        Ok([self.q(phi, Action::Buy)?, self.q(phi, Action::Wait)?])
    }

    /// One semi-gradient step on `(Q(s,a) - y)^2` with the target `y` held
    /// fixed. Only action `a`'s network moves. Returns the loss before the step.
    pub fn update(
        &mut self,
        phi: &[f64],
        a: Action,
        reward: f64,
        next: Option<&[f64]>,
        gamma: f64,
        lr: f64,
    ) -> Result<f64> {
        let bootstrap = match next {
            Some(n) => {
                let [b, w] = self.q_values(n)?;
                b.max(w)
            }
            None => 0.0,
        };
        let target = reward + gamma * bootstrap;
        let net = &mut self.nets[a.index()];
        let (out, cache) = net.forward(phi)?;
        let loss = (out - target).powi(2);
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite Bellman loss {loss}")));
        }
        let grads = net.backward(&cache, target);
        net.sgd_step(&grads, lr)?;
        Ok(loss)
    }

    /// Sectioned text: `network buy`, the network body, `network wait`, the body.
    pub fn write_text<W: Write>(&self, mut writer: W) -> Result<()> {
        for a in Action::ALL {
            writeln!(writer, "network {}", a.name())?;
            writer.write_all(self.nets[a.index()].to_text().as_bytes())?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i, l.as_str()));
        let mut nets = Vec::with_capacity(2);
        for a in Action::ALL {
            let (row, header) = it.next().ok_or_else(|| Error::Parse {
                row: 0,
                msg: format!("missing `network {}` section", a.name()),
            })?;
            if header.trim() != format!("network {}", a.name()) {
                return Err(Error::Parse {
                    row: row as u64 + 1,
                    msg: format!("expected `network {}`", a.name()),
                });
            }
            nets.push(Mlp::from_lines(&mut it)?);
        }
        let wait = nets.pop().unwrap();
        let buy = nets.pop().unwrap();
        Self::from_networks(buy, wait)
    }
}

impl Policy for DeepQ {
    fn act(&self, state: &PriceState) -> Action {
        let phi = featurize(state);
        greedy_action(self.q_values(&phi).expect("policy used with a mismatched history length"))
    }
}

/// The pieces of an approximate agent the episode loop needs.
trait WindowLearner {
    fn values(&self, phi: &[f64]) -> Result<[f64; 2]>;

    /// Learns from one transition and returns the squared TD error before the update.
    fn learn(&mut self, phi: &[f64], a: Action, reward: f64, next: Option<&[f64]>, gamma: f64) -> Result<f64>;
}

struct LinearLearner {
    weights: LinearWeights,
    alpha: f64,
    rule: UpdateRule,
}

impl WindowLearner for LinearLearner {
    fn values(&self, phi: &[f64]) -> Result<[f64; 2]> {
        self.weights.q_values(phi)
    }

    fn learn(&mut self, phi: &[f64], a: Action, reward: f64, next: Option<&[f64]>, gamma: f64) -> Result<f64> {
        let before = self.weights.q(phi, a)?;
        let delta = self.weights.update(phi, a, reward, next, self.alpha, gamma, self.rule)?;
        // literal rule reports its step size, not a TD error; recover the error for the log
        let err = match self.rule {
            UpdateRule::TdError => delta,
            UpdateRule::Literal => delta - before,
        };
        Ok(err * err)
    }
}

struct DeepLearner {
    model: DeepQ,
    lr: f64,
}

impl WindowLearner for DeepLearner {
    fn values(&self, phi: &[f64]) -> Result<[f64; 2]> {
        self.model.q_values(phi)
    }

    fn learn(&mut self, phi: &[f64], a: Action, reward: f64, next: Option<&[f64]>, gamma: f64) -> Result<f64> {
        self.model.update(phi, a, reward, next, gamma, self.lr)
    }
}

fn check_window_setup(windows: &[TimeWindow], h: usize, reward: &RewardConfig) -> Result<()> {
    if reward.mode != RewardMode::Window {
        return Err(Error::Config("approximate agents need window-mode rewards".into()));
    }
    reward.validate()?;
    if !windows.iter().any(|w| w.start() >= h) {
        return Err(Error::Setup(format!(
            "no training window has {h} bars of history before it"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
/// ε-greedy episodes over every usable window, in order, for each epoch.
/// Windows without `h` earlier bars are skipped.
fn train_windows<L: WindowLearner>(
    learner: &mut L,
    windows: &[TimeWindow],
    series: &PriceSeries,
    h: usize,
    reward: &RewardConfig,
    schedule: &TrainConfig,
    rng: &mut AgentRng,
    log_loss: bool,
) -> Result<TrainingLog> {
    let mut log = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        let epsilon = schedule.epsilon_at(epoch);
        let (mut total_reward, mut total_sq, mut steps, mut episodes) = (0.0, 0.0, 0usize, 0usize);
        for window in windows.iter().filter(|w| w.start() >= h) {
            let (mut env, state) = WindowEnv::reset(window, series, h, *reward)?;
            let mut phi = featurize(&state);
            episodes += 1;
            loop {
                let action = epsilon_greedy(learner.values(&phi)?, epsilon, rng);
                let t = env.step(action)?;
                let next_phi = featurize(&t.next_state);
                let next = (!t.done).then_some(next_phi.as_slice());
                total_sq += learner.learn(&phi, action, t.reward, next, reward.gamma)?;
                total_reward += t.reward;
                steps += 1;
                if t.done {
                    break;
                }
                phi = next_phi;
            }
        }
        log.push(EpochStats {
            epoch,
            epsilon,
            steps,
            // reward per episode: each window pays once, at its purchase
            avg_reward: total_reward / episodes.max(1) as f64,
            loss: log_loss.then(|| total_sq / steps.max(1) as f64),
        });
    }
    Ok(log)
}

/// Trains the linear agent from zero weights.
pub fn train_linear(
    windows: &[TimeWindow],
    series: &PriceSeries,
    h: usize,
    reward: &RewardConfig,
    train: &TrainConfig,
    rule: UpdateRule,
) -> Result<(LinearWeights, TrainingLog)> {
    check_window_setup(windows, h, reward)?;
    train.validate()?;
    let mut learner = LinearLearner {
        weights: LinearWeights::zeros(feature_len(h)),
        alpha: train.alpha,
        rule,
    };
    let mut rng = agent_rng(train.seed);
    let log = train_windows(&mut learner, windows, series, h, reward, train, &mut rng, false)?;
    Ok((learner.weights, log))
}

/// Trains the per-action networks, initialised from `hp.seed`.
pub fn train_deep(
    windows: &[TimeWindow],
    series: &PriceSeries,
    h: usize,
    reward: &RewardConfig,
    hp: &DeepHyperparams,
) -> Result<(DeepQ, TrainingLog)> {
    check_window_setup(windows, h, reward)?;
    hp.validate()?;
    let spec = LayerSpec::uniform(feature_len(h), hp.n_hidden_layers, hp.n_units)?;
    let mut rng = agent_rng(hp.seed);
    let mut learner = DeepLearner {
        model: DeepQ::init_with_rng(&spec, &mut rng),
        lr: hp.learning_rate,
    };
    let log = train_windows(&mut learner, windows, series, h, reward, &hp.schedule(), &mut rng, true)?;
    Ok((learner.model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tests::series_from_closes;
    use crate::market_data::make_windows;
    use crate::nn::Dense;
    use proptest::prelude::*;

    fn state(rows: Vec<[f64; 4]>, day: usize, w: usize, anchor: f64) -> PriceState {
        PriceState::new(rows, day, w, anchor).unwrap()
    }

    #[test]
    fn features_at_anchor() {
        let s = state(vec![[10.0; 4]; 3], 0, 5, 10.0);
        let phi = featurize(&s);
        assert_eq!(phi.len(), feature_len(2));
        assert_eq!(&phi[..12], &[0.0; 12]);
        assert_eq!(phi[12], 0.0);
        assert_eq!(phi[13], 1.0);

        let s = state(vec![[10.0, 10.5, 9.5, 10.5]], 4, 5, 10.0);
        let phi = featurize(&s);
        assert!((phi[3] - 0.05).abs() < 1e-12);
        assert_eq!(phi[4], 1.0);
    }

    proptest! {
        #[test]
        fn features_are_scale_free(
            prices in prop::collection::vec(1.0f64..200.0, 12),
            anchor in 1.0f64..200.0,
            k in 0.01f64..100.0,
            day in 0usize..5,
        ) {
            let rows: Vec<[f64; 4]> = prices.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
            let s = state(rows, day, 5, anchor);
            let a = featurize(&s);
            let b = featurize(&s.scaled(k));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn linear_q_examples() {
        let phi = vec![0.3, -0.2, 0.5, 1.0];
        let w = LinearWeights::zeros(4);
        assert_eq!(w.q(&phi, Action::Buy).unwrap(), 0.0);

        let w = LinearWeights::from_vectors(vec![0.0, 0.0, 0.0, 1.0], vec![0.0; 4]).unwrap();
        assert_eq!(w.q(&phi, Action::Buy).unwrap(), 1.0);

        let w = LinearWeights::from_vectors(phi.clone(), phi.clone()).unwrap();
        let norm2: f64 = phi.iter().map(|v| v * v).sum();
        assert!((w.q(&phi, Action::Wait).unwrap() - norm2).abs() < 1e-15);

        assert!(matches!(w.q(&[1.0], Action::Buy), Err(Error::Usage(_))));
    }

    #[test]
    fn terminal_update_copies_features() {
        let phi = vec![0.1, -0.4, 1.0];
        let mut w = LinearWeights::zeros(3);
        let delta = w.update(&phi, Action::Buy, 1.0, None, 1.0, 0.9, UpdateRule::TdError).unwrap();
        assert_eq!(delta, 1.0);
        assert_eq!(w.for_action(Action::Buy), phi.as_slice());
        assert_eq!(w.for_action(Action::Wait), &[0.0; 3]);
    }

    #[test]
    fn zero_td_error_is_a_fixed_point() {
        let phi = vec![0.5, 1.0];
        let mut w = LinearWeights::from_vectors(vec![2.0, 0.0], vec![0.0, 0.0]).unwrap();
        let before = w.clone();
        // Q(s,buy) = 1 = reward on a terminal step
        let d = w.update(&phi, Action::Buy, 1.0, None, 0.7, 0.9, UpdateRule::TdError).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(w, before);
    }

    #[test]
    fn update_moves_q_by_alpha_delta_norm() {
        let phi = vec![0.2, -0.1, 0.05, 1.0];
        let next = vec![0.1, 0.1, 0.1, 1.0];
        let mut w = LinearWeights::from_vectors(vec![0.3, 0.1, -0.2, 0.4], vec![-0.5, 0.2, 0.1, 0.3]).unwrap();
        let norm2: f64 = phi.iter().map(|v| v * v).sum();
        let before = w.q(&phi, Action::Wait).unwrap();
        let other = w.for_action(Action::Buy).to_vec();
        let delta = w.update(&phi, Action::Wait, -0.3, Some(&next), 0.25, 0.9, UpdateRule::TdError).unwrap();
        let after = w.q(&phi, Action::Wait).unwrap();
        assert!((after - before - 0.25 * delta * norm2).abs() < 1e-14);
        assert_eq!(w.for_action(Action::Buy), other.as_slice());
    }

    #[test]
    fn repeated_terminal_update_converges_geometrically() {
        // q_k = r - (r - q_0)(1 - α‖φ‖²)^k
        let phi = vec![0.6, 0.8]; // ‖φ‖² = 1
        let (alpha, reward) = (0.5, 2.0);
        let mut w = LinearWeights::zeros(2);
        for k in 1..=30 {
            w.update(&phi, Action::Buy, reward, None, alpha, 0.9, UpdateRule::TdError).unwrap();
            let q = w.q(&phi, Action::Buy).unwrap();
            let closed = reward - reward * (1.0f64 - alpha).powi(k);
            assert!((q - closed).abs() < 1e-12, "k={k}: {q} vs {closed}");
        }
    }

    #[test]
    fn literal_rule_diverges() {
        let phi = vec![1.0];
        let mut w = LinearWeights::zeros(1);
        for _ in 0..200 {
            w.update(&phi, Action::Buy, 1.0, Some(&phi), 0.5, 0.9, UpdateRule::Literal).unwrap();
        }
        assert!(w.q(&phi, Action::Buy).unwrap() > 1e6);
    }

    #[test]
    fn non_finite_delta_is_numerical_error() {
        let mut w = LinearWeights::zeros(1);
        let err = w.update(&[1.0], Action::Buy, f64::NAN, None, 0.5, 0.9, UpdateRule::TdError);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn linear_csv_round_trip() {
        let w = LinearWeights::from_vectors(vec![0.1, -2.5e-7, 3.0], vec![1.0 / 3.0, 0.0, -1.0]).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        assert_eq!(LinearWeights::read_csv(buf.as_slice()).unwrap(), w);
    }

    fn spec(sizes: &[usize]) -> LayerSpec {
        LayerSpec::new(sizes.to_vec()).unwrap()
    }

    #[test]
    fn deep_routing_and_symmetry() {
        let s = spec(&[3, 4, 1]);
        let q = DeepQ::init(&s, 4);
        let phi = [0.1, -0.3, 1.0];
        let (b, w) = (q.q(&phi, Action::Buy).unwrap(), q.q(&phi, Action::Wait).unwrap());
        assert_ne!(b, w);
        let swapped = DeepQ::from_networks(q.network(Action::Wait).clone(), q.network(Action::Buy).clone()).unwrap();
        assert_eq!(swapped.q(&phi, Action::Buy).unwrap(), w);
        assert_eq!(swapped.q(&phi, Action::Wait).unwrap(), b);

        let same = DeepQ::from_networks(q.network(Action::Buy).clone(), q.network(Action::Buy).clone()).unwrap();
        assert_eq!(same.q(&phi, Action::Buy).unwrap(), same.q(&phi, Action::Wait).unwrap());

        let mut net = q.network(Action::Buy).clone();
        let last = net.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.bias[0] = 0.0;
        assert_eq!(net.predict(&phi).unwrap(), 0.0);
    }

    #[test]
    fn deep_update_at_target_is_noop() {
        let layer = Dense {
            inputs: 2,
            outputs: 1,
            weights: vec![0.5, 0.5],
            bias: vec![0.0],
        };
        let net = Mlp::from_layers(vec![layer]).unwrap();
        let mut q = DeepQ::from_networks(net.clone(), net).unwrap();
        let before = q.clone();
        // Q(s,buy) = 1 = terminal reward
        let loss = q.update(&[1.0, 1.0], Action::Buy, 1.0, None, 0.9, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(q, before);
    }

    #[test]
    fn deep_update_descends_and_isolates() {
        let s = spec(&[3, 5, 1]);
        let mut q = DeepQ::init(&s, 8);
        // zero the buy output layer so Q(s,buy) = 0
        let mut buy = q.network(Action::Buy).clone();
        let last = buy.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        q = DeepQ::from_networks(buy, q.network(Action::Wait).clone()).unwrap();
        let phi = [0.2, -0.1, 1.0];
        let wait_before = q.network(Action::Wait).clone();
        let loss = q.update(&phi, Action::Buy, 1.0, None, 0.9, 1e-2).unwrap();
        assert_eq!(loss, 1.0);
        let after = (q.q(&phi, Action::Buy).unwrap() - 1.0).powi(2);
        assert!(after < 1.0);
        assert_eq!(q.network(Action::Wait), &wait_before);
    }

    #[test]
    fn deep_text_round_trip() {
        let q = DeepQ::init(&spec(&[6, 4, 4, 1]), 21);
        let mut buf = Vec::new();
        q.write_text(&mut buf).unwrap();
        let back = DeepQ::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, q);
    }

    fn rising(n: usize) -> PriceSeries {
        series_from_closes(&(0..n).map(|i| 10.0 + (i % 7) as f64).collect::<Vec<_>>())
    }

    #[test]
    fn zero_alpha_and_zero_epochs_keep_initialisation() {
        let s = rising(40);
        let ws = make_windows(&s, 5).unwrap();
        let reward = RewardConfig::window(1.0, 0.95);
        let train = TrainConfig {
            alpha: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        let (w, _) = train_linear(&ws, &s, 2, &reward, &train, UpdateRule::TdError).unwrap();
        assert_eq!(w, LinearWeights::zeros(feature_len(2)));

        let hp = DeepHyperparams {
            epochs: 0,
            seed: 13,
            ..DeepHyperparams::default()
        };
        let (q, log) = train_deep(&ws, &s, 2, &reward, &hp).unwrap();
        assert!(log.is_empty());
        let spec = LayerSpec::uniform(feature_len(2), 2, 16).unwrap();
        assert_eq!(q, DeepQ::init(&spec, 13));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let s = rising(60);
        let ws = make_windows(&s, 5).unwrap();
        let reward = RewardConfig::window(1.0, 0.95);
        let train = TrainConfig {
            epsilon: 0.0,
            epochs: 2,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train_linear(&ws[1..2], &s, 2, &reward, &train, UpdateRule::TdError).unwrap();
        let b = train_linear(&ws[1..2], &s, 2, &reward, &train, UpdateRule::TdError).unwrap();
        assert_eq!(a, b);

        let hp = DeepHyperparams {
            epochs: 3,
            seed: 3,
            ..DeepHyperparams::default()
        };
        let a = train_deep(&ws, &s, 2, &reward, &hp).unwrap();
        let b = train_deep(&ws, &s, 2, &reward, &hp).unwrap();
        assert_eq!(a, b);
        assert!(a.1.iter().all(|e| e.loss.is_some()));
    }

    #[test]
    fn rejects_bad_setup() {
        let s = rising(10);
        let ws = make_windows(&s, 5).unwrap();
        let t = TrainConfig::default();
        assert!(matches!(
            train_linear(&ws, &s, 2, &RewardConfig::movement(1.0, 0.1, 0.9), &t, UpdateRule::TdError),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train_linear(&ws, &s, 6, &RewardConfig::window(1.0, 0.9), &t, UpdateRule::TdError),
            Err(Error::Setup(_))
        ));
        assert!(matches!(
            train_linear(&[], &s, 0, &RewardConfig::window(1.0, 0.9), &t, UpdateRule::TdError),
            Err(Error::Setup(_))
        ));
    }
}
