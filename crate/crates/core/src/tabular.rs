//! Submit-and-leave baseline and ε-greedy Q-learning over movement states.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Action, MovementEnv, MovementState, PriceState, RewardConfig, RewardMode};
use crate::error::{Error, Result};
use crate::evaluation::Policy;
use crate::market_data::PriceSeries;

/// Seeded generator used by every trainer. ChaCha keeps streams stable across platforms.
pub type AgentRng = ChaCha8Rng;

pub fn agent_rng(seed: u64) -> AgentRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Drop below the anchor, in currency units, that triggers a purchase.
    pub d: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { d: 0.5 }
    }
}

/// Buys once the close is at least `d` under the anchor, or on the last day.
pub fn baseline_act(state: &PriceState, config: &BaselineConfig) -> Action {
    if state.is_last_day() || state.close() <= state.anchor() - config.d {
        Action::Buy
    } else {
        Action::Wait
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineAgent {
    pub config: BaselineConfig,
}

impl Policy for BaselineAgent {
    fn act(&self, state: &PriceState) -> Action {
        baseline_act(state, &self.config)
    }
}

/// Learning-loop settings shared by all trainable agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub epsilon: f64,
    /// When set, ε decays linearly from `epsilon` to this floor over the epochs.
    pub epsilon_floor: Option<f64>,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epsilon: 0.1,
            epsilon_floor: None,
            epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if let Some(floor) = self.epsilon_floor {
            if !(0.0..=self.epsilon).contains(&floor) {
                return Err(Error::Config(format!(
                    "epsilon floor must lie in [0, epsilon], got {floor}"
                )));
            }
        }
        Ok(())
    }

    /// Exploration rate used during `epoch` (0-based).
    pub fn epsilon_at(&self, epoch: usize) -> f64 {
        match self.epsilon_floor {
            Some(floor) if self.epochs > 1 => {
                let frac = epoch as f64 / (self.epochs - 1) as f64;
                self.epsilon - (self.epsilon - floor) * frac.min(1.0)
            }
            Some(floor) => floor.max(0.0).min(self.epsilon),
            None => self.epsilon,
        }
    }
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub epsilon: f64,
    pub steps: usize,
    pub avg_reward: f64,
    /// Mean squared Bellman error, reported by the deep agent only.
    pub loss: Option<f64>,
}

pub type TrainingLog = Vec<EpochStats>;

/// Uniformly random action with probability `epsilon`, otherwise the argmax
/// of `values` (indexed by [`Action::index`]) with ties split at random.
pub fn epsilon_greedy<R: Rng + ?Sized>(values: [f64; 2], epsilon: f64, rng: &mut R) -> Action {
    let explore = rng.gen::<f64>() < epsilon;
    if explore {
        return if rng.gen_bool(0.5) { Action::Buy } else { Action::Wait };
    }
    let (buy, wait) = (values[0], values[1]);
    if buy > wait {
        Action::Buy
    } else if wait > buy {
        Action::Wait
    } else if rng.gen_bool(0.5) {
        Action::Buy
    } else {
        Action::Wait
    }
}

/// Argmax without randomness; ties go to Wait. Used when scoring frozen agents.
pub fn greedy_action(values: [f64; 2]) -> Action {
    if values[0] > values[1] {
        Action::Buy
    } else {
        Action::Wait
    }
}

/// Dense table over the `2^(h+1)` movement states. Unseen entries are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    h: usize,
    values: Vec<[f64; 2]>,
}

impl QTable {
    pub fn new(h: usize) -> Self {
        assert!(h < 24, "history length {h} gives an unreasonably large table");
        Self {
            h,
            values: vec![[0.0; 2]; 1 << (h + 1)],
        }
    }

    pub fn history(&self) -> usize {
        self.h
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    fn check(&self, s: &MovementState) {
        assert_eq!(s.history(), self.h, "state history does not match the table");
    }

    pub fn get(&self, s: &MovementState, a: Action) -> f64 {
        self.check(s);
        self.values[s.index()][a.index()]
    }

    pub fn set(&mut self, s: &MovementState, a: Action, value: f64) {
        self.check(s);
        self.values[s.index()][a.index()] = value;
    }

    pub fn row(&self, s: &MovementState) -> [f64; 2] {
        self.check(s);
        self.values[s.index()]
    }

    pub fn max_value(&self, s: &MovementState) -> f64 {
        let [b, w] = self.row(s);
        b.max(w)
    }

    /// One-step Q-learning update of the `(s, a)` entry. `next` is `None`
    /// for a terminal transition, which bootstraps from 0.
    pub fn update(
        &mut self,
        s: &MovementState,
        a: Action,
        reward: f64,
        next: Option<&MovementState>,
        alpha: f64,
        gamma: f64,
    ) -> f64 {
        let bootstrap = next.map_or(0.0, |n| self.max_value(n));
        let current = self.get(s, a);
        let updated = current + alpha * (reward + gamma * bootstrap - current);
        self.set(s, a, updated);
        updated
    }

    pub fn iter(&self) -> impl Iterator<Item = (MovementState, Action, f64)> + '_ {
        self.values.iter().enumerate().flat_map(move |(idx, row)| {
            let s = MovementState::from_index(idx, self.h);
            Action::ALL
                .into_iter()
                .map(move |a| (s.clone(), a, row[a.index()]))
        })
    }

    /// CSV with `state_bits,action,value` rows, every entry written.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["state_bits", "action", "value"])?;
        for (s, a, v) in self.iter() {
            wtr.write_record([s.bits(), a.name().to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the [`QTable::write_csv`] layout; missing entries stay 0.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut table: Option<QTable> = None;
        for record in rdr.records() {
            let record = record?;
            let row = record.position().map_or(0, |p| p.line());
            let bad = |msg: &str| Error::Parse {
                row,
                msg: msg.to_string(),
            };
            if record.len() != 3 {
                return Err(bad("expected state_bits,action,value"));
            }
            let s = MovementState::from_bits(&record[0]).ok_or_else(|| bad("bad state bits"))?;
            let a = Action::from_name(&record[1]).ok_or_else(|| bad("bad action name"))?;
            let v: f64 = record[2].parse().map_err(|_| bad("bad value"))?;
            let t = table.get_or_insert_with(|| QTable::new(s.history()));
            if s.history() != t.h {
                return Err(bad("inconsistent state length"));
            }
            t.set(&s, a, v);
        }
        table.ok_or_else(|| Error::Parse {
            row: 1,
            msg: "empty Q-table file".into(),
        })
    }
}

impl Policy for QTable {
    fn act(&self, state: &PriceState) -> Action {
        greedy_action(self.row(&MovementState::from_price_state(state)))
    }
}

/// Walks the day stream of `series` for `train.epochs` passes, choosing
/// actions ε-greedily and applying [`QTable::update`] after every day.
///
/// The stream does not stop after a purchase. Reaching the end of the series
/// truncates the pass; the final update still bootstraps from the last state
/// because the underlying day stream continues past the data.
pub fn train_tabular(
    series: &PriceSeries,
    h: usize,
    reward: &RewardConfig,
    train: &TrainConfig,
) -> Result<(QTable, TrainingLog)> {
    if reward.mode != RewardMode::Movement {
        return Err(Error::Config("tabular Q-learning needs movement-mode rewards".into()));
    }
    reward.validate()?;
    train.validate()?;
    if series.len() <= h + 1 {
        return Err(Error::Setup(format!(
            "tabular training needs more than {} bars, got {}",
            h + 1,
            series.len()
        )));
    }
    let mut rng = agent_rng(train.seed);
    let mut q = QTable::new(h);
    let mut log = Vec::with_capacity(train.epochs);
    let bound = reward.movement_q_bound();

    for epoch in 0..train.epochs {
        let epsilon = train.epsilon_at(epoch);
        let (mut env, mut state) = MovementEnv::reset(series, h, *reward)?;
        let (mut total, mut steps) = (0.0, 0usize);
        loop {
            let action = epsilon_greedy(q.row(&state), epsilon, &mut rng);
            let t = env.step(action)?;
            let value = q.update(&state, action, t.reward, Some(&t.next_state), train.alpha, reward.gamma);
            debug_assert!(
                reward.gamma >= 1.0 || value.abs() <= bound * (1.0 + 1e-12),
                "Q-value {value} escaped the bound {bound}"
            );
            total += t.reward;
            steps += 1;
            state = t.next_state;
            if t.done {
                break;
            }
        }
        log.push(EpochStats {
            epoch,
            epsilon,
            steps,
            avg_reward: total / steps as f64,
            loss: None,
        });
    }
    Ok((q, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::tests::series_from_closes;
    use crate::market_data::Movement;

    fn st(bits: &str) -> MovementState {
        MovementState::from_bits(bits).unwrap()
    }

    #[test]
    fn baseline_rule() {
        let cfg = BaselineConfig { d: 1.0 };
        let mk = |close: f64, day| PriceState::new(vec![[close, close, close, close]], day, 5, 100.0).unwrap();
        assert_eq!(baseline_act(&mk(99.0, 1), &cfg), Action::Buy);
        assert_eq!(baseline_act(&mk(99.5, 1), &cfg), Action::Wait);
        assert_eq!(baseline_act(&mk(105.0, 4), &cfg), Action::Buy);
    }

    #[test]
    fn greedy_choice() {
        let mut rng = agent_rng(1);
        assert_eq!(epsilon_greedy([1.0, 0.0], 0.0, &mut rng), Action::Buy);
        assert_eq!(epsilon_greedy([0.0, 1.0], 0.0, &mut rng), Action::Wait);
        assert_eq!(greedy_action([0.0, 0.0]), Action::Wait);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = agent_rng(2);
        let n = 10_000;
        let buys = (0..n)
            .filter(|_| epsilon_greedy([5.0, 0.0], 1.0, &mut rng) == Action::Buy)
            .count();
        let frac = buys as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn ties_split_evenly() {
        let mut rng = agent_rng(3);
        let n = 10_000;
        let buys = (0..n)
            .filter(|_| epsilon_greedy([0.3, 0.3], 0.0, &mut rng) == Action::Buy)
            .count();
        let frac = buys as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn update_arithmetic() {
        let mut q = QTable::new(0);
        let (s, s2) = (st("0"), st("1"));
        assert_eq!(q.update(&s, Action::Buy, 1.0, Some(&s2), 0.5, 0.9), 0.5);

        let mut q = QTable::new(0);
        q.set(&s2, Action::Wait, 2.0);
        assert_eq!(q.update(&s, Action::Buy, 0.0, Some(&s2), 1.0, 0.5), 1.0);
    }

    #[test]
    fn update_touches_one_entry() {
        let mut q = QTable::new(2);
        q.set(&st("011"), Action::Wait, 3.0);
        let before = q.clone();
        q.update(&st("101"), Action::Buy, 1.0, Some(&st("011")), 0.3, 0.9);
        let changed: Vec<_> = q
            .iter()
            .zip(before.iter())
            .filter(|(a, b)| a.2 != b.2)
            .map(|(a, _)| (a.0.bits(), a.1))
            .collect();
        assert_eq!(changed, vec![("101".to_string(), Action::Buy)]);
    }

    #[test]
    fn repeated_update_follows_geometric_recursion() {
        // with a fixed target y, q_k = y - (y - q_0)(1 - α)^k
        let (alpha, gamma, reward) = (0.3, 0.9, 1.0);
        let mut q = QTable::new(0);
        let (s, s2) = (st("0"), st("1"));
        q.set(&s2, Action::Buy, 2.0);
        let y = reward + gamma * 2.0;
        let mut prev = 0.0;
        for k in 1..=20 {
            let v = q.update(&s, Action::Buy, reward, Some(&s2), alpha, gamma);
            let closed = y - y * (1.0f64 - alpha).powi(k);
            assert!((v - closed).abs() < 1e-12);
            assert!(v > prev && v < y);
            prev = v;
        }
    }

    #[test]
    fn terminal_update_ignores_next() {
        let mut q = QTable::new(0);
        assert_eq!(q.update(&st("1"), Action::Wait, -1.0, None, 1.0, 0.9), -1.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut q = QTable::new(2);
        q.set(&st("010"), Action::Buy, 0.123456789012345);
        q.set(&st("111"), Action::Wait, -7.5e-9);
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("state_bits,action,value\n000,buy,0\n"));
        assert_eq!(QTable::read_csv(buf.as_slice()).unwrap(), q);
    }

    /// Down days close at 9, Up days at 11, alternating.
    fn alternating(n: usize) -> PriceSeries {
        let closes: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 9.0 } else { 11.0 }).collect();
        series_from_closes(&closes)
    }

    /// Q* for the two-state chain D -> U -> D by value iteration.
    fn alternating_optimum(r: f64, c: f64, gamma: f64) -> [[f64; 2]; 2] {
        // index 0 = Down state, 1 = Up state; buying in Down pays +r, in Up -r
        let mut q = [[0.0f64; 2]; 2];
        for _ in 0..10_000 {
            let v = [q[0][0].max(q[0][1]), q[1][0].max(q[1][1])];
            q = [
                [r + gamma * v[1], -c + gamma * v[1]],
                [-r + gamma * v[0], -c + gamma * v[0]],
            ];
        }
        q
    }

    #[test]
    fn learns_alternating_chain() {
        let s = alternating(200);
        assert_eq!(s.bars()[2].movement(), Movement::Down);
        assert_eq!(s.bars()[3].movement(), Movement::Up);
        let reward = RewardConfig::movement(1.0, 0.01, 0.5);
        let train = TrainConfig {
            alpha: 0.1,
            epsilon: 0.1,
            epsilon_floor: None,
            epochs: 200,
            seed: 11,
        };
        let (q, log) = train_tabular(&s, 0, &reward, &train).unwrap();
        assert_eq!(log.len(), 200);
        let want = alternating_optimum(1.0, 0.01, 0.5);
        // frozen oracle values: V(D) = (1 - γc)/(1 - γ²), V(U) = -c + γV(D)
        assert!((want[0][0] - 1.326_666_666_666_666_7).abs() < 1e-9);
        assert!((want[1][1] - 0.653_333_333_333_333_3).abs() < 1e-9);
        let (down, up) = (st("0"), st("1"));
        assert_eq!(greedy_action(q.row(&down)), Action::Buy);
        assert_eq!(greedy_action(q.row(&up)), Action::Wait);
        for (state, row) in [(&down, want[0]), (&up, want[1])] {
            for a in Action::ALL {
                assert!(
                    (q.get(state, a) - row[a.index()]).abs() < 0.05,
                    "{} {:?}: {} vs {}",
                    state.bits(),
                    a,
                    q.get(state, a),
                    row[a.index()]
                );
            }
        }
    }

    #[test]
    fn values_stay_bounded() {
        let closes: Vec<f64> = (0..300).map(|i| 50.0 + ((i * 37) % 11) as f64).collect();
        let s = series_from_closes(&closes);
        let reward = RewardConfig::movement(1.0, 0.3, 0.8);
        let train = TrainConfig {
            alpha: 0.9,
            epsilon: 0.5,
            epochs: 30,
            ..TrainConfig::default()
        };
        let (q, _) = train_tabular(&s, 2, &reward, &train).unwrap();
        let bound = reward.movement_q_bound();
        assert!(q.iter().all(|(_, _, v)| v.abs() <= bound));
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let closes: Vec<f64> = (0..120).map(|i| 20.0 + ((i * 7) % 5) as f64).collect();
        let s = series_from_closes(&closes);
        let reward = RewardConfig::movement(1.0, 0.1, 0.95);
        let train = TrainConfig {
            epsilon: 0.0,
            epochs: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let (a, _) = train_tabular(&s, 2, &reward, &train).unwrap();
        let (b, _) = train_tabular(&s, 2, &reward, &train).unwrap();
        assert_eq!(a, b);
        let other = TrainConfig { seed: 6, ..train };
        let (c, _) = train_tabular(&s, 2, &reward, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_epochs_leaves_table_empty() {
        let s = alternating(10);
        let train = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (q, log) = train_tabular(&s, 1, &RewardConfig::movement(1.0, 0.1, 0.9), &train).unwrap();
        assert!(log.is_empty());
        assert!(q.iter().all(|(_, _, v)| v == 0.0));
    }

    #[test]
    fn rejects_short_series_and_wrong_mode() {
        let s = alternating(3);
        let t = TrainConfig::default();
        assert!(matches!(
            train_tabular(&s, 2, &RewardConfig::movement(1.0, 0.1, 0.9), &t),
            Err(Error::Setup(_))
        ));
        assert!(matches!(
            train_tabular(&s, 0, &RewardConfig::window(1.0, 0.9), &t),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn epsilon_decay_schedule() {
        let t = TrainConfig {
            epsilon: 0.5,
            epsilon_floor: Some(0.01),
            epochs: 11,
            ..TrainConfig::default()
        };
        assert_eq!(t.epsilon_at(0), 0.5);
        assert!((t.epsilon_at(10) - 0.01).abs() < 1e-15);
        assert!(t.epsilon_at(5) < 0.5 && t.epsilon_at(5) > 0.01);
    }
}
