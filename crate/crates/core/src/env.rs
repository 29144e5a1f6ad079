//! The buy-or-wait decision process.
//!
//! Two reward modes share the same action set:
//!
//! * **Window mode** ([`WindowEnv`]): an episode is one [`TimeWindow`]. Buying on
//!   day `t` pays `anchor - close_t` and ends the episode. Waiting pays nothing,
//!   except on the last day, where waiting triggers a forced purchase that also
//!   pays `-forced_penalty`.
//! * **Movement mode** ([`MovementEnv`]): the agent walks a continuous stream of
//!   days. Buying pays `+r` when tomorrow's close is above today's and `-r`
//!   otherwise; waiting pays `-c`. Buying does not end the stream.
//!
//! History rows are drawn from the parent series, so a state at the start of a
//! window can look back across the previous window.

use crate::error::{Error, Result};
use crate::market_data::{Movement, OhlcBar, PriceSeries, TimeWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Buy,
    Wait,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Buy, Action::Wait];

    /// Buy is 0, Wait is 1.
    pub fn index(self) -> usize {
        match self {
            Action::Buy => 0,
            Action::Wait => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Buy => "buy",
            Action::Wait => "wait",
        }
    }

    pub fn from_name(s: &str) -> Option<Action> {
        match s {
            "buy" => Some(Action::Buy),
            "wait" => Some(Action::Wait),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    Movement,
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    /// Magnitude of the movement-mode buy reward.
    pub r: f64,
    /// Movement-mode cost of waiting one day.
    pub c: f64,
    /// Window-mode penalty, in price units, added to a forced purchase.
    pub forced_penalty: f64,
    pub gamma: f64,
    pub mode: RewardMode,
}

impl RewardConfig {
    pub fn movement(r: f64, c: f64, gamma: f64) -> Self {
        Self {
            r,
            c,
            forced_penalty: 0.0,
            gamma,
            mode: RewardMode::Movement,
        }
    }

    pub fn window(forced_penalty: f64, gamma: f64) -> Self {
        Self {
            r: 1.0,
            c: 0.0,
            forced_penalty,
            gamma,
            mode: RewardMode::Window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(Error::Config(format!("r must be positive, got {}", self.r)));
        }
        if !(self.c >= 0.0) {
            return Err(Error::Config(format!("c must be non-negative, got {}", self.c)));
        }
        if !(self.forced_penalty >= 0.0) {
            return Err(Error::Config(format!(
                "forced penalty must be non-negative, got {}",
                self.forced_penalty
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Bound on any Q-value reachable under movement-mode rewards when `gamma < 1`.
    pub fn movement_q_bound(&self) -> f64 {
        self.r.max(self.c) / (1.0 - self.gamma)
    }
}

/// The trailing `h + 1` daily movements, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MovementState {
    trends: Vec<Movement>,
}

impl MovementState {
    pub fn new(trends: Vec<Movement>) -> Self {
        assert!(!trends.is_empty(), "a movement state holds at least the current day");
        Self { trends }
    }

    pub fn from_bars(bars: &[OhlcBar]) -> Self {
        Self::new(bars.iter().map(OhlcBar::movement).collect())
    }

    pub fn from_price_state(state: &PriceState) -> Self {
        Self::new(
            state
                .history
                .iter()
                .map(|row| {
                    if row[3] >= row[0] {
                        Movement::Up
                    } else {
                        Movement::Down
                    }
                })
                .collect(),
        )
    }

    pub fn trends(&self) -> &[Movement] {
        &self.trends
    }

    /// Number of previous days included (`h`).
    pub fn history(&self) -> usize {
        self.trends.len() - 1
    }

    /// Dense index in `0..2^(h+1)`; the oldest day is the most significant bit.
    pub fn index(&self) -> usize {
        self.trends
            .iter()
            .fold(0, |acc, m| (acc << 1) | usize::from(*m == Movement::Up))
    }

    pub fn from_index(index: usize, h: usize) -> Self {
        let n = h + 1;
        Self::new(
            (0..n)
                .map(|k| {
                    if (index >> (n - 1 - k)) & 1 == 1 {
                        Movement::Up
                    } else {
                        Movement::Down
                    }
                })
                .collect(),
        )
    }

    /// `1` for Up, `0` for Down, oldest day first.
    pub fn bits(&self) -> String {
        self.trends
            .iter()
            .map(|m| if *m == Movement::Up { '1' } else { '0' })
            .collect()
    }

    pub fn from_bits(bits: &str) -> Option<Self> {
        if bits.is_empty() {
            return None;
        }
        bits.chars()
            .map(|ch| match ch {
                '1' => Some(Movement::Up),
                '0' => Some(Movement::Down),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Self::new)
    }
}

/// Price history seen on one day of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceState {
    /// `h + 1` rows of `[open, high, low, close]`, oldest first; the last row is today.
    history: Vec<[f64; 4]>,
    day: usize,
    window_len: usize,
    anchor: f64,
}

impl PriceState {
    pub fn new(history: Vec<[f64; 4]>, day: usize, window_len: usize, anchor: f64) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::Usage("price state needs at least one day".into()));
        }
        if window_len < 2 || day >= window_len {
            return Err(Error::Usage(format!(
                "day {day} outside a window of length {window_len}"
            )));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(anchor) || !history.iter().flatten().all(|&v| positive(v)) {
            return Err(Error::Usage("price state holds a non-positive price".into()));
        }
        Ok(Self {
            history,
            day,
            window_len,
            anchor,
        })
    }

    pub fn history(&self) -> &[[f64; 4]] {
        &self.history
    }

    pub fn day(&self) -> usize {
        self.day
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn close(&self) -> f64 {
        self.history[self.history.len() - 1][3]
    }

    pub fn is_last_day(&self) -> bool {
        self.day + 1 == self.window_len
    }

    /// Same state with every price multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            history: self
                .history
                .iter()
                .map(|row| row.map(|v| v * k))
                .collect(),
            day: self.day,
            window_len: self.window_len,
            anchor: self.anchor * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    /// State after the step. On a terminal step this is the state the episode ended in.
    pub next_state: S,
    pub reward: f64,
    pub done: bool,
    pub forced: bool,
}

/// Window-mode reward for buying at `close` against `anchor`.
pub fn purchase_reward(anchor: f64, close: f64) -> f64 {
    -(close - anchor)
}

fn history_rows(series: &PriceSeries, index: usize, h: usize) -> Vec<[f64; 4]> {
    series.bars()[index - h..=index]
        .iter()
        .map(OhlcBar::prices)
        .collect()
}

/// One episode over a single time window.
#[derive(Debug, Clone)]
pub struct WindowEnv<'a> {
    series: &'a PriceSeries,
    start: usize,
    window_len: usize,
    h: usize,
    day: usize,
    anchor: f64,
    config: RewardConfig,
    done: bool,
}

impl<'a> WindowEnv<'a> {
    /// Positions the episode at day 0 of `window`. The window's start index in
    /// `parent` must leave room for `h` earlier bars.
    pub fn reset(
        window: &TimeWindow,
        parent: &'a PriceSeries,
        h: usize,
        config: RewardConfig,
    ) -> Result<(Self, PriceState)> {
        let start = window.start();
        if start < h {
            return Err(Error::Setup(format!(
                "window at index {start} has fewer than {h} preceding bars"
            )));
        }
        if start + window.len() > parent.len() || window.len() < 2 {
            return Err(Error::Setup(format!(
                "window [{start}, {}) does not fit a parent series of {} bars",
                start + window.len(),
                parent.len()
            )));
        }
        let env = Self {
            series: parent,
            start,
            window_len: window.len(),
            h,
            day: 0,
            anchor: parent.bars()[start].close,
            config,
            done: false,
        };
        let state = env.state();
        Ok((env, state))
    }

    pub fn state(&self) -> PriceState {
        PriceState {
            history: history_rows(self.series, self.start + self.day, self.h),
            day: self.day,
            window_len: self.window_len,
            anchor: self.anchor,
        }
    }

    pub fn day(&self) -> usize {
        self.day
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: Action) -> Result<Transition<PriceState>> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode".into()));
        }
        let close = self.series.bars()[self.start + self.day].close;
        let last = self.day + 1 == self.window_len;
        match (action, last) {
            (Action::Buy, _) => {
                self.done = true;
                Ok(Transition {
                    next_state: self.state(),
                    reward: purchase_reward(self.anchor, close),
                    done: true,
                    forced: false,
                })
            }
            (Action::Wait, true) => {
                self.done = true;
                Ok(Transition {
                    next_state: self.state(),
                    reward: purchase_reward(self.anchor, close) - self.config.forced_penalty,
                    done: true,
                    forced: true,
                })
            }
            (Action::Wait, false) => {
                self.day += 1;
                Ok(Transition {
                    next_state: self.state(),
                    reward: 0.0,
                    done: false,
                    forced: false,
                })
            }
        }
    }
}

/// Day-by-day walk over a continuous stream of bars.
#[derive(Debug, Clone)]
pub struct MovementEnv<'a> {
    series: &'a PriceSeries,
    h: usize,
    t: usize,
    config: RewardConfig,
    done: bool,
}

impl<'a> MovementEnv<'a> {
    /// Starts at the first day with `h` predecessors. The last decision day is
    /// the second-to-last bar, since a buy is judged by the next day's close.
    pub fn reset(
        series: &'a PriceSeries,
        h: usize,
        config: RewardConfig,
    ) -> Result<(Self, MovementState)> {
        if series.len() < h + 2 {
            return Err(Error::Setup(format!(
                "movement stream needs at least {} bars, got {}",
                h + 2,
                series.len()
            )));
        }
        let env = Self {
            series,
            h,
            t: h,
            config,
            done: false,
        };
        let state = env.state();
        Ok((env, state))
    }

    pub fn state(&self) -> MovementState {
        MovementState::from_bars(&self.series.bars()[self.t - self.h..=self.t])
    }

    pub fn index(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step(&mut self, action: Action) -> Result<Transition<MovementState>> {
        if self.done {
            return Err(Error::Usage("step called past the end of the stream".into()));
        }
        let bars = self.series.bars();
        let reward = match action {
            Action::Buy => {
                if bars[self.t + 1].close > bars[self.t].close {
                    self.config.r
                } else {
                    -self.config.r
                }
            }
            Action::Wait => -self.config.c,
        };
        self.t += 1;
        self.done = self.t + 1 >= bars.len();
        Ok(Transition {
            next_state: self.state(),
            reward,
            done: self.done,
            forced: false,
        })
    }
}
