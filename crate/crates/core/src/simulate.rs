//! Path simulation for time-changed birth-death processes with catastrophes.
//!
//! Time-changed paths are semi-Markov: the embedded jump chain is that of the
//! underlying Markov chain, and each sojourn is a (tempered) Mittag-Leffler variate
//! with the state's total rate. Paths are stored as event lists and inspected with the
//! methods on [`SamplePath`].

use crate::analytic::LinearParams;
use crate::error::{invalid, Error, Result};
use crate::markov::{ModelSpec, TimeChange};
use crate::randgen::{sample_ml, sample_tempered_ml, RngStream};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// State index of the absorbing catastrophe state in modified paths.
pub const SENTINEL: i64 = -1;
/// Event budget per path; exceeding it is an error rather than an unbounded loop.
pub const MAX_EVENTS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Birth,
    Death,
    Catastrophe,
    /// Catastrophe of a modified path, into [`SENTINEL`].
    Absorbed,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Birth => "birth",
            EventKind::Death => "death",
            EventKind::Catastrophe => "catastrophe",
            EventKind::Absorbed => "absorbed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub state: i64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub initial: i64,
    /// Observation horizon; events after it are not generated.
    pub t_max: f64,
    pub events: Vec<Event>,
}

/// What to read off a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    FirstVisitZero,
    FirstCatastrophe,
    FirstEffectiveCatastrophe,
    StateAt(f64),
    SojournsIn(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extracted {
    /// Event time, `None` when censored at the horizon.
    Time(Option<f64>),
    /// State at a time, `None` past the horizon.
    State(Option<i64>),
    /// Completed sojourns.
    Sojourns(Vec<f64>),
}

impl SamplePath {
    fn new(initial: i64, t_max: f64) -> Self {
        Self {
            initial,
            t_max,
            events: Vec::with_capacity(16),
        }
    }

    /// Pairs (state before, event).
    fn transitions(&self) -> impl Iterator<Item = (i64, &Event)> {
        let mut prev = self.initial;
        self.events.iter().map(move |e| {
            let before = prev;
            prev = e.state;
            (before, e)
        })
    }

    pub fn first_visit_zero(&self) -> Option<f64> {
        if self.initial == 0 {
            return Some(0.0);
        }
        self.events.iter().find(|e| e.state == 0).map(|e| e.time)
    }

    pub fn first_catastrophe(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| matches!(e.kind, EventKind::Catastrophe | EventKind::Absorbed))
            .map(|e| e.time)
    }

    /// First catastrophe that strikes a strictly positive state.
    pub fn first_effective_catastrophe(&self) -> Option<f64> {
        self.transitions()
            .find(|(before, e)| {
                *before > 0 && matches!(e.kind, EventKind::Catastrophe | EventKind::Absorbed)
            })
            .map(|(_, e)| e.time)
    }

    pub fn state_at(&self, t: f64) -> Option<i64> {
        if !(t >= 0.0) || t > self.t_max {
            return None;
        }
        let k = self.events.partition_point(|e| e.time <= t);
        Some(if k == 0 {
            self.initial
        } else {
            self.events[k - 1].state
        })
    }

    /// Lengths of the completed visits to `n`; a visit still running at the horizon is left out.
    pub fn sojourns_in(&self, n: i64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut entered = (self.initial == n).then_some(0.0);
        for (before, e) in self.transitions() {
            // A catastrophe at zero leaves the state unchanged and does not end the visit.
            if before == e.state {
                continue;
            }
            if let Some(t0) = entered.take() {
                out.push(e.time - t0);
            }
            if e.state == n {
                entered = Some(e.time);
            }
        }
        out
    }

    pub fn extract(&self, what: Statistic) -> Extracted {
        match what {
            Statistic::FirstVisitZero => Extracted::Time(self.first_visit_zero()),
            Statistic::FirstCatastrophe => Extracted::Time(self.first_catastrophe()),
            Statistic::FirstEffectiveCatastrophe => {
                Extracted::Time(self.first_effective_catastrophe())
            }
            Statistic::StateAt(t) => Extracted::State(self.state_at(t)),
            Statistic::SojournsIn(n) => Extracted::Sojourns(self.sojourns_in(n)),
        }
    }
}

pub fn extract(path: &SamplePath, what: Statistic) -> Extracted {
    path.extract(what)
}

fn check_horizon(t_max: f64) -> Result<()> {
    if !(t_max > 0.0) {
        return Err(invalid(format!("t_max = {t_max}")));
    }
    Ok(())
}

fn push_event(path: &mut SamplePath, e: Event) -> Result<()> {
    if path.events.len() >= MAX_EVENTS {
        return Err(Error::Numerical(format!(
            "path exceeded {MAX_EVENTS} events before t_max = {}",
            path.t_max
        )));
    }
    path.events.push(e);
    Ok(())
}

/// The embedded jump: birth if U < λ/r, death else if U < (λ+μ)/r, otherwise catastrophe.
fn embedded_jump(birth: f64, death: f64, total: f64, u: f64) -> EventKind {
    if u < birth / total {
        EventKind::Birth
    } else if u < (birth + death) / total {
        EventKind::Death
    } else {
        EventKind::Catastrophe
    }
}

fn linear_path<S>(p: &LinearParams, m0: u64, t_max: f64, rng: &mut RngStream, mut sojourn: S) -> Result<SamplePath>
where
    S: FnMut(f64, &mut RngStream) -> Result<f64>,
{
    p.validate()?;
    check_horizon(t_max)?;
    if m0 == 0 {
        return Err(invalid("initial state must be at least 1"));
    }
    let mut path = SamplePath::new(m0 as i64, t_max);
    let mut n = m0;
    let mut y = 0.0;
    while n > 0 {
        let (b, d) = (n as f64 * p.lambda, n as f64 * p.mu);
        let total = b + d + p.nu;
        y += sojourn(total, rng)?;
        if y > t_max {
            break;
        }
        let kind = embedded_jump(b, d, total, rng.uniform());
        n = match kind {
            EventKind::Birth => n + 1,
            EventKind::Death => n - 1,
            _ => 0,
        };
        push_event(
            &mut path,
            Event {
                time: y,
                state: n as i64,
                kind,
            },
        )?;
    }
    Ok(path)
}

/// Linear model under the inverse stable time change (θ = 0). Zero is absorbing.
pub fn simulate_tc_lbdpc(p: &LinearParams, m0: u64, t_max: f64, rng: &mut RngStream) -> Result<SamplePath> {
    if p.theta != 0.0 {
        return Err(invalid("expected θ = 0; use simulate_tempered_lbdpc"));
    }
    let alpha = p.alpha;
    linear_path(p, m0, t_max, rng, |rate, r| sample_ml(alpha, rate, r))
}

/// Linear model under the inverse tempered stable time change (θ > 0).
pub fn simulate_tempered_lbdpc(p: &LinearParams, m0: u64, t_max: f64, rng: &mut RngStream) -> Result<SamplePath> {
    if !(p.theta > 0.0) {
        return Err(invalid("expected θ > 0; use simulate_tc_lbdpc"));
    }
    let (alpha, theta) = (p.alpha, p.theta);
    linear_path(p, m0, t_max, rng, |rate, r| sample_tempered_ml(alpha, theta, rate, r))
}

/// Either linear simulator, chosen by θ.
pub fn simulate_linear(p: &LinearParams, m0: u64, t_max: f64, rng: &mut RngStream) -> Result<SamplePath> {
    if p.theta > 0.0 {
        simulate_tempered_lbdpc(p, m0, t_max, rng)
    } else {
        simulate_tc_lbdpc(p, m0, t_max, rng)
    }
}

/// Holding time in operational-time rate `rate` under the time change.
pub fn sample_sojourn(tc: TimeChange, rate: f64, rng: &mut RngStream) -> Result<f64> {
    match tc {
        TimeChange::None => sample_ml(1.0, rate, rng),
        TimeChange::InverseStable { alpha } => sample_ml(alpha, rate, rng),
        TimeChange::InverseTempered { alpha, theta } => sample_tempered_ml(alpha, theta, rate, rng),
    }
}

/// General rates. Catastrophes send positive states to 0; at 0 a catastrophe is a
/// recorded no-op. With `modified`, catastrophes from positive states end the path in
/// [`SENTINEL`] and state 0 has no catastrophe.
pub fn simulate_general(
    spec: &ModelSpec,
    tc: TimeChange,
    m0: u64,
    t_max: f64,
    rng: &mut RngStream,
    modified: bool,
) -> Result<SamplePath> {
    tc.validate()?;
    check_horizon(t_max)?;
    let rate_at_zero = spec.birth(0) + if modified { 0.0 } else { spec.nu };
    let absorbs = modified && spec.nu > 0.0;
    if t_max.is_infinite() && rate_at_zero > 0.0 && !absorbs {
        return Err(invalid("state 0 is left at a positive rate, so the path never ends; use a finite t_max"));
    }
    let mut path = SamplePath::new(m0 as i64, t_max);
    let mut n = m0;
    let mut y = 0.0;
    loop {
        let (b, d) = (spec.birth(n), spec.death(n));
        let c = if modified && n == 0 { 0.0 } else { spec.nu };
        let total = b + d + c;
        if total <= 0.0 {
            break;
        }
        y += sample_sojourn(tc, total, rng)?;
        if y > t_max {
            break;
        }
        let kind = embedded_jump(b, d, total, rng.uniform());
        let (state, kind) = match kind {
            EventKind::Birth => (n as i64 + 1, kind),
            EventKind::Death => (n as i64 - 1, kind),
            _ if modified => (SENTINEL, EventKind::Absorbed),
            _ => (0, kind),
        };
        push_event(&mut path, Event { time: y, state, kind })?;
        if state == SENTINEL {
            break;
        }
        n = state as u64;
    }
    Ok(path)
}

/// Writes `path_id,k,Y_k,state,kind`; row k = 0 is the initial state at time 0.
pub fn write_csv<W: Write>(paths: &[SamplePath], mut out: W) -> Result<()> {
    writeln!(out, "path_id,k,Y_k,state,kind")?;
    for (id, p) in paths.iter().enumerate() {
        writeln!(out, "{id},0,0,{},initial", p.initial)?;
        for (k, e) in p.events.iter().enumerate() {
            writeln!(out, "{id},{},{},{},{}", k + 1, e.time, e.state, e.kind.as_str())?;
        }
    }
    Ok(())
}
