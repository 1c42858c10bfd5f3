//! A small stochastic process with known structure: a fixed backbone,
//! optional activities inserted with given probabilities, and a repeatable
//! loop segment. Expected statistics are computed exactly from the spec.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::Trace;

#[derive(Debug, Error, PartialEq)]
pub enum ToyError {
    #[error("invalid toy process: {0}")]
    InvalidSpec(String),
}

/// An activity inserted with `probability` at one insertion point drawn
/// uniformly from `first_point..=last_point`. Point `i` lies just before
/// backbone activity `i`; point `backbone.len()` is after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionalActivity {
    pub name: String,
    pub first_point: usize,
    pub last_point: usize,
    pub probability: f64,
}

/// After backbone activity `after`, `segment` is repeated while a coin with
/// `probability` comes up heads, at most `max_repeats` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSpec {
    pub after: usize,
    pub segment: Vec<String>,
    pub probability: f64,
    pub max_repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyProcessSpec {
    pub backbone: Vec<String>,
    #[serde(default)]
    pub optional_activities: Vec<OptionalActivity>,
    #[serde(default)]
    pub loop_segment: Option<LoopSpec>,
    #[serde(default)]
    pub seed: u64,
}

/// Simulated traces and the exact statistics of the generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySimulation {
    pub traces: Vec<Trace>,
    pub expected_length: f64,
    /// Expected share of each activity among all events.
    pub expected_distribution: BTreeMap<String, f64>,
}

impl ToyProcessSpec {
    /// Six backbone activities, two optional activities at 0.3 and a
    /// two-activity rework loop at 0.2: nine activity types.
    pub fn toy6(seed: u64) -> Self {
        let s = |v: &str| v.to_string();
        Self {
            backbone: ["Register", "Triage", "Examine", "Diagnose", "Treat", "Discharge"]
                .map(s)
                .to_vec(),
            optional_activities: vec![
                OptionalActivity {
                    name: s("Lab Test"),
                    first_point: 2,
                    last_point: 3,
                    probability: 0.3,
                },
                OptionalActivity {
                    name: s("Imaging"),
                    first_point: 3,
                    last_point: 4,
                    probability: 0.3,
                },
            ],
            loop_segment: Some(LoopSpec {
                after: 3,
                segment: vec![s("Review"), s("Diagnose")],
                probability: 0.2,
                max_repeats: 3,
            }),
            seed,
        }
    }

    /// The backbone only, no optional activities or loops.
    pub fn backbone_only(backbone: &[&str], seed: u64) -> Self {
        Self {
            backbone: backbone.iter().map(|s| s.to_string()).collect(),
            optional_activities: Vec::new(),
            loop_segment: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ToyError> {
        let bad = |m: String| Err(ToyError::InvalidSpec(m));
        if self.backbone.is_empty() {
            return bad("backbone must not be empty".into());
        }
        let names = self
            .backbone
            .iter()
            .chain(self.optional_activities.iter().map(|o| &o.name))
            .chain(self.loop_segment.iter().flat_map(|l| &l.segment));
        if names.into_iter().any(|n| n.trim().is_empty()) {
            return bad("activity names must not be blank".into());
        }
        for o in &self.optional_activities {
            if !(0.0..=1.0).contains(&o.probability) {
                return bad(format!("probability of `{}` outside [0, 1]", o.name));
            }
            if o.first_point > o.last_point || o.last_point > self.backbone.len() {
                return bad(format!("insertion range of `{}` is not within 0..={}", o.name, self.backbone.len()));
            }
        }
        if let Some(l) = &self.loop_segment {
            if !(0.0..=1.0).contains(&l.probability) {
                return bad("loop probability outside [0, 1]".into());
            }
            if l.after >= self.backbone.len() {
                return bad("loop anchor outside the backbone".into());
            }
            if l.segment.is_empty() {
                return bad("loop segment must not be empty".into());
            }
        }
        Ok(())
    }

    /// All activity names in first-mention order.
    pub fn activities(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let all = self
            .backbone
            .iter()
            .chain(self.optional_activities.iter().map(|o| &o.name))
            .chain(self.loop_segment.iter().flat_map(|l| &l.segment));
        for name in all {
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
        out
    }

    /// Expected number of loop repetitions.
    fn expected_repeats(&self) -> f64 {
        self.loop_segment.as_ref().map_or(0.0, |l| {
            (1..=l.max_repeats as i32).map(|r| l.probability.powi(r)).sum()
        })
    }

    pub fn expected_length(&self) -> f64 {
        let optional: f64 = self.optional_activities.iter().map(|o| o.probability).sum();
        let looped = self.loop_segment.as_ref().map_or(0.0, |l| l.segment.len() as f64);
        self.backbone.len() as f64 + optional + looped * self.expected_repeats()
    }

    /// Expected count of each activity per trace, divided by the expected length.
    pub fn expected_distribution(&self) -> BTreeMap<String, f64> {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for b in &self.backbone {
            *counts.entry(b.clone()).or_default() += 1.0;
        }
        for o in &self.optional_activities {
            *counts.entry(o.name.clone()).or_default() += o.probability;
        }
        let repeats = self.expected_repeats();
        if let Some(l) = &self.loop_segment {
            for a in &l.segment {
                *counts.entry(a.clone()).or_default() += repeats;
            }
        }
        let total = self.expected_length();
        counts.into_iter().map(|(k, v)| (k, v / total)).collect()
    }

    fn sample_trace<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<String> {
        let n = self.backbone.len();
        let mut at_point: Vec<Vec<&str>> = vec![Vec::new(); n + 1];
        for o in &self.optional_activities {
            // Draw the point first so the random stream does not depend on the outcome.
            let point = rng.gen_range(o.first_point..=o.last_point);
            if rng.gen::<f64>() < o.probability {
                at_point[point].push(&o.name);
            }
        }
        let mut out = Vec::new();
        for (i, b) in self.backbone.iter().enumerate() {
            out.extend(at_point[i].iter().map(|s| s.to_string()));
            out.push(b.clone());
            if let Some(l) = self.loop_segment.as_ref().filter(|l| l.after == i) {
                let mut r = 0;
                while r < l.max_repeats && rng.gen::<f64>() < l.probability {
                    out.extend(l.segment.iter().cloned());
                    r += 1;
                }
            }
        }
        out.extend(at_point[n].iter().map(|s| s.to_string()));
        out
    }

    /// Whether the process can produce `trace`.
    pub fn accepts(&self, trace: &[String]) -> bool {
        self.accepts_from(trace, 0, 0, 0, None)
    }

    /// Backtracking match. `point` is the current insertion point, `used` the
    /// optional activities already placed, `last_here` the highest-indexed
    /// optional placed at this point (same-point optionals keep spec order).
    fn accepts_from(&self, trace: &[String], point: usize, pos: usize, used: u64, last_here: Option<usize>) -> bool {
        let n = self.backbone.len();
        for (j, o) in self.optional_activities.iter().enumerate() {
            let free = used & (1 << j) == 0 && last_here.is_none_or(|k| j > k);
            if free
                && o.probability > 0.0
                && (o.first_point..=o.last_point).contains(&point)
                && trace.get(pos) == Some(&o.name)
                && self.accepts_from(trace, point, pos + 1, used | (1 << j), Some(j))
            {
                return true;
            }
        }
        if point == n {
            return pos == trace.len();
        }
        if trace.get(pos) != Some(&self.backbone[point]) {
            return false;
        }
        let mut next = pos + 1;
        if let Some(l) = self.loop_segment.as_ref().filter(|l| l.after == point) {
            let max = if l.probability > 0.0 { l.max_repeats } else { 0 };
            for r in 0..=max {
                if r > 0 {
                    let seg = &l.segment;
                    if trace.len() < next + seg.len() || trace[next..next + seg.len()] != seg[..] {
                        return false;
                    }
                    next += seg.len();
                }
                if self.accepts_from(trace, point + 1, next, used, None) {
                    return true;
                }
            }
            return false;
        }
        self.accepts_from(trace, point + 1, next, used, None)
    }
}

/// Sample `n_traces` traces with the spec's seed.
pub fn simulate(spec: &ToyProcessSpec, n_traces: usize) -> Result<ToySimulation, ToyError> {
    spec.validate()?;
    if n_traces == 0 {
        return Err(ToyError::InvalidSpec("need at least one trace".into()));
    }
    if spec.optional_activities.len() > 64 {
        return Err(ToyError::InvalidSpec("at most 64 optional activities".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = n_traces.to_string().len();
    let traces = (0..n_traces)
        .map(|i| Trace::new(format!("case_{:0width$}", i + 1), spec.sample_trace(&mut rng)))
        .collect();
    Ok(ToySimulation {
        traces,
        expected_length: spec.expected_length(),
        expected_distribution: spec.expected_distribution(),
    })
}
