//! Explanation-based surprise: fit every candidate explanation of an
//! observation and report how badly the best one fails.

mod fit;
mod hypothesis;
mod observe;

use serde::{Deserialize, Serialize};

pub use fit::Fit;
pub use hypothesis::{HiddenKind, HiddenObject, Hypothesis, IdentityBinding, ReasonerConfig};
pub use observe::{observe, Observed, Sighting, Track};

use crate::generator::Observation;

/// Scores at or below this are treated as fully explained.
pub const SURPRISE_EPSILON: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurpriseScore {
    pub s: f64,
    pub s_img: f64,
    pub s_dyn: f64,
    pub hypothesis: Hypothesis,
    pub hypotheses_tried: usize,
}

impl SurpriseScore {
    pub fn is_surprising(&self) -> bool {
        self.s > SURPRISE_EPSILON
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    /// Searches over hidden bodies and identities.
    Explainer,
    /// Only the literal reading of the observation.
    Predictive,
}

impl Agent {
    pub const ALL: [Agent; 2] = [Agent::Explainer, Agent::Predictive];

    pub fn name(self) -> &'static str {
        match self {
            Agent::Explainer => "explainer",
            Agent::Predictive => "predictive",
        }
    }

    pub fn parse(s: &str) -> Option<Agent> {
        Agent::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn score(self, obs: &Observation) -> SurpriseScore {
        self.score_with(obs, &ReasonerConfig::default())
    }

    pub fn score_with(self, obs: &Observation, config: &ReasonerConfig) -> SurpriseScore {
        match self {
            Agent::Explainer => surprise_with(obs, config),
            Agent::Predictive => predictive_surprise_with(obs, config),
        }
    }
}

pub fn enumerate_hypotheses(obs: &Observation) -> Vec<Hypothesis> {
    enumerate_hypotheses_with(obs, &ReasonerConfig::default())
}

pub fn enumerate_hypotheses_with(obs: &Observation, config: &ReasonerConfig) -> Vec<Hypothesis> {
    hypothesis::enumerate(&observe(obs), config)
}

pub fn fit_hypothesis(h: &Hypothesis, obs: &Observation) -> Fit {
    fit::fit(h, &observe(obs), obs, &ReasonerConfig::default())
}

pub fn surprise(obs: &Observation) -> SurpriseScore {
    surprise_with(obs, &ReasonerConfig::default())
}

pub fn surprise_with(obs: &Observation, config: &ReasonerConfig) -> SurpriseScore {
    let seen = observe(obs);
    let hyps = hypothesis::enumerate(&seen, config);
    let mut best: Option<(Fit, usize)> = None;
    let mut tried = 0;
    for (k, h) in hyps.iter().enumerate() {
        tried += 1;
        let f = fit::fit(h, &seen, obs, config);
        if best.as_ref().is_none_or(|(b, _)| f.surprise() < b.surprise()) {
            best = Some((f, k));
        }
        if best.as_ref().is_some_and(|(b, _)| b.surprise() == 0.0) {
            break;
        }
    }
    let (f, k) = best.expect("the empty hypothesis is always enumerated");
    SurpriseScore { s: f.surprise(), s_img: f.s_img, s_dyn: f.s_dyn, hypothesis: hyps[k].clone(), hypotheses_tried: tried }
}

pub fn predictive_surprise(obs: &Observation) -> SurpriseScore {
    predictive_surprise_with(obs, &ReasonerConfig::default())
}

pub fn predictive_surprise_with(obs: &Observation, config: &ReasonerConfig) -> SurpriseScore {
    let seen = observe(obs);
    let h = Hypothesis::empty();
    let f = fit::fit(&h, &seen, obs, config);
    SurpriseScore { s: f.surprise(), s_img: f.s_img, s_dyn: f.s_dyn, hypothesis: h, hypotheses_tried: 1 }
}
