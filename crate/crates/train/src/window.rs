use lact_core::AngularWindow;
use rand::Rng;

use crate::config::TrainConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum SpanRule {
    Fixed(f64),
    /// Every grid multiple in `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Spans with cumulative (normalized) weights.
    Weighted { spans: Vec<f64>, cumulative: Vec<f64> },
}

/// Draws random training windows `[alpha, alpha + span]` on the angle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSampler {
    rule: SpanRule,
    step_deg: f64,
}

impl WindowSampler {
    pub fn from_config(cfg: &TrainConfig, step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0 && step_deg.is_finite()) {
            return Err(Error::Config(format!("angle step must be positive, got {step_deg}")));
        }
        let rule = if let Some(span) = cfg.fixed_range {
            SpanRule::Fixed(span)
        } else if cfg.uniform_range_mode {
            SpanRule::Uniform {
                lo: AngularWindow::MIN_SPAN_DEG,
                hi: AngularWindow::MAX_SPAN_DEG,
            }
        } else {
            let total: f64 = cfg.range_weights.iter().sum();
            let mut acc = 0.0;
            let cumulative = cfg
                .range_weights
                .iter()
                .map(|w| {
                    acc += w / total;
                    acc
                })
                .collect();
            SpanRule::Weighted { spans: cfg.angular_ranges.clone(), cumulative }
        };
        Ok(Self { rule, step_deg })
    }

    pub fn fixed(span_deg: f64, step_deg: f64) -> Self {
        Self { rule: SpanRule::Fixed(span_deg), step_deg }
    }

    pub fn sample_span<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.rule {
            SpanRule::Fixed(s) => *s,
            SpanRule::Uniform { lo, hi } => {
                let k0 = (lo / self.step_deg).ceil() as u64;
                let k1 = (hi / self.step_deg).floor() as u64;
                rng.random_range(k0..=k1) as f64 * self.step_deg
            }
            SpanRule::Weighted { spans, cumulative } => {
                let u: f64 = rng.random();
                let i = cumulative.iter().position(|&c| u < c).unwrap_or(spans.len() - 1);
                spans[i]
            }
        }
    }

    /// Start angle uniform over the grid positions that keep the window
    /// inside `[0, 360]`.
    pub fn sample_start<R: Rng + ?Sized>(&self, span_deg: f64, rng: &mut R) -> f64 {
        let last = ((360.0 - span_deg) / self.step_deg + 1e-9).floor() as u64;
        rng.random_range(0..=last) as f64 * self.step_deg
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AngularWindow {
        let span = self.sample_span(rng);
        let alpha = self.sample_start(span, rng);
        AngularWindow::span(alpha, alpha + span).expect("sampled windows lie within [0, 360]")
    }
}
