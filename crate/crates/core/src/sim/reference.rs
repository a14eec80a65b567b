use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A time-indexed reference signal. Every variant holds its end values
/// outside its active interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reference {
    Constant {
        value: Vec<f64>,
    },
    /// Linear interpolation from `from` at `t0` to `to` at `t1`.
    Linear {
        from: Vec<f64>,
        to: Vec<f64>,
        t0: f64,
        t1: f64,
    },
    /// `center + amplitude·sin(2π·frequency·t + phase)`, element-wise.
    Sinusoid {
        center: Vec<f64>,
        amplitude: Vec<f64>,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise-linear through `(time, value)` pairs sorted by time.
    Waypoints {
        points: Vec<(f64, Vec<f64>)>,
    },
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> DVector<f64> {
    DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| x + (y - x) * s))
}

impl Reference {
    pub fn dim(&self) -> usize {
        match self {
            Reference::Constant { value } => value.len(),
            Reference::Linear { from, .. } => from.len(),
            Reference::Sinusoid { center, .. } => center.len(),
            Reference::Waypoints { points } => points.first().map_or(0, |p| p.1.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return invalid("reference has no components");
        }
        match self {
            Reference::Constant { .. } => {}
            Reference::Linear { to, t0, t1, .. } => {
                if to.len() != d || !(t1 > t0) {
                    return invalid("linear reference needs equal lengths and t1 > t0");
                }
            }
            Reference::Sinusoid { amplitude, frequency, .. } => {
                if amplitude.len() != d || !frequency.is_finite() {
                    return invalid("sinusoid reference needs matching amplitude and finite frequency");
                }
            }
            Reference::Waypoints { points } => {
                if points.iter().any(|p| p.1.len() != d) || points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return invalid("waypoints need equal lengths and strictly increasing times");
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            Reference::Constant { value } => DVector::from_column_slice(value),
            Reference::Linear { from, to, t0, t1 } => lerp(from, to, ((t - t0) / (t1 - t0)).clamp(0.0, 1.0)),
            Reference::Sinusoid {
                center,
                amplitude,
                frequency,
                phase,
            } => {
                let s = (2.0 * std::f64::consts::PI * frequency * t + phase).sin();
                DVector::from_iterator(center.len(), center.iter().zip(amplitude).map(|(c, a)| c + a * s))
            }
            Reference::Waypoints { points } => {
                let first = &points[0];
                if t <= first.0 {
                    return DVector::from_column_slice(&first.1);
                }
                for w in points.windows(2) {
                    if t <= w[1].0 {
                        return lerp(&w[0].1, &w[1].1, (t - w[0].0) / (w[1].0 - w[0].0));
                    }
                }
                DVector::from_column_slice(&points[points.len() - 1].1)
            }
        }
    }

    /// Adds a constant offset to every emitted value.
    pub fn shifted(&self, offset: &[f64]) -> Self {
        let add = |v: &[f64]| v.iter().zip(offset).map(|(a, b)| a + b).collect::<Vec<_>>();
        match self {
            Reference::Constant { value } => Reference::Constant { value: add(value) },
            Reference::Linear { from, to, t0, t1 } => Reference::Linear {
                from: add(from),
                to: add(to),
                t0: *t0,
                t1: *t1,
            },
            Reference::Sinusoid {
                center,
                amplitude,
                frequency,
                phase,
            } => Reference::Sinusoid {
                center: add(center),
                amplitude: amplitude.clone(),
                frequency: *frequency,
                phase: *phase,
            },
            Reference::Waypoints { points } => Reference::Waypoints {
                points: points.iter().map(|(t, v)| (*t, add(v))).collect(),
            },
        }
    }
}

/// A named interval of a program. `conflict` marks intervals in which the
/// references cannot all be met at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub label: String,
    pub t0: f64,
    pub t1: f64,
    pub conflict: bool,
}

/// One reference per task plus phase annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceProgram {
    pub references: Vec<Reference>,
    #[serde(default)]
    pub phases: Vec<Phase>,
}

impl ReferenceProgram {
    pub fn eval(&self, t: f64) -> Vec<DVector<f64>> {
        self.references.iter().map(|r| r.eval(t)).collect()
    }

    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        if dims.len() != self.references.len() {
            return invalid(format!("{} references for {} tasks", self.references.len(), dims.len()));
        }
        for (r, &d) in self.references.iter().zip(dims) {
            r.validate()?;
            if r.dim() != d {
                return invalid(format!("reference of length {} for a task of dimension {d}", r.dim()));
            }
        }
        Ok(())
    }

    pub fn has_conflict(&self) -> bool {
        self.phases.iter().any(|p| p.conflict)
    }

    pub fn phase_at(&self, t: f64) -> Option<&Phase> {
        self.phases.iter().find(|p| t >= p.t0 && t < p.t1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holds_outside_interval() {
        let r = Reference::Linear {
            from: vec![0.0],
            to: vec![1.0],
            t0: 1.0,
            t1: 3.0,
        };
        assert_eq!(r.eval(0.0)[0], 0.0);
        assert_eq!(r.eval(2.0)[0], 0.5);
        assert_eq!(r.eval(9.0)[0], 1.0);
        let w = Reference::Waypoints {
            points: vec![(0.0, vec![0.0, 0.0]), (1.0, vec![1.0, 2.0]), (2.0, vec![1.0, 0.0])],
        };
        assert_eq!(w.eval(1.5).as_slice(), &[1.0, 1.0]);
        assert_eq!(w.eval(5.0).as_slice(), &[1.0, 0.0]);
        assert_eq!(w.shifted(&[1.0, 1.0]).eval(-1.0).as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn validation() {
        let bad = Reference::Waypoints {
            points: vec![(1.0, vec![0.0]), (1.0, vec![1.0])],
        };
        assert!(bad.validate().is_err());
        let p = ReferenceProgram {
            references: vec![Reference::Constant { value: vec![0.0, 1.0] }],
            phases: vec![],
        };
        assert!(p.validate(&[2]).is_ok());
        assert!(p.validate(&[3]).is_err());
        assert!(!p.has_conflict());
    }
}
