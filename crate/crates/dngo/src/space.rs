//! Parameter spaces, observations, and datasets.
//!
//! All modeling code works in unit-hypercube coordinates; native coordinates
//! appear only at the evaluation boundary. `ParameterSpace` owns the affine
//! map between the two.

use crate::error::{Error, Result};

/// One bounded, continuous search dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// An ordered list of named, bounded, continuous dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    dims: Vec<Dimension>,
}

impl ParameterSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidParameter(
                "parameter space needs at least one dimension".into(),
            ));
        }
        for d in &dims {
            if !(d.lower < d.upper) {
                return Err(Error::InvalidParameter(format!(
                    "dimension '{}': lower {} must be strictly below upper {}",
                    d.name, d.lower, d.upper
                )));
            }
            if !d.lower.is_finite() || !d.upper.is_finite() {
                return Err(Error::NonFinite("parameter bounds"));
            }
        }
        Ok(Self { dims })
    }

    /// Convenience constructor from (name, lower, upper) triples.
    pub fn from_bounds(bounds: &[(&str, f64, f64)]) -> Result<Self> {
        Self::new(
            bounds
                .iter()
                .map(|(n, lo, hi)| Dimension {
                    name: (*n).to_string(),
                    lower: *lo,
                    upper: *hi,
                })
                .collect(),
        )
    }

    /// Input dimensionality K.
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    /// Map a native point into [0,1]^K. Out-of-bounds input is rejected, not
    /// clamped.
    pub fn scale_to_unit(&self, x_native: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x_native)?;
        self.dims
            .iter()
            .zip(x_native)
            .enumerate()
            .map(|(i, (d, &v))| {
                if !(d.lower..=d.upper).contains(&v) {
                    return Err(Error::OutOfBounds {
                        index: i,
                        value: v,
                        lower: d.lower,
                        upper: d.upper,
                    });
                }
                Ok((v - d.lower) / (d.upper - d.lower))
            })
            .collect()
    }

    /// Exact inverse of `scale_to_unit`.
    pub fn unscale(&self, x_unit: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x_unit)?;
        self.dims
            .iter()
            .zip(x_unit)
            .enumerate()
            .map(|(i, (d, &u))| {
                if !(0.0..=1.0).contains(&u) {
                    return Err(Error::OutOfBounds {
                        index: i,
                        value: u,
                        lower: 0.0,
                        upper: 1.0,
                    });
                }
                Ok(d.lower + u * (d.upper - d.lower))
            })
            .collect()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.len() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.len(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Result of evaluating the objective at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Value(f64),
    Invalid,
}

/// A single evaluated point in unit coordinates. Invalid observations carry
/// no objective value even if the evaluator returned one.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    x_unit: Vec<f64>,
    y: Option<f64>,
}

impl Observation {
    pub fn valid(x_unit: Vec<f64>, y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::NonFinite("observation target"));
        }
        Self::check_unit(&x_unit)?;
        Ok(Self { x_unit, y: Some(y) })
    }

    pub fn invalid(x_unit: Vec<f64>) -> Result<Self> {
        Self::check_unit(&x_unit)?;
        Ok(Self { x_unit, y: None })
    }

    fn check_unit(x: &[f64]) -> Result<()> {
        for (i, &u) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::OutOfBounds {
                    index: i,
                    value: u,
                    lower: 0.0,
                    upper: 1.0,
                });
            }
        }
        Ok(())
    }

    pub fn x_unit(&self) -> &[f64] {
        &self.x_unit
    }

    pub fn y(&self) -> Option<f64> {
        self.y
    }

    pub fn is_valid(&self) -> bool {
        self.y.is_some()
    }
}

/// The full set of observations D, with the valid/invalid partition V and I.
/// Duplicates are legal; the dataset is a multiset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, obs: Observation) {
        self.observations.push(obs);
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn all(&self) -> &[Observation] {
        &self.observations
    }

    /// The valid subset V, in insertion order.
    pub fn valid(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter().filter(|o| o.is_valid())
    }

    /// The invalid subset I, in insertion order.
    pub fn invalid(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter().filter(|o| !o.is_valid())
    }

    pub fn n_valid(&self) -> usize {
        self.valid().count()
    }

    pub fn n_invalid(&self) -> usize {
        self.invalid().count()
    }

    /// Index and observation of the lowest valid target; ties go to the
    /// earliest observation.
    pub fn best_valid(&self) -> Option<(usize, &Observation)> {
        let mut best: Option<(usize, &Observation)> = None;
        for (i, o) in self.observations.iter().enumerate() {
            if let Some(y) = o.y() {
                match best {
                    Some((_, b)) if b.y().unwrap() <= y => {}
                    _ => best = Some((i, o)),
                }
            }
        }
        best
    }
}
