use rand::Rng;
use serde_json::Value;

use crate::dsl::{Assignment, TunableDecl, TunableKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpaceError {
    #[error("no value for `{0}`")]
    Missing(String),
    #[error("value {value} for `{path}` is outside its declared range")]
    OutOfBounds { path: String, value: Value },
    #[error("`{0}` is not a dimension of this space")]
    UnknownPath(String),
    #[error("encoded vector has length {actual}, expected {expected}")]
    Length { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dimension {
    pub path: String,
    pub kind: TunableKind,
    /// First coordinate of this dimension in the encoded vector.
    pub offset: usize,
}

impl Dimension {
    /// Encoded width: one coordinate, or one per categorical choice.
    pub fn width(&self) -> usize {
        match &self.kind {
            TunableKind::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }
}

/// The tunable dimensions of a spec, in declaration order, with their
/// encoding into the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
    encoded_len: usize,
}

impl SearchSpace {
    pub fn new(tunables: &[TunableDecl]) -> Self {
        let mut offset = 0;
        let dims = tunables
            .iter()
            .map(|t| {
                let d = Dimension { path: t.path.clone(), kind: t.kind.clone(), offset };
                offset += d.width();
                d
            })
            .collect();
        Self { dims, encoded_len: offset }
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    /// Number of tunables.
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Length of an encoded vector.
    pub fn encoded_len(&self) -> usize {
        self.encoded_len
    }

    /// Checks that `a` sets exactly this space's paths to legal values.
    pub fn check(&self, a: &Assignment) -> Result<(), SpaceError> {
        if let Some(extra) = a.paths().find(|p| !self.dims.iter().any(|d| d.path == *p)) {
            return Err(SpaceError::UnknownPath(extra.to_string()));
        }
        for d in &self.dims {
            let v = a.get(&d.path).ok_or_else(|| SpaceError::Missing(d.path.clone()))?;
            if !d.kind.admits(v) {
                return Err(SpaceError::OutOfBounds { path: d.path.clone(), value: v.clone() });
            }
        }
        Ok(())
    }

    pub fn encode(&self, a: &Assignment) -> Result<Vec<f64>, SpaceError> {
        self.check(a)?;
        let mut out = vec![0.0; self.encoded_len];
        for d in &self.dims {
            let v = a.get(&d.path).expect("checked");
            match &d.kind {
                TunableKind::Float { low, high } => {
                    out[d.offset] = unit(v.as_f64().expect("checked"), *low, *high);
                }
                TunableKind::Int { low, high } => {
                    out[d.offset] = unit(v.as_i64().expect("checked") as f64, *low as f64, *high as f64);
                }
                TunableKind::Categorical { choices } => {
                    let i = choices.iter().position(|c| c == v).expect("checked");
                    out[d.offset + i] = 1.0;
                }
            }
        }
        Ok(out)
    }

    /// Clamps to the unit cube, rounds integers half away from zero and
    /// takes the argmax of each one-hot block (first choice on ties).
    pub fn decode(&self, v: &[f64]) -> Result<Assignment, SpaceError> {
        if v.len() != self.encoded_len {
            return Err(SpaceError::Length { expected: self.encoded_len, actual: v.len() });
        }
        let mut a = Assignment::new();
        for d in &self.dims {
            let value = match &d.kind {
                TunableKind::Float { low, high } => {
                    let x = low + clamp01(v[d.offset]) * (high - low);
                    Value::from(x.clamp(*low, *high))
                }
                TunableKind::Int { low, high } => {
                    let x = *low as f64 + clamp01(v[d.offset]) * (*high - *low) as f64;
                    Value::from((x.round() as i64).clamp(*low, *high))
                }
                TunableKind::Categorical { choices } => {
                    let block = &v[d.offset..d.offset + choices.len()];
                    let mut best = 0;
                    for (i, x) in block.iter().enumerate() {
                        if clamp01(*x) > clamp01(block[best]) {
                            best = i;
                        }
                    }
                    choices[best].clone()
                }
            };
            a.insert(d.path.clone(), value);
        }
        Ok(a)
    }

    /// A point drawn uniformly per dimension: continuous for floats,
    /// inclusive integers, equiprobable choices.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        let mut a = Assignment::new();
        for d in &self.dims {
            let value = match &d.kind {
                TunableKind::Float { low, high } => Value::from(rng.random_range(*low..=*high)),
                TunableKind::Int { low, high } => Value::from(rng.random_range(*low..=*high)),
                TunableKind::Categorical { choices } => choices[rng.random_range(0..choices.len())].clone(),
            };
            a.insert(d.path.clone(), value);
        }
        a
    }

    /// Maps an arbitrary cube point to the encoding of the assignment it
    /// decodes to, so the surrogate only ever sees feasible points.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let a = self.decode(v).expect("caller passes encoded_len coordinates");
        self.encode(&a).expect("decode yields valid assignments")
    }
}

fn unit(x: f64, low: f64, high: f64) -> f64 {
    if high > low {
        clamp01((x - low) / (high - low))
    } else {
        0.0
    }
}

fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}
