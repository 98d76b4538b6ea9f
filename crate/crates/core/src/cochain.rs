use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Real values on the oriented k-simplices of a complex.
#[derive(Clone, Debug, PartialEq)]
pub struct Cochain<T: Real> {
    pub degree: usize,
    pub values: DVector<T>,
}

impl<T: Real> Cochain<T> {
    pub fn new(degree: usize, values: DVector<T>) -> Self {
        Self { degree, values }
    }

    pub fn zeros(degree: usize, len: usize) -> Self {
        Self { degree, values: DVector::zeros(len) }
    }

    pub fn from_vec(degree: usize, values: Vec<T>) -> Self {
        Self { degree, values: DVector::from_vec(values) }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.to_f64().is_finite())
    }

    pub fn expect_degree(&self, degree: usize) -> Result<()> {
        if self.degree == degree {
            Ok(())
        } else {
            Err(Error::DegreeMismatch { expected: degree, got: self.degree })
        }
    }

    pub fn expect_len(&self, len: usize) -> Result<()> {
        if self.len() == len {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: len, got: self.len() })
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        other.expect_degree(self.degree)?;
        other.expect_len(self.len())?;
        Ok(Self::new(self.degree, &self.values + &other.values))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        other.expect_degree(self.degree)?;
        other.expect_len(self.len())?;
        Ok(Self::new(self.degree, &self.values - &other.values))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self::new(self.degree, &self.values * s)
    }

    pub fn to_f64(&self) -> Cochain<f64> {
        Cochain::new(self.degree, self.values.map(|v| v.to_f64()))
    }

    pub fn cast<U: Real>(&self) -> Cochain<U> {
        Cochain::new(self.degree, self.values.map(|v| U::of(v.to_f64())))
    }

    pub fn to_record(&self) -> CochainRecord {
        CochainRecord {
            degree: self.degree,
            complex_hash: None,
            values: self.values.iter().map(|v| v.to_f64()).collect(),
        }
    }
}

/// Serialized form: `{degree, complex_hash, values}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CochainRecord {
    pub degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complex_hash: Option<String>,
    pub values: Vec<f64>,
}

impl CochainRecord {
    pub fn to_cochain<T: Real>(&self) -> Cochain<T> {
        Cochain::from_vec(self.degree, self.values.iter().map(|&v| T::of(v)).collect())
    }

    pub fn with_hash(mut self, hash: impl Into<String>) -> Self {
        self.complex_hash = Some(hash.into());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_mismatch_is_reported() {
        let a = Cochain::<f64>::zeros(0, 3);
        let b = Cochain::<f64>::zeros(1, 3);
        assert!(matches!(a.add(&b), Err(Error::DegreeMismatch { expected: 0, got: 1 })));
    }

    #[test]
    fn record_round_trip() {
        let a = Cochain::from_vec(1, vec![1.0, -2.5, 3.0]);
        let rec = a.to_record().with_hash("abc");
        let json = serde_json::to_string(&rec).unwrap();
        let back: CochainRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_cochain::<f64>(), a);
        assert_eq!(back.complex_hash.as_deref(), Some("abc"));
    }
}
