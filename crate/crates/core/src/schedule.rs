//! Piecewise control schedule τ = ((ζ_1, β_1), …, (ζ_P, β_P)): the cost
//! Hamiltonian runs for ζ_j, then the mixer for β_j.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ControlSchedule {
    pairs: Vec<(f64, f64)>,
}

/// Which Hamiltonian drives a segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Cost,
    Mixer,
}

impl ControlSchedule {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        for &(z, b) in &pairs {
            for d in [z, b] {
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "durations must be finite and >= 0, got {d}"
                    )));
                }
            }
        }
        Ok(Self { pairs })
    }

    /// From the flat layout (ζ_1, β_1, ζ_2, β_2, …).
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if !values.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "flat schedule needs an even number of entries, got {}",
                values.len()
            )));
        }
        Self::new(values.chunks(2).map(|c| (c[0], c[1])).collect())
    }

    /// All 2P durations set to `value`.
    pub fn uniform(depth: usize, value: f64) -> Result<Self> {
        Self::new(vec![(value, value); depth])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.pairs.iter().flat_map(|&(z, b)| [z, b]).collect()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn depth(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of pairs with ζ + β > 0.
    pub fn effective_depth(&self) -> usize {
        self.pairs.iter().filter(|(z, b)| z + b > 0.0).count()
    }

    pub fn l1_norm(&self) -> f64 {
        self.pairs.iter().map(|(z, b)| z.abs() + b.abs()).sum()
    }

    pub fn total_duration(&self) -> f64 {
        self.pairs.iter().map(|(z, b)| z + b).sum()
    }

    /// Segments in execution order.
    pub fn segments(&self) -> impl Iterator<Item = (Segment, f64)> + '_ {
        self.pairs
            .iter()
            .flat_map(|&(z, b)| [(Segment::Cost, z), (Segment::Mixer, b)])
    }
}

impl TryFrom<Vec<f64>> for ControlSchedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_flat(&v)
    }
}

impl From<ControlSchedule> for Vec<f64> {
    fn from(s: ControlSchedule) -> Vec<f64> {
        s.to_flat()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip_and_segments() {
        let s = ControlSchedule::from_flat(&[2.1, 0.5, 2.1, 1.9]).unwrap();
        assert_eq!(s.depth(), 2);
        assert_eq!(s.to_flat(), vec![2.1, 0.5, 2.1, 1.9]);
        let segs: Vec<_> = s.segments().collect();
        assert_eq!(segs[0], (Segment::Cost, 2.1));
        assert_eq!(segs[3], (Segment::Mixer, 1.9));
        assert!((s.total_duration() - 6.6).abs() < 1e-12);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ControlSchedule>(&json).unwrap(), s);
    }

    #[test]
    fn effective_depth_counts_nonzero_pairs() {
        let s = ControlSchedule::new(vec![(0.0, 0.0), (0.3, 0.0), (0.0, 0.0)]).unwrap();
        assert_eq!(s.effective_depth(), 1);
        assert_eq!(s.l1_norm(), 0.3);
    }

    #[test]
    fn rejects_bad_durations() {
        assert!(ControlSchedule::new(vec![(-0.1, 0.0)]).is_err());
        assert!(ControlSchedule::new(vec![(f64::NAN, 0.0)]).is_err());
        assert!(ControlSchedule::from_flat(&[1.0, 2.0, 3.0]).is_err());
        assert!(serde_json::from_str::<ControlSchedule>("[1.0, -2.0]").is_err());
    }
}
