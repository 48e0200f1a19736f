use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Weighted distance `d(t1, y1; t2, y2) = w_t |t2 - t1| + w_y ||y2 - y1||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceMetric {
    #[serde(default = "one")]
    pub time_weight: f64,
    #[serde(default = "one")]
    pub output_weight: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for DistanceMetric {
    fn default() -> Self {
        Self { time_weight: 1.0, output_weight: 1.0 }
    }
}

impl DistanceMetric {
    pub fn time_only() -> Self {
        Self { time_weight: 1.0, output_weight: 0.0 }
    }

    pub fn distance(&self, t1: usize, y1: &DVector<f64>, t2: usize, y2: &DVector<f64>) -> f64 {
        let dt = (t1 as f64 - t2 as f64).abs();
        let mut d = self.time_weight * dt;
        if self.output_weight != 0.0 {
            d += self.output_weight * (y2 - y1).norm();
        }
        d
    }

    pub fn is_valid(&self) -> bool {
        self.time_weight >= 0.0 && self.output_weight >= 0.0 && self.time_weight.is_finite() && self.output_weight.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn symmetric_and_triangle(
            t in proptest::array::uniform3(0usize..50),
            ys in proptest::collection::vec(-5.0f64..5.0, 6),
            wt in 0.0f64..3.0,
            wy in 0.0f64..3.0,
        ) {
            let m = DistanceMetric { time_weight: wt, output_weight: wy };
            let y: Vec<DVector<f64>> = ys.chunks(2).map(|c| DVector::from_column_slice(c)).collect();
            let d01 = m.distance(t[0], &y[0], t[1], &y[1]);
            prop_assert!((d01 - m.distance(t[1], &y[1], t[0], &y[0])).abs() < 1e-12);
            let d12 = m.distance(t[1], &y[1], t[2], &y[2]);
            let d02 = m.distance(t[0], &y[0], t[2], &y[2]);
            prop_assert!(d02 <= d01 + d12 + 1e-12);
        }
    }
}
