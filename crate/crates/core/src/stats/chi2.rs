use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::math::gamma_q;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Some expected cell count fell below 5; no correction is applied.
    pub low_expected_counts: bool,
}

/// Pearson chi-squared test of independence between a categorical feature and
/// a binary outcome. A feature or outcome with a single level is reported as
/// [`Error::Degenerate`].
pub fn chi_squared_test<T: Ord>(feature: &[T], y: &[u8]) -> Result<ChiSquared> {
    if feature.len() != y.len() {
        return Err(Error::Shape { expected: y.len(), got: feature.len() });
    }
    let mut table: BTreeMap<&T, [f64; 2]> = BTreeMap::new();
    let mut col = [0.0f64; 2];
    for (f, &yi) in feature.iter().zip(y) {
        let k = (yi == 1) as usize;
        table.entry(f).or_insert([0.0; 2])[k] += 1.0;
        col[k] += 1.0;
    }
    if table.len() < 2 || col[0] == 0.0 || col[1] == 0.0 {
        return Err(Error::Degenerate("contingency table has an empty margin".into()));
    }
    let n = col[0] + col[1];
    let mut statistic = 0.0;
    let mut low = false;
    for counts in table.values() {
        let row: f64 = counts.iter().sum();
        for k in 0..2 {
            let expected = row * col[k] / n;
            if expected < 5.0 {
                low = true;
            }
            let d = counts[k] - expected;
            statistic += d * d / expected;
        }
    }
    let dof = table.len() - 1;
    let p_value = chi_squared_sf(statistic, dof).clamp(0.0, 1.0);
    Ok(ChiSquared { statistic, dof, p_value, low_expected_counts: low })
}

/// Upper tail of the chi-squared distribution, `Q(dof / 2, x / 2)`.
pub fn chi_squared_sf(x: f64, dof: usize) -> f64 {
    gamma_q(dof as f64 / 2.0, x / 2.0)
}


#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn perfect_association() {
        let y: Vec<u8> = (0..40).map(|i| (i < 20) as u8).collect();
        let f: Vec<&str> = y.iter().map(|&v| if v == 1 { "1" } else { "0" }).collect();
        let r = chi_squared_test(&f, &y).unwrap();
        assert!((r.statistic - 40.0).abs() < 1e-12);
        assert_eq!(r.dof, 1);
        // Q(1/2, 20) = erfc(sqrt(20))
        let exact = libm::erfc(libm::sqrt(20.0));
        assert!((r.p_value - exact).abs() / exact < 1e-9);
        assert!((r.p_value - 2.54e-10).abs() < 0.01e-10);
    }

    #[test]
    fn independent_feature() {
        let y = vec![0u8, 1, 0, 1, 0, 1, 0, 1];
        let f = vec!["a", "a", "b", "b", "c", "c", "d", "d"];
        let r = chi_squared_test(&f, &y).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn constant_feature_is_degenerate() {
        let r = chi_squared_test(&["a", "a", "a"], &[0, 1, 0]);
        assert!(matches!(r, Err(Error::Degenerate(_))));
    }

    #[test]
    fn critical_value_tail() {
        assert!((chi_squared_sf(3.841, 1) - 0.05).abs() < 5e-4);
    }
}
