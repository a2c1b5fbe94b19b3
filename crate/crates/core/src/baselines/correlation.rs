use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub coefficient: f64,
    /// Two-sided p-value from the t distribution with n - 2 degrees of freedom.
    pub p_value: f64,
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Correlation(format!(
            "vectors have different lengths ({} and {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Correlation(format!(
            "need at least 3 paired observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Correlation("non-finite value".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-sided p for a correlation coefficient `r` over `n` observations.
/// Equals `2 * P(T > |t|)` with `t = r sqrt((n-2) / (1-r^2))`, written as
/// the regularized incomplete beta `I_{1-r^2}((n-2)/2, 1/2)`.
fn p_two_sided(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let x = (1.0 - r * r).clamp(0.0, 1.0);
    if x == 0.0 {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(x), mean(y));
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
    let nx = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = dy.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::Correlation(
            "zero variance; correlation is undefined".into(),
        ));
    }
    let r: f64 = dx.iter().zip(&dy).map(|(a, b)| (a / nx) * (b / ny)).sum();
    Ok(r.clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check(x, y)?;
    let r = pearson_unchecked(x, y)?;
    Ok(Correlation {
        coefficient: r,
        p_value: p_two_sided(r, x.len()),
    })
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check(x, y)?;
    let rho = pearson_unchecked(&average_ranks(x), &average_ranks(y))?;
    Ok(Correlation {
        coefficient: rho,
        p_value: p_two_sided(rho, x.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 10.0, 5.0]),
            [2.5, 4.0, 2.5, 1.0]
        );
    }

    #[test]
    fn perfect_relations() {
        let x = [1.0, 2.0, 3.5, 7.0, 9.0];
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(spearman(&x, &x).unwrap().coefficient, 1.0);
        assert!((pearson(&x, &x).unwrap().coefficient - 1.0).abs() < 1e-15);
        assert_eq!(spearman(&x, &y).unwrap().coefficient, -1.0);
        assert_eq!(spearman(&x, &x).unwrap().p_value, 0.0);
    }

    #[test]
    fn p_value_matches_t_distribution() {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let (r, n) = (0.42_f64, 12usize);
        let df = (n - 2) as f64;
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        let expected = 2.0 * (1.0 - dist.cdf(t));
        assert!((p_two_sided(r, n) - expected).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).is_err());
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(pearson(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (4usize..20).prop_flat_map(|n| {
            (
                prop::collection::vec(-50.0f64..50.0, n),
                prop::collection::vec(-50.0f64..50.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn spearman_monotone_invariant((x, y) in pairs()) {
            let base = spearman(&x, &y).unwrap();
            let tx: Vec<f64> = x.iter().map(|v| (v / 10.0).exp() + 3.0).collect();
            let moved = spearman(&tx, &y).unwrap();
            prop_assert!((base.coefficient - moved.coefficient).abs() < 1e-12);
        }

        #[test]
        fn pearson_affine_invariant((x, y) in pairs(), a in 0.1f64..10.0, b in -100.0f64..100.0) {
            let base = pearson(&x, &y).unwrap();
            let tx: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let moved = pearson(&tx, &y).unwrap();
            prop_assert!((base.coefficient - moved.coefficient).abs() < 1e-12);
        }
    }
}
