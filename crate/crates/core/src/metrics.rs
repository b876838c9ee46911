//! Evaluation metrics for valence time series: RMSE, Pearson correlation,
//! and Lin's concordance correlation coefficient, plus the concatenation
//! protocol that scores all test sequences as one long series.
//!
//! All moments are population (1/n) so CC and CCC relate by the exact
//! algebraic identity; the running accumulators use Welford-style updates.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction length {pred} != label length {labels}")]
    LengthMismatch { pred: usize, labels: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("non-finite value in {which} series at index {index}")]
    NonFinite { which: &'static str, index: usize },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
}

/// A prediction series paired with its ground-truth labels.
#[derive(Clone, Debug)]
pub struct SeriesPair<'a> {
    pub predictions: &'a [f64],
    pub labels: &'a [f64],
}

impl<'a> SeriesPair<'a> {
    pub fn new(predictions: &'a [f64], labels: &'a [f64]) -> Result<Self, MetricsError> {
        if predictions.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                pred: predictions.len(),
                labels: labels.len(),
            });
        }
        for (which, series) in [("predictions", predictions), ("labels", labels)] {
            if let Some(index) = series.iter().position(|v| !v.is_finite()) {
                return Err(MetricsError::NonFinite { which, index });
            }
        }
        Ok(SeriesPair {
            predictions,
            labels,
        })
    }

    fn len(&self) -> usize {
        self.predictions.len()
    }
}

/// RMSE, CC, CCC and the sample count for one evaluated series pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub rmse: f64,
    pub cc: f64,
    pub ccc: f64,
    pub n: usize,
}

/// Single-pass population moments of a paired series.
struct Moments {
    n: usize,
    mean_x: f64,
    mean_y: f64,
    /// Sum of squared deviations of x (n * variance).
    m2_x: f64,
    m2_y: f64,
    /// Sum of co-deviations (n * covariance).
    c2: f64,
}

impl Moments {
    fn of(pair: &SeriesPair) -> Moments {
        let mut m = Moments {
            n: 0,
            mean_x: 0.0,
            mean_y: 0.0,
            m2_x: 0.0,
            m2_y: 0.0,
            c2: 0.0,
        };
        for (&x, &y) in pair.predictions.iter().zip(pair.labels) {
            m.n += 1;
            let n = m.n as f64;
            let dx = x - m.mean_x;
            let dy = y - m.mean_y;
            m.mean_x += dx / n;
            m.mean_y += dy / n;
            m.m2_x += dx * (x - m.mean_x);
            m.m2_y += dy * (y - m.mean_y);
            m.c2 += dx * (y - m.mean_y);
        }
        m
    }

    fn var_x(&self) -> f64 {
        self.m2_x / self.n as f64
    }

    fn var_y(&self) -> f64 {
        self.m2_y / self.n as f64
    }

    fn cov(&self) -> f64 {
        self.c2 / self.n as f64
    }
}

/// Root mean square error.
pub fn rmse(pair: &SeriesPair) -> Result<f64, MetricsError> {
    if pair.len() < 1 {
        return Err(MetricsError::TooShort {
            needed: 1,
            got: 0,
        });
    }
    let sse: f64 = pair
        .predictions
        .iter()
        .zip(pair.labels)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok((sse / pair.len() as f64).sqrt())
}

/// Pearson correlation coefficient with population moments. A zero-variance
/// series is a hard error rather than a silent 0 or NaN; a collapsed
/// (constant) predictor should be loud.
pub fn pearson_cc(pair: &SeriesPair) -> Result<f64, MetricsError> {
    if pair.len() < 2 {
        return Err(MetricsError::TooShort {
            needed: 2,
            got: pair.len(),
        });
    }
    let m = Moments::of(pair);
    let denom = (m.var_x() * m.var_y()).sqrt();
    if denom == 0.0 {
        return Err(MetricsError::Degenerate(
            "zero variance series in Pearson correlation",
        ));
    }
    Ok(m.cov() / denom)
}

/// Lin's concordance correlation coefficient:
/// `2 cov / (var_x + var_y + (mean_x - mean_y)^2)`, population moments.
pub fn lin_ccc(pair: &SeriesPair) -> Result<f64, MetricsError> {
    if pair.len() < 2 {
        return Err(MetricsError::TooShort {
            needed: 2,
            got: pair.len(),
        });
    }
    let m = Moments::of(pair);
    let mean_gap = m.mean_x - m.mean_y;
    let denom = m.var_x() + m.var_y() + mean_gap * mean_gap;
    if denom == 0.0 {
        return Err(MetricsError::Degenerate(
            "both series constant with equal means in CCC",
        ));
    }
    Ok(2.0 * m.cov() / denom)
}

/// All three metrics for one pair.
pub fn report(pair: &SeriesPair) -> Result<MetricsReport, MetricsError> {
    Ok(MetricsReport {
        rmse: rmse(pair)?,
        cc: pearson_cc(pair)?,
        ccc: lin_ccc(pair)?,
        n: pair.len(),
    })
}

/// The overall evaluation protocol: concatenate every sequence's series into
/// one long pair and compute the metrics once (not averaged per sequence).
pub fn concat_eval(
    sequences: &[(Vec<f64>, Vec<f64>)],
) -> Result<MetricsReport, MetricsError> {
    if sequences.is_empty() {
        return Err(MetricsError::TooShort { needed: 1, got: 0 });
    }
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for (p, l) in sequences {
        if p.len() != l.len() {
            return Err(MetricsError::LengthMismatch {
                pred: p.len(),
                labels: l.len(),
            });
        }
        preds.extend_from_slice(p);
        labels.extend_from_slice(l);
    }
    report(&SeriesPair::new(&preds, &labels)?)
}

/// Harness-side wrapper: a degenerate (constant) predictor reports zero
/// correlation and concordance instead of failing the whole run, and the
/// condition is flagged.
pub fn report_or_degenerate(pair: &SeriesPair) -> Result<(MetricsReport, bool), MetricsError> {
    match report(pair) {
        Ok(r) => Ok((r, false)),
        Err(MetricsError::Degenerate(_)) => Ok((
            MetricsReport {
                rmse: rmse(pair)?,
                cc: 0.0,
                ccc: 0.0,
                n: pair.len(),
            },
            true,
        )),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair<'a>(x: &'a [f64], y: &'a [f64]) -> SeriesPair<'a> {
        SeriesPair::new(x, y).unwrap()
    }

    #[test]
    fn rmse_hand_values() {
        assert_eq!(rmse(&pair(&[1.0, 2.0], &[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(rmse(&pair(&[0.0, 0.0], &[1.0, 1.0])).unwrap(), 1.0);
        // pred=[1,2], labels=[3,6] -> sqrt((4+16)/2) = sqrt(10)
        let v = rmse(&pair(&[1.0, 2.0], &[3.0, 6.0])).unwrap();
        assert!((v - 10.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cc_perfect_linear_relations() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson_cc(&pair(&x, &y)).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_cc(&pair(&x, &neg)).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cc_hand_moments() {
        let v = pearson_cc(&pair(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cc_zero_variance_is_error() {
        let err = pearson_cc(&pair(&[1.0, 1.0, 1.0], &[0.0, 0.5, 1.0])).unwrap_err();
        assert!(matches!(err, MetricsError::Degenerate(_)));
    }

    #[test]
    fn ccc_identical_series_is_one() {
        let x = [0.1, 0.5, -0.4, 0.9];
        assert!((lin_ccc(&pair(&x, &x)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ccc_hand_computation_4_over_11() {
        // x=[1,2,3], y=[2,4,6]: cov=4/3, var_x=2/3, var_y=8/3, gap^2=4
        // ccc = (8/3) / (2/3 + 8/3 + 4) = 4/11
        let v = lin_ccc(&pair(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])).unwrap();
        assert!((v - 4.0 / 11.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn ccc_constant_predictions_zero() {
        let v = lin_ccc(&pair(&[0.5, 0.5, 0.5], &[0.0, 1.0, 2.0])).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn report_or_degenerate_flags_constant_predictor() {
        let x = [0.5, 0.5, 0.5];
        let y = [0.0, 1.0, 2.0];
        let (r, flagged) = report_or_degenerate(&pair(&x, &y)).unwrap();
        // CCC is still well-defined (0); CC is not, so the flag carries it.
        assert!(flagged);
        assert_eq!(r.cc, 0.0);
        assert_eq!(r.ccc, 0.0);
        assert!(r.rmse > 0.0);
    }

    #[test]
    fn concat_single_sequence_matches_direct() {
        let p = vec![0.1, 0.4, 0.2, 0.8];
        let l = vec![0.2, 0.3, 0.1, 0.9];
        let direct = report(&pair(&p, &l)).unwrap();
        let cat = concat_eval(&[(p, l)]).unwrap();
        assert_eq!(direct, cat);
    }

    #[test]
    fn concat_duplicate_sequence_invariant() {
        let p = vec![0.1, 0.4, 0.2, 0.8];
        let l = vec![0.2, 0.3, 0.1, 0.9];
        let one = concat_eval(&[(p.clone(), l.clone())]).unwrap();
        let two = concat_eval(&[(p.clone(), l.clone()), (p, l)]).unwrap();
        assert!((one.rmse - two.rmse).abs() < 1e-12);
        assert!((one.cc - two.cc).abs() < 1e-12);
        assert!((one.ccc - two.ccc).abs() < 1e-12);
    }

    #[test]
    fn concat_differs_from_per_sequence_mean() {
        // Two sequences with zero within-sequence correlation but shifted
        // means: concatenation induces correlation that per-sequence
        // averaging cannot see.
        let s1 = (vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0, 0.0]);
        let s2 = (
            vec![10.0, 11.0, 10.0, 11.0],
            vec![11.0, 11.0, 10.0, 10.0],
        );
        let per_seq_mean = (pearson_cc(&pair(&s1.0, &s1.1)).unwrap()
            + pearson_cc(&pair(&s2.0, &s2.1)).unwrap())
            / 2.0;
        let cat = concat_eval(&[s1, s2]).unwrap();
        assert!(per_seq_mean.abs() < 1e-12);
        assert!(cat.cc > 0.5, "concatenated cc {}", cat.cc);
        assert!((cat.cc - per_seq_mean).abs() > 0.1);
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(SeriesPair::new(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn non_finite_is_error() {
        let err = SeriesPair::new(&[1.0, f64::NAN], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(
            err,
            MetricsError::NonFinite {
                which: "predictions",
                index: 1
            }
        ));
    }
}
