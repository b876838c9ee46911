//! Verifies the synthetic corpus carries a learnable valence signal: a
//! closed-form ridge regressor on raw HR pixels must reach CCC > 0.8 on
//! held-out sequences. This is the oracle that justifies every training
//! expectation downstream.

use emosr_core::data::split_sequences;
use emosr_core::metrics::{lin_ccc, SeriesPair};
use emosr_core::synth::{gen_synthetic, SyntheticSpec};

/// Cholesky solve of the SPD system `a x = b` (a is n x n row-major).
fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) {
    // Decompose in place: a = L L^T.
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                assert!(sum > 0.0, "matrix not positive definite");
                a[i * n + j] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
    }
    // Forward then backward substitution.
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= a[i * n + k] * b[k];
        }
        b[i] = sum / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= a[k * n + i] * b[k];
        }
        b[i] = sum / a[i * n + i];
    }
}

#[test]
fn linear_probe_on_raw_pixels_reaches_ccc_above_0_8() {
    let spec = SyntheticSpec {
        n_sequences: 10,
        frames_per_sequence: 40,
        seed: 31,
        noise_level: 0.01,
    };
    let seqs = gen_synthetic(&spec);
    let (train, _val, test) = split_sequences(&seqs, 0.15, 0.25).unwrap();

    let mut x_train: Vec<&[f64]> = Vec::new();
    let mut y_train = Vec::new();
    for seq in &train {
        for (f, &v) in seq.frames.iter().zip(&seq.valence) {
            x_train.push(f.data());
            y_train.push(v);
        }
    }
    let n = x_train.len();

    // Kernel ridge regression in the dual: alpha = (K + lambda I)^-1 y with
    // the plain linear kernel, i.e. ordinary ridge on raw pixels.
    let lambda = 1e-3;
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = x_train[i]
                .iter()
                .zip(x_train[j])
                .map(|(a, b)| a * b)
                .sum();
            gram[i * n + j] = dot + if i == j { lambda } else { 0.0 };
            gram[j * n + i] = gram[i * n + j];
        }
    }
    let mut alpha = y_train.clone();
    cholesky_solve(&mut gram, &mut alpha, n);

    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for seq in &test {
        for (f, &v) in seq.frames.iter().zip(&seq.valence) {
            let pred: f64 = (0..n)
                .map(|i| {
                    let dot: f64 =
                        f.data().iter().zip(x_train[i]).map(|(a, b)| a * b).sum();
                    alpha[i] * dot
                })
                .sum();
            preds.push(pred);
            labels.push(v);
        }
    }
    let ccc = lin_ccc(&SeriesPair::new(&preds, &labels).unwrap()).unwrap();
    assert!(ccc > 0.8, "linear probe CCC {ccc:.4}");
}
