//! Spectrum of the random-walk matrix `P = D^-1 A` and the synchronization
//! conditions derived from it.
//!
//! `P` is similar to the symmetric matrix `D^-1/2 A D^-1/2`, so the symmetric
//! solver gives real eigenvalues to machine precision. Eigenvectors of `P`
//! are recovered as `D^-1/2 u`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{SquareMatrix, SymmetricEigen};

/// Eigenvalues closer than this to `lambda_second` count towards its multiplicity.
const MULTIPLICITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct SpectralSummary {
    /// Ascending eigenvalues of `D^-1 A`; the last one is 1.
    pub eigenvalues: Vec<f64>,
    pub lambda_second: f64,
    pub lambda_abs_max_nontrivial: f64,
    /// `1 - lambda_second`.
    pub algebraic_connectivity: f64,
    /// Unit-norm eigenvector of `D^-1 A` for `lambda_second`, largest-magnitude entry positive.
    pub top_eigenvector: Vec<f64>,
    pub lambda_second_multiplicity: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdReport {
    pub k: f64,
    pub k_lambda: f64,
    /// `K * lambda_second < 1`: every equilibrium is synchronized.
    pub sharp_threshold_met: bool,
    /// `K * max |lambda_i| < 1` over the nontrivial spectrum: exponential synchronization.
    pub exponential_condition_met: bool,
    /// `lambda_second < 0`: synchronization for every admissible signal.
    pub dense_graph_guarantee: bool,
    /// `1 - K * max |lambda_i|`, present iff the exponential condition holds.
    pub decay_rate: Option<f64>,
}

/// `D^-1/2 A D^-1/2` for `g`.
pub fn symmetric_normalized(g: &Graph) -> SquareMatrix {
    let inv_sqrt: Vec<f64> = g.degrees().iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
    g.adjacency().scale_rows_cols(&inv_sqrt, &inv_sqrt)
}

pub fn normalized_spectrum(g: &Graph) -> Result<SpectralSummary> {
    let n = g.n();
    let eig = SymmetricEigen::new(&symmetric_normalized(g))?;
    let eigenvalues = eig.values.clone();
    let lambda_second = eigenvalues[n - 2];
    let lambda_abs_max_nontrivial = eigenvalues[..n - 1]
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let lambda_second_multiplicity = eigenvalues[..n - 1]
        .iter()
        .filter(|v| (*v - lambda_second).abs() < MULTIPLICITY_TOL)
        .count();

    let u = eig.vector(n - 2);
    let mut v: Vec<f64> = u
        .iter()
        .zip(g.degrees())
        .map(|(ui, d)| ui / (d as f64).sqrt())
        .collect();
    let norm = crate::linalg::norm2(&v);
    v.iter_mut().for_each(|vi| *vi /= norm);
    normalize_sign(&mut v);

    Ok(SpectralSummary {
        eigenvalues,
        lambda_second,
        lambda_abs_max_nontrivial,
        algebraic_connectivity: 1.0 - lambda_second,
        top_eigenvector: v,
        lambda_second_multiplicity,
    })
}

// Largest-magnitude entry positive; ties go to the lowest index.
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|vi| *vi = -*vi);
    }
}

pub fn threshold_report(spectrum: &SpectralSummary, k: f64) -> Result<ThresholdReport> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::NonPositiveK(k));
    }
    let k_lambda = k * spectrum.lambda_second;
    let k_max = k * spectrum.lambda_abs_max_nontrivial;
    let exponential_condition_met = k_max < 1.0;
    Ok(ThresholdReport {
        k,
        k_lambda,
        sharp_threshold_met: k_lambda < 1.0,
        exponential_condition_met,
        dense_graph_guarantee: spectrum.lambda_second < 0.0,
        decay_rate: exponential_condition_met.then(|| 1.0 - k_max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn spectrum_of(t: Topology) -> SpectralSummary {
        normalized_spectrum(&t.build().unwrap()).unwrap()
    }

    // Reference eigenvalues of D^-1 A from a general (non-symmetric) solver.
    fn reference_eigenvalues(g: &Graph) -> Vec<f64> {
        let n = g.n();
        let p = g.random_walk_matrix();
        // the shift breaks the +-lambda pairs that stall the double-shift QR
        let shift = 0.37;
        let m = DMatrix::from_row_slice(n, n, p.as_slice()) + DMatrix::identity(n, n) * shift;
        let schur = nalgebra::linalg::Schur::try_new(m, 1e-14, 100_000)
            .expect("reference Schur decomposition converges");
        let mut vals: Vec<f64> = schur
            .complex_eigenvalues()
            .iter()
            .map(|z| {
                assert!(z.im.abs() < 1e-8, "random-walk spectrum must be real");
                z.re - shift
            })
            .collect();
        vals.sort_by(f64::total_cmp);
        vals
    }

    #[test]
    fn line5_closed_form() {
        let s = spectrum_of(Topology::Line(5));
        for (k, got) in s.eigenvalues.iter().enumerate() {
            let want = (PI * (4 - k) as f64 / 4.0).cos();
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(s.lambda_second, FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(s.lambda_abs_max_nontrivial, 1.0, epsilon = 1e-12);
        assert_eq!(s.lambda_second_multiplicity, 1);
    }

    #[test]
    fn path_eigenvalues_for_several_lengths() {
        for n in 2..12 {
            let s = spectrum_of(Topology::Line(n));
            for (k, got) in s.eigenvalues.iter().enumerate() {
                let want = (PI * (n - 1 - k) as f64 / (n - 1) as f64).cos();
                assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn complete_and_star() {
        let c = spectrum_of(Topology::Complete(6));
        assert_abs_diff_eq!(c.lambda_second, -0.2, epsilon = 1e-12);
        assert_eq!(c.lambda_second_multiplicity, 5);
        let g = Topology::Complete(6).build().unwrap();
        for (a, b) in c.eigenvalues.iter().zip(reference_eigenvalues(&g)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }

        let s = spectrum_of(Topology::Star(6));
        let want = [-1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        for (a, b) in s.eigenvalues.iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(s.lambda_second, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn top_eigenvector_is_an_eigenvector() {
        let graphs = [
            Topology::Line(5).build().unwrap(),
            Topology::Ring(7).build().unwrap(),
            Graph::karate(),
        ];
        for g in &graphs {
            let s = normalized_spectrum(g).unwrap();
            let pv = g.random_walk_matrix().mul_vec(&s.top_eigenvector);
            for (a, b) in pv.iter().zip(&s.top_eigenvector) {
                assert!((a - s.lambda_second * b).abs() < 1e-8);
            }
            assert_abs_diff_eq!(crate::linalg::norm2(&s.top_eigenvector), 1.0, epsilon = 1e-12);
            let max_entry = s
                .top_eigenvector
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap();
            assert!(max_entry > 0.0);
            assert!(s.lambda_second < 1.0 - 1e-12);
        }
    }

    #[test]
    fn karate_lambda_second() {
        let s = normalized_spectrum(&Graph::karate()).unwrap();
        let reference = reference_eigenvalues(&Graph::karate());
        assert_abs_diff_eq!(s.lambda_second, reference[32], epsilon = 1e-9);
        assert_abs_diff_eq!(s.lambda_second, 0.86773, epsilon = 1e-5);
    }

    #[test]
    fn bipartite_graphs_contain_minus_one() {
        for t in [
            Topology::Line(6),
            Topology::Ring(8),
            Topology::CompleteBipartite(2, 3),
            Topology::CompleteBipartite(4, 4),
        ] {
            let s = spectrum_of(t);
            assert_abs_diff_eq!(s.eigenvalues[0], -1.0, epsilon = 1e-9);
        }
        let odd_ring = spectrum_of(Topology::Ring(7));
        assert!(odd_ring.eigenvalues[0] > -1.0 + 1e-6);
    }

    #[test]
    fn threshold_examples() {
        let line = spectrum_of(Topology::Line(5));
        let r = threshold_report(&line, 1.2).unwrap();
        assert_abs_diff_eq!(r.k_lambda, 1.2 * FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(r.k_lambda, 0.8485, epsilon = 1e-4);
        assert!(r.sharp_threshold_met);
        assert!(!r.exponential_condition_met);
        assert!(r.decay_rate.is_none());

        let r = threshold_report(&line, 1.5).unwrap();
        assert_abs_diff_eq!(r.k_lambda, 1.0607, epsilon = 1e-4);
        assert!(!r.sharp_threshold_met);

        let r = threshold_report(&line, 0.5).unwrap();
        assert_abs_diff_eq!(r.decay_rate.unwrap(), 0.5, epsilon = 1e-12);

        let complete = spectrum_of(Topology::Complete(6));
        for k in [0.1, 1.0, 10.0, 1e6] {
            let r = threshold_report(&complete, k).unwrap();
            assert!(r.dense_graph_guarantee && r.sharp_threshold_met);
        }

        assert!(matches!(threshold_report(&line, 0.0), Err(Error::NonPositiveK(_))));
        assert!(matches!(threshold_report(&line, -1.0), Err(Error::NonPositiveK(_))));
    }

    proptest! {
        #[test]
        fn similar_to_random_walk_matrix(seed in any::<u64>(), n in 2usize..=8, p in 0.0f64..0.8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Graph::random_connected(n, p, &mut rng).unwrap();
            let s = normalized_spectrum(&g).unwrap();
            for (a, b) in s.eigenvalues.iter().zip(reference_eigenvalues(&g)) {
                prop_assert!((a - b).abs() < 1e-8);
            }
            let trace: f64 = s.eigenvalues.iter().sum();
            prop_assert!(trace.abs() < 1e-9);
            prop_assert!((s.eigenvalues[n - 1] - 1.0).abs() < 1e-9);
            prop_assert!(s.eigenvalues.iter().all(|v| v.abs() <= 1.0 + 1e-9));
            if g.is_bipartite() {
                prop_assert!((s.eigenvalues[0] + 1.0).abs() < 1e-9);
            }

            for k in [0.3, 0.9, 1.7, 4.0] {
                let r = threshold_report(&s, k).unwrap();
                prop_assert!(!r.exponential_condition_met || r.sharp_threshold_met);
                prop_assert!(!r.dense_graph_guarantee || r.sharp_threshold_met);
                prop_assert_eq!(r.decay_rate.is_some(), r.exponential_condition_met);
            }
        }
    }
}
