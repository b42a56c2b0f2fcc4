use super::FscTables;
use crate::distributions::{dirichlet_expected_ln, psi};
use crate::vi::VariationalState;

/// `E[ln p_i]` for truncated stick-breaking weights with `u_m ~ Beta(first_m, second_m)`.
///
/// ```text
/// i = 1          psi(first_1) - psi(first_1 + second_1)
/// 1 < i < M      psi(first_i) - psi(first_i + second_i) + sum_{m<i} [psi(second_m) - psi(first_m + second_m)]
/// i = M          sum_{m<M} [psi(second_m) - psi(first_m + second_m)]
/// ```
///
/// The last weight is the leftover mass, so its own stick never enters.
pub fn stick_expected_ln(first: &[f64], second: &[f64]) -> Vec<f64> {
    let m = first.len();
    let mut out = Vec::with_capacity(m);
    let mut tail = 0.0;
    for i in 0..m {
        if i + 1 == m {
            out.push(tail);
        } else {
            let total = psi(first[i] + second[i]);
            out.push(psi(first[i]) - total + tail);
            tail += psi(second[i]) - total;
        }
    }
    out
}

/// `Theta~ = exp(E_q[ln Theta])` for every entry of eta, pi and omega.
pub fn point_estimate(state: &VariationalState) -> FscTables {
    let (z, a, o) = (state.nodes, state.actions, state.bins);
    let eta = stick_expected_ln(&state.delta, &state.mu).into_iter().map(f64::exp).collect();
    let mut pi = Vec::with_capacity(z * a);
    for row in state.phi.chunks(a) {
        pi.extend(dirichlet_expected_ln(row).into_iter().map(f64::exp));
    }
    let mut omega = Vec::with_capacity(z * a * o * z);
    for (s, l) in state.sigma.chunks(z).zip(state.lambda.chunks(z)) {
        omega.extend(stick_expected_ln(s, l).into_iter().map(f64::exp));
    }
    FscTables { nodes: z, actions: a, bins: o, eta, pi, omega }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vi::{Hyperparams, VariationalState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_node_stick_matches_digamma_oracle() {
        let e = stick_expected_ln(&[2.0, 1.0], &[1.0, 1.0]);
        // exp(psi(2) - psi(3)) and exp(psi(1) - psi(3))
        assert!((e[0].exp() - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert!((e[1].exp() - 0.223_130_160_148_429_82).abs() < 1e-15);
    }

    #[test]
    fn single_node_estimate_is_one() {
        assert_eq!(stick_expected_ln(&[3.0], &[0.5]), vec![0.0]);
    }

    #[test]
    fn symmetric_phi_gives_equal_pi() {
        let mut s = VariationalState::prior(2, 5, 3, &Hyperparams::default());
        s.phi = vec![0.7; 10];
        let t = point_estimate(&s);
        assert!(t.pi.iter().all(|p| (p - t.pi[0]).abs() < 1e-15));
    }

    #[test]
    fn three_case_formula_recomputed_independently() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let m = rng.random_range(1..8);
            let first: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..20.0)).collect();
            let second: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..20.0)).collect();
            let e = stick_expected_ln(&first, &second);
            for i in 0..m {
                // E[ln u_i] (unless last) plus E[ln (1 - u_k)] for every earlier stick
                let mut want = 0.0;
                for k in 0..i {
                    want += psi(second[k]) - psi(first[k] + second[k]);
                }
                if i + 1 < m {
                    want += psi(first[i]) - psi(first[i] + second[i]);
                }
                assert!((e[i] - want).abs() < 1e-12);
                assert!(e[i] < 0.0 || m == 1);
                assert!(e[i].exp() <= 1.0);
            }
            // exp-expectations sit below the proper weights by Jensen: their sum is at most one
            assert!(e.iter().map(|x| x.exp()).sum::<f64>() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn estimate_entries_are_sub_probabilities() {
        let s = VariationalState::prior(3, 7, 4, &Hyperparams::default());
        let t = point_estimate(&s);
        for v in t.eta.iter().chain(&t.pi).chain(&t.omega) {
            assert!(*v > 0.0 && *v <= 1.0);
        }
        assert_eq!(t.omega.len(), 3 * 7 * 4 * 3);
    }
}
