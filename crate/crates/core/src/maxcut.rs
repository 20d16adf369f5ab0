//! Max-Cut instances, their field-free Ising cost Hamiltonian, and scoring of
//! final principal-system states.
//!
//! Bit convention: bit 0 ↔ spin +1 ↔ |0⟩, and node 1 is the leftmost symbol of
//! a bitstring (the slowest tensor factor).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{embed_qubit_op_sparse, sigma_x, ComplexMatrix, SparseMatrix};

/// Largest graph [`brute_force_extrema`] will enumerate.
pub const MAX_ENUMERATION_NODES: usize = 24;

/// Undirected weighted graph with 1-based node labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let g = Self { n_nodes, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::InvalidArgument("graph needs at least one node".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &(i, j, w) in &self.edges {
            if !(1 <= i && i < j && j <= self.n_nodes) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) must satisfy 1 <= i < j <= {}",
                    self.n_nodes
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) has weight {w}")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(())
    }

    /// Cut objective Σ w_ij s_i s_j for the basis index `state`.
    pub fn ising_energy(&self, state: usize) -> f64 {
        self.exact_weights()
            .map(|(scale, ints)| self.scaled_energy(state, &ints) as f64 / scale as f64)
            .unwrap_or_else(|| self.float_energy(state))
    }

    fn spin(&self, state: usize, node: usize) -> i64 {
        if (state >> (self.n_nodes - node)) & 1 == 0 {
            1
        } else {
            -1
        }
    }

    fn float_energy(&self, state: usize) -> f64 {
        self.edges
            .iter()
            .map(|&(i, j, w)| w * (self.spin(state, i) * self.spin(state, j)) as f64)
            .sum()
    }

    fn scaled_energy(&self, state: usize, ints: &[i64]) -> i64 {
        self.edges
            .iter()
            .zip(ints)
            .map(|(&(i, j, _), &w)| w * self.spin(state, i) * self.spin(state, j))
            .sum()
    }

    /// If every weight is a decimal with at most six fractional digits,
    /// returns the common power-of-ten scale and the scaled integer weights.
    fn exact_weights(&self) -> Option<(i64, Vec<i64>)> {
        let mut scale = 1i64;
        while scale <= 1_000_000 {
            let ints: Option<Vec<i64>> = self
                .edges
                .iter()
                .map(|&(_, _, w)| {
                    let x = w * scale as f64;
                    let r = x.round();
                    ((x - r).abs() < 1e-9 * scale as f64 && r.abs() < 1e15).then_some(r as i64)
                })
                .collect();
            if let Some(ints) = ints {
                return Some((scale, ints));
            }
            scale *= 10;
        }
        None
    }

    /// Induced subgraph on the first `n` nodes.
    pub fn induced_prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_nodes {
            return Err(Error::InvalidArgument(format!(
                "prefix of {n} nodes from a {}-node graph",
                self.n_nodes
            )));
        }
        let edges = self.edges.iter().copied().filter(|&(_, j, _)| j <= n).collect();
        Self::new(n, edges)
    }

    /// The 4-node instance with crossing/non-crossing sums 2.41 / 0.27.
    pub fn four_node() -> Self {
        Self {
            n_nodes: 4,
            edges: vec![
                (1, 2, 0.23),
                (3, 4, 0.04),
                (1, 3, 0.57),
                (1, 4, 0.39),
                (2, 3, 0.66),
                (2, 4, 0.79),
            ],
        }
    }

    /// Complete 11-node graph of randomized weights; nodes Z_0..Z_10 map to
    /// labels 1..11.
    pub fn multinode_fixture() -> Self {
        let mut edges = Vec::new();
        for (i, row) in TABLE_WEIGHTS.iter().enumerate() {
            for (k, &w) in row.iter().enumerate() {
                let j = i + 1 + k;
                edges.push((i + 1, j + 1, w));
            }
        }
        Self { n_nodes: 11, edges }
    }

    /// Induced subgraph Z_0..Z_{n-1} of [`Self::multinode_fixture`].
    pub fn multinode(n: usize) -> Result<Self> {
        Self::multinode_fixture().induced_prefix(n)
    }
}

/// Upper triangle of the 11-node weight table, row Z_i lists Z_{i+1}..Z_10.
const TABLE_WEIGHTS: [&[f64]; 10] = [
    &[0.60, 0.79, 0.71, 0.40, 0.66, 0.33, 0.50, 0.27, 0.88, 0.47],
    &[0.03, 0.21, 0.56, 0.72, 0.82, 0.81, 0.66, 0.73, 0.53],
    &[0.65, 0.75, 0.46, 0.86, 0.38, 0.66, 0.32, 0.85],
    &[0.54, 0.09, 0.77, 0.96, 0.99, 0.35, 0.66],
    &[0.41, 0.16, 0.79, 0.56, 0.63, 0.85],
    &[0.22, 0.36, 0.34, 0.33, 0.44],
    &[0.76, 0.01, 0.62, 0.42],
    &[0.57, 0.13, 0.79],
    &[0.93, 0.17],
    &[0.73],
];

/// Extremal cut objectives and every minimizing bitstring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutExtrema {
    pub c_max: f64,
    pub c_min: f64,
    pub argmin_bitstrings: Vec<String>,
}

pub fn bitstring(state: usize, n: usize) -> String {
    (0..n)
        .map(|q| if (state >> (n - 1 - q)) & 1 == 0 { '0' } else { '1' })
        .collect()
}

pub fn parse_bitstring(s: &str) -> Result<usize> {
    usize::from_str_radix(s, 2).map_err(|_| Error::InvalidArgument(format!("bad bitstring {s:?}")))
}

/// Diagonal of the cost Hamiltonian in basis-index order.
pub fn cost_diagonal(g: &WeightedGraph) -> Vec<f64> {
    (0..1usize << g.n_nodes).map(|s| g.ising_energy(s)).collect()
}

/// H = Σ_(i,j) w_ij σ^z_i σ^z_j as a dense diagonal matrix.
pub fn build_cost_hamiltonian(g: &WeightedGraph) -> Result<ComplexMatrix> {
    if g.n_nodes < 2 {
        return Err(Error::InvalidArgument("cost Hamiltonian needs at least 2 nodes".into()));
    }
    g.validate()?;
    Ok(ComplexMatrix::from_real_diagonal(&cost_diagonal(g)))
}

/// H' = Σ_θ σ^x_θ.
pub fn build_mixer(n_qubits: usize) -> Result<ComplexMatrix> {
    Ok(build_mixer_sparse(n_qubits)?.to_dense())
}

pub(crate) fn build_mixer_sparse(n_qubits: usize) -> Result<SparseMatrix> {
    if n_qubits == 0 {
        return Err(Error::InvalidArgument("mixer needs at least one qubit".into()));
    }
    let mut acc = SparseMatrix::zeros(1 << n_qubits);
    for q in 1..=n_qubits {
        acc = acc.add(&embed_qubit_op_sparse(&sigma_x(), q, n_qubits)?);
    }
    Ok(acc)
}

pub fn brute_force_extrema(g: &WeightedGraph) -> Result<CutExtrema> {
    if g.n_nodes > MAX_ENUMERATION_NODES {
        return Err(Error::GraphTooLarge(g.n_nodes));
    }
    g.validate()?;
    let n = g.n_nodes;
    let states = 0..1usize << n;
    let (c_max, c_min, argmin) = match g.exact_weights() {
        Some((scale, ints)) => {
            let energies: Vec<i64> = states.map(|s| g.scaled_energy(s, &ints)).collect();
            let max = *energies.iter().max().unwrap();
            let min = *energies.iter().min().unwrap();
            let argmin = (0..energies.len()).filter(|&s| energies[s] == min).collect::<Vec<_>>();
            (max as f64 / scale as f64, min as f64 / scale as f64, argmin)
        }
        None => {
            let energies: Vec<f64> = states.map(|s| g.float_energy(s)).collect();
            let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
            let argmin = (0..energies.len()).filter(|&s| energies[s] == min).collect::<Vec<_>>();
            (max, min, argmin)
        }
    };
    Ok(CutExtrema {
        c_max,
        c_min,
        argmin_bitstrings: argmin.into_iter().map(|s| bitstring(s, n)).collect(),
    })
}

/// r = (C_max − tr(Hρ_p)) / (C_max − C_min).
pub fn approximation_ratio(h: &ComplexMatrix, rho_p: &ComplexMatrix, ext: &CutExtrema) -> Result<f64> {
    if h.dim() != rho_p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "H has dim {} but rho_p has dim {}",
            h.dim(),
            rho_p.dim()
        )));
    }
    ratio_from_energy(h.trace_product(rho_p).re, ext)
}

pub fn ratio_from_energy(energy: f64, ext: &CutExtrema) -> Result<f64> {
    let span = ext.c_max - ext.c_min;
    if span.abs() < 1e-15 {
        return Err(Error::DegenerateGraph);
    }
    let r = (ext.c_max - energy) / span;
    Ok(if (-1e-9..0.0).contains(&r) {
        0.0
    } else if r > 1.0 && r <= 1.0 + 1e-9 {
        1.0
    } else {
        r
    })
}

/// Measurement probabilities of each computational basis state; with
/// `group_flips`, a bitstring and its complement are merged under the label
/// `"s|s̄"` (s starting with 0).
pub fn solution_probabilities(rho_p: &ComplexMatrix, group_flips: bool) -> Vec<(String, f64)> {
    let dim = rho_p.dim();
    let n = dim.trailing_zeros() as usize;
    let diag: Vec<f64> = rho_p.diagonal_entries().iter().map(|z: &Complex64| z.re).collect();
    if !group_flips {
        return diag.iter().enumerate().map(|(s, &p)| (bitstring(s, n), p)).collect();
    }
    let mask = dim - 1;
    (0..dim / 2)
        .map(|s| {
            let flip = s ^ mask;
            (format!("{}|{}", bitstring(s, n), bitstring(flip, n)), diag[s] + diag[flip])
        })
        .collect()
}

/// Total probability of the listed bitstrings.
pub fn probability_of(rho_p: &ComplexMatrix, bitstrings: &[String]) -> Result<f64> {
    bitstrings
        .iter()
        .map(|b| parse_bitstring(b).map(|s| rho_p[(s, s)].re))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::StateVector;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn enumerate_min(g: &WeightedGraph) -> (f64, usize) {
        // independent oracle over explicit spin vectors
        let n = g.n_nodes;
        let mut best = f64::INFINITY;
        let mut count = 0;
        for s in 0..1usize << n {
            let spins: Vec<f64> =
                (0..n).map(|q| if s >> (n - 1 - q) & 1 == 0 { 1.0 } else { -1.0 }).collect();
            let e: f64 = g.edges.iter().map(|&(i, j, w)| w * spins[i - 1] * spins[j - 1]).sum();
            if e < best - 1e-12 {
                best = e;
                count = 1;
            } else if (e - best).abs() <= 1e-12 {
                count += 1;
            }
        }
        (best, count)
    }

    #[test]
    fn single_edge_hamiltonian() {
        let g = WeightedGraph::new(2, vec![(1, 2, 0.7)]).unwrap();
        let h = build_cost_hamiltonian(&g).unwrap();
        let expected = ComplexMatrix::from_real_diagonal(&[0.7, -0.7, -0.7, 0.7]);
        assert!(h.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn four_node_graph_diagonal_extrema() {
        let h = build_cost_hamiltonian(&WeightedGraph::four_node()).unwrap();
        let d: Vec<f64> = h.diagonal_entries().iter().map(|z| z.re).collect();
        let max = d.iter().copied().fold(f64::MIN, f64::max);
        let min = d.iter().copied().fold(f64::MAX, f64::min);
        assert_eq!(max, 2.68);
        assert_eq!(min, -2.14);
    }

    #[test]
    fn unit_triangle_has_six_minimizers() {
        let g = WeightedGraph::new(3, vec![(1, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]).unwrap();
        let (oracle_min, oracle_count) = enumerate_min(&g);
        assert_eq!((oracle_min, oracle_count), (-1.0, 6));
        let ext = brute_force_extrema(&g).unwrap();
        assert_eq!(ext.c_min, -1.0);
        assert_eq!(ext.argmin_bitstrings.len(), 6);
        let h = build_cost_hamiltonian(&g).unwrap();
        let count = h.diagonal_entries().iter().filter(|z| z.re == -1.0).count();
        assert_eq!(count, 6);
    }

    #[test]
    fn mixer_small_cases() {
        assert_eq!(build_mixer(1).unwrap(), sigma_x());
        let ev = build_mixer(2).unwrap().hermitian_eigenvalues().unwrap();
        for (got, want) in ev.iter().zip([-2.0, 0.0, 0.0, 2.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let m4 = build_mixer(4).unwrap();
        assert!(m4.is_hermitian(1e-15));
        for i in 0..16 {
            let s: f64 = m4.row(i).iter().map(|z| z.norm()).sum();
            assert_abs_diff_eq!(s, 4.0);
        }
    }

    #[test]
    fn four_node_graph_extrema() {
        let ext = brute_force_extrema(&WeightedGraph::four_node()).unwrap();
        assert_eq!(ext.c_max, 2.68);
        assert_eq!(ext.c_min, -2.14);
        assert_eq!(ext.argmin_bitstrings, vec!["0011".to_string(), "1100".to_string()]);
    }

    #[test]
    fn single_edge_extrema() {
        let ext = brute_force_extrema(&WeightedGraph::new(2, vec![(1, 2, 1.0)]).unwrap()).unwrap();
        assert_eq!((ext.c_max, ext.c_min), (1.0, -1.0));
    }

    #[test]
    fn five_node_fixture_extrema() {
        let g = WeightedGraph::multinode(5).unwrap();
        assert_eq!(g.edges.len(), 10);
        let ext = brute_force_extrema(&g).unwrap();
        let (oracle_min, _) = enumerate_min(&g);
        assert_abs_diff_eq!(ext.c_min, oracle_min, epsilon = 1e-12);
        // frozen from enumeration
        assert_eq!(ext.c_min, -2.66);
        assert_eq!(ext.c_max, 5.24);
        assert_eq!(ext.argmin_bitstrings, vec!["01110".to_string(), "10001".to_string()]);
    }

    #[test]
    fn too_large_graph_rejected() {
        let g = WeightedGraph { n_nodes: 25, edges: vec![] };
        assert!(matches!(brute_force_extrema(&g), Err(Error::GraphTooLarge(25))));
    }

    #[test]
    fn invalid_edges_rejected() {
        assert!(WeightedGraph::new(3, vec![(2, 1, 1.0)]).is_err());
        assert!(WeightedGraph::new(3, vec![(1, 4, 1.0)]).is_err());
        assert!(WeightedGraph::new(3, vec![(1, 2, 1.0), (1, 2, 2.0)]).is_err());
        assert!(WeightedGraph::new(3, vec![(1, 2, f64::NAN)]).is_err());
    }

    #[test]
    fn ratio_at_optimum_worst_and_uniform() {
        let g = WeightedGraph::four_node();
        let h = build_cost_hamiltonian(&g).unwrap();
        let ext = brute_force_extrema(&g).unwrap();
        let opt = StateVector::basis(16, 0b0011).outer();
        assert_abs_diff_eq!(approximation_ratio(&h, &opt, &ext).unwrap(), 1.0, epsilon = 1e-12);
        let worst = StateVector::basis(16, 0).outer();
        assert_abs_diff_eq!(approximation_ratio(&h, &worst, &ext).unwrap(), 0.0, epsilon = 1e-12);
        let mixed = ComplexMatrix::identity(16).scaled(Complex64::new(1.0 / 16.0, 0.0));
        assert_abs_diff_eq!(
            approximation_ratio(&h, &mixed, &ext).unwrap(),
            2.68 / 4.82,
            epsilon = 1e-12
        );
    }

    #[test]
    fn degenerate_graph_errors() {
        let g = WeightedGraph::new(3, vec![]).unwrap();
        let h = build_cost_hamiltonian(&g).unwrap();
        let ext = brute_force_extrema(&g).unwrap();
        let rho = StateVector::basis(8, 0).outer();
        assert!(matches!(approximation_ratio(&h, &rho, &ext), Err(Error::DegenerateGraph)));
    }

    #[test]
    fn probabilities_grouped() {
        let pure = StateVector::basis(16, 0b0011).outer();
        let grouped = solution_probabilities(&pure, true);
        assert_eq!(grouped.len(), 8);
        let g = grouped.iter().find(|(k, _)| k == "0011|1100").unwrap();
        assert_abs_diff_eq!(g.1, 1.0);
        let mixed = ComplexMatrix::identity(16).scaled(Complex64::new(1.0 / 16.0, 0.0));
        for (_, p) in solution_probabilities(&mixed, true) {
            assert_abs_diff_eq!(p, 0.125, epsilon = 1e-15);
        }
        assert_eq!(solution_probabilities(&mixed, false).len(), 16);
    }

    #[test]
    fn multinode_fixture_matches_table() {
        let g = WeightedGraph::multinode_fixture();
        assert_eq!(g.edges.len(), 55);
        let w = |i: usize, j: usize| g.edges.iter().find(|e| e.0 == i && e.1 == j).unwrap().2;
        assert_eq!(w(1, 2), 0.60);
        assert_eq!(w(2, 3), 0.03);
        assert_eq!(w(7, 9), 0.01);
        assert_eq!(w(10, 11), 0.73);
        assert_eq!(WeightedGraph::multinode(7).unwrap().edges.len(), 21);
    }

    proptest! {
        #[test]
        fn hamiltonian_invariants(
            weights in prop::collection::vec(-2.0f64..2.0, 10),
        ) {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 1..=5 {
                for j in (i + 1)..=5 {
                    edges.push((i, j, weights[k]));
                    k += 1;
                }
            }
            let g = WeightedGraph::new(5, edges).unwrap();
            let h = build_cost_hamiltonian(&g).unwrap();
            prop_assert!(h.is_diagonal());
            prop_assert!(h.trace().norm() < 1e-12);
            let d = h.diagonal_entries();
            for s in 0..32 {
                prop_assert_eq!(d[s], d[s ^ 31]);
            }
            let ext = brute_force_extrema(&g).unwrap();
            let max = d.iter().map(|z| z.re).fold(f64::MIN, f64::max);
            let min = d.iter().map(|z| z.re).fold(f64::MAX, f64::min);
            prop_assert_eq!(max, ext.c_max);
            prop_assert_eq!(min, ext.c_min);
        }
    }
}
