//! One-dimensional nodal Lagrange machinery.
//!
//! Node sets (Legendre-Gauss-Lobatto and Legendre-Gauss), barycentric
//! Lagrange evaluation, and the differentiation and mass matrices that every
//! volume, surface and mortar operator is assembled from.

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 15;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 50;

/// Small dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        Matrix::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).map(|k| self[(i, k)] * other[(k, j)]).sum()
        })
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Applies the matrix to a line of 4-vectors, component-wise.
    pub fn apply_states(&self, x: &[[f64; 4]], out: &mut [[f64; 4]]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = [0.0; 4];
            for (a, xv) in self.row(i).iter().zip(x) {
                for v in 0..4 {
                    acc[v] += a * xv[v];
                }
            }
            *o = acc;
        }
    }

    /// `R A R` with `R` the index-reversal permutation.
    pub fn reflected(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            self[(self.rows - 1 - i, self.cols - 1 - j)]
        })
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NodeKind {
    #[default]
    LegendreGaussLobatto,
    LegendreGauss,
}

impl std::str::FromStr for NodeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lgl" | "gauss-lobatto" | "legendre-gauss-lobatto" => Ok(Self::LegendreGaussLobatto),
            "gauss" | "lg" | "legendre-gauss" => Ok(Self::LegendreGauss),
            other => Err(Error::Config(format!("unknown node kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for NodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::LegendreGaussLobatto => f.write_str("lgl"),
            Self::LegendreGauss => f.write_str("gauss"),
        }
    }
}

/// Interpolation/quadrature nodes on [-1, 1] with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    degree: usize,
    kind: NodeKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
}

/// Legendre polynomial `L_n(x)` and its derivative via the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut l_prev, mut l) = (1.0, x);
    let (mut d_prev, mut d) = (0.0, 1.0);
    for k in 2..=n {
        let kf = k as f64;
        let l_next = ((2.0 * kf - 1.0) * x * l - (kf - 1.0) * l_prev) / kf;
        let d_next = d_prev + (2.0 * kf - 1.0) * l;
        l_prev = l;
        l = l_next;
        d_prev = d;
        d = d_next;
    }
    (l, d)
}

fn newton(mut x: f64, f: impl Fn(f64) -> (f64, f64)) -> f64 {
    for _ in 0..NEWTON_MAX_ITER {
        let (q, dq) = f(x);
        let dx = q / dq;
        x -= dx;
        if dx.abs() <= NEWTON_TOL * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Builds the `degree + 1` nodes of the requested family.
pub fn build_node_set(degree: usize, kind: NodeKind) -> Result<NodeSet> {
    if !(1..=MAX_DEGREE).contains(&degree) {
        return Err(Error::Config(format!(
            "polynomial degree {degree} outside supported range 1..={MAX_DEGREE}"
        )));
    }
    let n = degree;
    let np = n + 1;
    let mut nodes = vec![0.0; np];
    let mut weights = vec![0.0; np];

    match kind {
        NodeKind::LegendreGauss => {
            // roots of L_{N+1}
            for k in 0..np.div_ceil(2) {
                let guess = -((2 * k + 1) as f64 * std::f64::consts::PI / (2 * np) as f64).cos();
                let x = newton(guess, |x| legendre(np, x));
                let (_, d) = legendre(np, x);
                let w = 2.0 / ((1.0 - x * x) * d * d);
                nodes[k] = x;
                nodes[n - k] = -x;
                weights[k] = w;
                weights[n - k] = w;
            }
        }
        NodeKind::LegendreGaussLobatto => {
            // interior roots of q = L_{N+1} - L_{N-1}, q' = (2N+1) L_N
            nodes[0] = -1.0;
            nodes[n] = 1.0;
            for k in 1..np.div_ceil(2) {
                let guess = -(k as f64 * std::f64::consts::PI / n as f64).cos();
                let x = newton(guess, |x| {
                    let (lp, _) = legendre(n + 1, x);
                    let (lm, _) = legendre(n - 1, x);
                    let (l, _) = legendre(n, x);
                    (lp - lm, (2 * n + 1) as f64 * l)
                });
                nodes[k] = x;
                nodes[n - k] = -x;
            }
            let scale = 2.0 / (n * (n + 1)) as f64;
            for k in 0..np {
                let (l, _) = legendre(n, nodes[k]);
                weights[k] = scale / (l * l);
            }
        }
    }
    if n % 2 == 0 {
        nodes[n / 2] = 0.0;
    }

    let bary = barycentric_weights(&nodes);
    Ok(NodeSet {
        degree,
        kind,
        nodes,
        weights,
        bary,
    })
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, xj)| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, xk)| xj - xk)
                .product();
            1.0 / prod
        })
        .collect()
}

impl NodeSet {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Value of the `j`-th cardinal Lagrange polynomial at `x`.
    pub fn lagrange_eval(&self, j: usize, x: f64) -> f64 {
        self.lagrange_all(x)[j]
    }

    /// All cardinal polynomials at `x`, by the second barycentric form.
    pub fn lagrange_all(&self, x: f64) -> Vec<f64> {
        if let Some(hit) = self.nodes.iter().position(|&xk| xk == x) {
            let mut out = vec![0.0; self.len()];
            out[hit] = 1.0;
            return out;
        }
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.bary)
            .map(|(xk, wk)| wk / (x - xk))
            .collect();
        let denom: f64 = terms.iter().sum();
        terms.into_iter().map(|t| t / denom).collect()
    }

    /// Matrix `V[k][j] = l_j(targets[k])` evaluating a nodal polynomial at `targets`.
    pub fn interpolation_matrix(&self, targets: &[f64]) -> Matrix {
        let rows: Vec<Vec<f64>> = targets.iter().map(|&x| self.lagrange_all(x)).collect();
        Matrix::from_fn(targets.len(), self.len(), |k, j| rows[k][j])
    }

    /// Evaluates the interpolant through `values` at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        self.lagrange_all(x)
            .iter()
            .zip(values)
            .map(|(l, v)| l * v)
            .sum()
    }
}

/// Differentiation and mass matrices for one node set.
#[derive(Debug, Clone)]
pub struct BasisOperators {
    /// `D[i][j] = l_j'(x_i)`.
    pub d: Matrix,
    /// Collocated (lumped) mass, i.e. the node weights.
    pub mass_lumped: Vec<f64>,
    /// Exact mass matrix `M[i][j] = ∫ l_i l_j`.
    pub mass: Matrix,
    /// `l_j(-1)`.
    pub face_minus: Vec<f64>,
    /// `l_j(+1)`.
    pub face_plus: Vec<f64>,
}

pub fn build_basis_operators(nodeset: &NodeSet) -> BasisOperators {
    let x = nodeset.nodes();
    let w = &nodeset.bary;
    let np = nodeset.len();

    let mut d = Matrix::zeros(np, np);
    for i in 0..np {
        let mut diag = 0.0;
        for j in 0..np {
            if i != j {
                let v = (w[j] / w[i]) / (x[i] - x[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }

    let mass = exact_mass_matrix(nodeset);
    BasisOperators {
        d,
        mass_lumped: nodeset.weights().to_vec(),
        mass,
        face_minus: nodeset.lagrange_all(-1.0),
        face_plus: nodeset.lagrange_all(1.0),
    }
}

/// `∫ l_i l_j` with an (N+1)-point Gauss rule, exact for the degree-2N integrand.
pub fn exact_mass_matrix(nodeset: &NodeSet) -> Matrix {
    let gauss = build_node_set(nodeset.degree(), NodeKind::LegendreGauss)
        .expect("degree already validated");
    let v = nodeset.interpolation_matrix(gauss.nodes());
    let np = nodeset.len();
    Matrix::from_fn(np, np, |i, j| {
        gauss
            .weights()
            .iter()
            .enumerate()
            .map(|(q, wq)| wq * v[(q, i)] * v[(q, j)])
            .sum()
    })
}
