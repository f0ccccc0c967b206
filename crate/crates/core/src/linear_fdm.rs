//! The original force density method: branch-node matrix, equilibrium matrix
//! assembly, the linear solve for the free nodes and null-space diagnosis
//! for systems without fixed nodes.
//!
//! Sign convention: [`assemble_d`] returns `D = −CᵀQC`, which has the
//! negative diagonal `−Σq` of the X-Tensegrity matrices it is checked
//! against. Equilibrium reads `D·x = −D_f·x_f` per axis. The solver factors
//! the Laplacian `K = −D`, positive definite whenever every `q > 0` and each
//! connected component touches a fixed node.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::model::{DofMap, MemberRole, Model};

pub const DEFAULT_NULL_SPACE_TOL: f64 = 1e-10;

/// Signed incidence matrix, one row per linear member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchNodeMatrix {
    pub rows: Vec<[usize; 2]>,
    pub node_count: usize,
}

impl BranchNodeMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.rows.len(), self.node_count);
        for (j, &[a, b]) in self.rows.iter().enumerate() {
            c[(j, a)] = 1.0;
            c[(j, b)] = -1.0;
        }
        c
    }
}

/// `+1` at the first endpoint, `−1` at the second, in member order.
pub fn build_branch_node_matrix(model: &Model) -> BranchNodeMatrix {
    BranchNodeMatrix { rows: model.members.iter().map(|m| m.endpoints).collect(), node_count: model.nodes.len() }
}

/// `D` restricted to free×free (`d`) and free×fixed (`d_fixed`) node blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumMatrices {
    pub d: DMatrix<f64>,
    pub d_fixed: DMatrix<f64>,
    pub free_nodes: Vec<usize>,
    pub fixed_nodes: Vec<usize>,
}

fn check_densities(model: &Model, q: &[f64]) -> Result<()> {
    if q.len() != model.members.len() {
        return Err(Error::Input(format!("{} force densities given for {} members", q.len(), model.members.len())));
    }
    if let Some(i) = q.iter().position(|x| !x.is_finite()) {
        return Err(Error::Input(format!("force density of member {i} is not finite")));
    }
    Ok(())
}

/// Assembles `D = −CᵀQC` and partitions it into free and fixed columns.
pub fn assemble_d(model: &Model, q: &[f64]) -> Result<EquilibriumMatrices> {
    check_densities(model, q)?;
    let n = model.nodes.len();
    if let Some(m) = model.members.iter().find(|m| m.endpoints.iter().any(|&e| e >= n)) {
        return Err(Error::Input(format!("member {} references a missing node", m.id)));
    }
    // Slot of each node inside its block.
    let mut slot = vec![0usize; n];
    let (mut free_nodes, mut fixed_nodes) = (Vec::new(), Vec::new());
    for (i, node) in model.nodes.iter().enumerate() {
        if node.fixed {
            slot[i] = fixed_nodes.len();
            fixed_nodes.push(i);
        } else {
            slot[i] = free_nodes.len();
            free_nodes.push(i);
        }
    }
    let mut d = DMatrix::zeros(free_nodes.len(), free_nodes.len());
    let mut d_fixed = DMatrix::zeros(free_nodes.len(), fixed_nodes.len());
    let fixed = |i: usize| model.nodes[i].fixed;
    for (m, &qj) in model.members.iter().zip(q) {
        let [a, b] = m.endpoints;
        for (r, c) in [(a, b), (b, a)] {
            if fixed(r) {
                continue;
            }
            d[(slot[r], slot[r])] -= qj;
            if fixed(c) {
                d_fixed[(slot[r], slot[c])] += qj;
            } else {
                d[(slot[r], slot[c])] += qj;
            }
        }
    }
    Ok(EquilibriumMatrices { d, d_fixed, free_nodes, fixed_nodes })
}

/// Rank and kernel of a square symmetric matrix by singular-value
/// thresholding `σ_i ≤ tol·σ_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullSpaceReport {
    pub dimension: usize,
    pub rank: usize,
    pub nullity: usize,
    /// Orthonormal kernel basis, one vector per entry.
    pub basis: Vec<Vec<f64>>,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
    pub tolerance: f64,
}

impl NullSpaceReport {
    /// Distance of `v` from the kernel span (norm of the residual after
    /// orthogonal projection).
    pub fn distance_from_kernel(&self, v: &[f64]) -> f64 {
        let mut r = v.to_vec();
        for b in &self.basis {
            let c: f64 = b.iter().zip(v).map(|(x, y)| x * y).sum();
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri -= c * bi;
            }
        }
        r.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn null_space_analysis(d: &DMatrix<f64>, tol: f64) -> Result<NullSpaceReport> {
    if d.nrows() != d.ncols() {
        return Err(Error::Input(format!("matrix is {}x{}, expected square", d.nrows(), d.ncols())));
    }
    let dim = d.nrows();
    if dim == 0 {
        return Ok(NullSpaceReport {
            dimension: 0,
            rank: 0,
            nullity: 0,
            basis: vec![],
            singular_values: vec![],
            tolerance: tol,
        });
    }
    // Symmetric input: singular values are |eigenvalues| and the eigenvectors
    // of the small ones span the kernel.
    let eig = SymmetricEigen::new(d.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()));
    let singular_values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].abs()).collect();
    let sigma_max = singular_values[0];
    let threshold = tol * sigma_max;
    let basis: Vec<Vec<f64>> = order
        .iter()
        .filter(|&&i| sigma_max == 0.0 || eig.eigenvalues[i].abs() <= threshold)
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let nullity = basis.len();
    Ok(NullSpaceReport { dimension: dim, rank: dim - nullity, nullity, basis, singular_values, tolerance: tol })
}

/// Free-node coordinates from the linear solve with the recovered member
/// lengths and tensions `n_j = q_j·L_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolution {
    /// Free coordinates in [`DofMap`] order.
    pub coords: Vec<f64>,
    pub lengths: Vec<f64>,
    pub tensions: Vec<f64>,
    pub force_densities: Vec<f64>,
}

/// Default force densities: `q = 2w` for power-law cables, `q = k` for spring
/// cables, `q = −1` for struts.
pub fn default_force_densities(model: &Model) -> Vec<f64> {
    use crate::model::ElementFunctional::*;
    model
        .members
        .iter()
        .map(|m| match m.role {
            MemberRole::Cable { functional } => match model.functionals.get(functional) {
                Some(PowerLength { weight, .. }) => 2.0 * weight,
                Some(SpringLength { stiffness, .. }) => *stiffness,
                _ => 1.0,
            },
            MemberRole::Strut { .. } => -1.0,
        })
        .collect()
}

/// Reciprocal condition threshold below which `D` is treated as singular.
const CONDITION_LIMIT: f64 = 1e12;

pub fn solve_linear_fdm(model: &Model, q: &[f64]) -> Result<LinearSolution> {
    model.ensure_valid()?;
    if !model.elements.is_empty() {
        return Err(Error::Input("the linear force density method handles linear members only".into()));
    }
    let mats = assemble_d(model, q)?;
    if mats.fixed_nodes.is_empty() {
        let report = null_space_analysis(&mats.d, DEFAULT_NULL_SPACE_TOL)?;
        return Err(Error::NoFixedNodes(Box::new(report)));
    }
    let dofs = DofMap::build(model)?;

    // K x = D_f x_f with K = −D, one column per axis.
    let k = -&mats.d;
    let mut xf = DMatrix::zeros(mats.fixed_nodes.len(), 3);
    for (r, &n) in mats.fixed_nodes.iter().enumerate() {
        for axis in 0..3 {
            xf[(r, axis)] = model.nodes[n].position[axis];
        }
    }
    let rhs = &mats.d_fixed * xf;

    let spd = q.iter().all(|&x| x > 0.0);
    let cholesky = if spd { k.clone().cholesky() } else { None };
    let x = match cholesky {
        Some(chol) => {
            let diag = chol.l_dirty().diagonal();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v * v), hi.max(v * v)));
            if hi / lo > CONDITION_LIMIT {
                let report = null_space_analysis(&mats.d, DEFAULT_NULL_SPACE_TOL)?;
                return Err(Error::SingularSystem(Box::new(report)));
            }
            chol.solve(&rhs)
        }
        None => {
            let report = null_space_analysis(&mats.d, DEFAULT_NULL_SPACE_TOL)?;
            let smallest = report.singular_values.last().copied().unwrap_or(0.0);
            if report.nullity > 0 || smallest * CONDITION_LIMIT < report.singular_values[0] {
                return Err(Error::SingularSystem(Box::new(report)));
            }
            k.lu().solve(&rhs).ok_or_else(|| Error::SingularSystem(Box::new(report)))?
        }
    };

    let mut coords = vec![0.0; dofs.len()];
    for (r, &n) in mats.free_nodes.iter().enumerate() {
        for axis in 0..3 {
            coords[dofs.index(n, axis).expect("free node")] = x[(r, axis)];
        }
    }
    let pos = dofs.positions(model, &coords);
    let lengths: Vec<f64> =
        model.members.iter().map(|m| geometry::member_length(&pos[m.endpoints[0]], &pos[m.endpoints[1]])).collect();
    let tensions = lengths.iter().zip(q).map(|(l, q)| l * q).collect();
    Ok(LinearSolution { coords, lengths, tensions, force_densities: q.to_vec() })
}
