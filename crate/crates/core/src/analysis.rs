//! Post-solve diagnostics: equilibrium residuals, extended force densities,
//! virtual-work checks and side-by-side comparison of element functionals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{Assembly, GeneralizedForces};
use crate::geometry::{self, LENGTH_EPS};
use crate::model::{ElementFunctional, Entity, MemberRole, Model};
use crate::optimizer::{self, SolveOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeResidual {
    pub node: usize,
    pub residual: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Cable,
    Strut,
}

/// Axial data of one linear member. For struts `force` is the multiplier `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberForce {
    pub member_id: usize,
    pub role: Role,
    pub length: f64,
    pub force: f64,
    /// `n / L`
    pub force_density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub nodes: Vec<NodeResidual>,
    pub inf_norm: f64,
    /// `inf_norm` divided by the mean absolute member force (or 1 when all
    /// forces vanish).
    pub relative_norm: f64,
    /// Members in model order.
    pub members: Vec<MemberForce>,
    pub strut_multipliers: Vec<f64>,
}

/// Assembles `Σn∇L + Σσ∇S + Σλ∇L` at the free nodes.
pub fn equilibrium_residual(model: &Model, coords: &[f64], forces: &GeneralizedForces) -> Result<EquilibriumReport> {
    let asm = Assembly::new(model)?;
    check_len(&asm, coords)?;
    let r = asm.equilibrium_vector(coords, forces)?;
    let nodes: Vec<NodeResidual> = asm
        .dofs
        .free_nodes()
        .iter()
        .enumerate()
        .map(|(i, &node)| NodeResidual { node, residual: [r[3 * i], r[3 * i + 1], r[3 * i + 2]] })
        .collect();
    let inf_norm = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pos = asm.positions(coords);

    let mut members = Vec::with_capacity(model.members.len());
    let (mut ci, mut si) = (0, 0);
    for m in &model.members {
        let length = geometry::member_length(&pos[m.endpoints[0]], &pos[m.endpoints[1]]);
        let (role, force) = match m.role {
            MemberRole::Cable { .. } => {
                ci += 1;
                (Role::Cable, forces.member_forces[ci - 1])
            }
            MemberRole::Strut { .. } => {
                si += 1;
                (Role::Strut, forces.strut_multipliers[si - 1])
            }
        };
        let force_density = if length > LENGTH_EPS { force / length } else { f64::NAN };
        members.push(MemberForce { member_id: m.id, role, length, force, force_density });
    }
    let mean = forces.mean_abs_member_force();
    let relative_norm = if mean > 0.0 { inf_norm / mean } else { inf_norm };
    Ok(EquilibriumReport {
        nodes,
        inf_norm,
        relative_norm,
        members,
        strut_multipliers: forces.strut_multipliers.clone(),
    })
}

fn check_len(asm: &Assembly<'_>, coords: &[f64]) -> Result<()> {
    if coords.len() != asm.dimension() {
        return Err(Error::Input(format!(
            "coordinate vector has {} entries, model has {} free coordinates",
            coords.len(),
            asm.dimension()
        )));
    }
    Ok(())
}

/// Force densities of one cable under the three normalizations
/// `q = n/L`, `w₂ = n/2L` and `w₄ = n/4L³`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedDensity {
    pub member_id: usize,
    pub length: f64,
    pub force: f64,
    pub q: f64,
    pub w2: f64,
    pub w4: f64,
}

impl ExtendedDensity {
    pub fn new(member_id: usize, length: f64, force: f64) -> Self {
        Self {
            member_id,
            length,
            force,
            q: force / length,
            w2: force / (2.0 * length),
            w4: force / (4.0 * length.powi(3)),
        }
    }
}

/// Extended force densities of every cable, in cable order.
pub fn extended_force_densities(
    model: &Model,
    coords: &[f64],
    forces: &GeneralizedForces,
) -> Result<Vec<ExtendedDensity>> {
    let asm = Assembly::new(model)?;
    check_len(&asm, coords)?;
    if forces.member_forces.len() != asm.cable_count() {
        return Err(Error::Input("member force count does not match the cable count".into()));
    }
    let pos = asm.positions(coords);
    asm.cable_members()
        .zip(&forces.member_forces)
        .map(|(id, &n)| {
            let [a, b] = model.members[id].endpoints;
            let len = geometry::member_length(&pos[a], &pos[b]);
            if len <= LENGTH_EPS {
                return Err(Error::DegenerateGeometry { entity: Entity::Member(id), measure: len });
            }
            Ok(ExtendedDensity::new(id, len, n))
        })
        .collect()
}

/// Largest relative virtual work `|Σn δL + Σσ δS + Σλ δL| / (‖forces‖·‖δx‖)`
/// over `samples` random variations tangent to the strut constraints.
/// Zero variations contribute zero.
pub fn virtual_work_check(
    model: &Model,
    coords: &[f64],
    forces: &GeneralizedForces,
    seed: u64,
    samples: usize,
) -> Result<f64> {
    let asm = Assembly::new(model)?;
    check_len(&asm, coords)?;
    let g = asm.equilibrium_vector(coords, forces)?;
    let fnorm = forces.norm().max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let dx: Vec<f64> = (0..coords.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let dx = optimizer::tangent_part(&asm, coords, &dx)?;
        worst = worst.max(relative_work(&g, &dx, fnorm));
    }
    Ok(worst)
}

fn relative_work(g: &[f64], dx: &[f64], fnorm: f64) -> f64 {
    let dnorm = dx.iter().map(|x| x * x).sum::<f64>().sqrt();
    if dnorm == 0.0 {
        return 0.0;
    }
    g.iter().zip(dx).map(|(a, b)| a * b).sum::<f64>().abs() / (fnorm * dnorm)
}

/// Summary statistics of a set of element measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureStats {
    pub count: usize,
    pub total: f64,
    pub mean: f64,
    pub std_dev: f64,
    /// Coefficient of variation `std_dev / mean`.
    pub cv: f64,
    pub min: f64,
    pub max: f64,
    /// Counts over `bins` equal-width bins spanning `[min, max]`.
    pub histogram: Vec<usize>,
}

pub const HISTOGRAM_BINS: usize = 10;

impl MeasureStats {
    pub fn from_values(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let total: f64 = v.iter().sum();
        let mean = total / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut histogram = vec![0; HISTOGRAM_BINS];
        let width = (max - min) / HISTOGRAM_BINS as f64;
        for x in v {
            let b = if width > 0.0 { ((x - min) / width) as usize } else { 0 };
            histogram[b.min(HISTOGRAM_BINS - 1)] += 1;
        }
        let std_dev = var.sqrt();
        Some(Self { count: v.len(), total, mean, std_dev, cv: std_dev / mean, min, max, histogram })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub functional: ElementFunctional,
    pub converged: bool,
    pub iterations: usize,
    pub energy: Option<f64>,
    pub residual_norm: Option<f64>,
    pub areas: Option<MeasureStats>,
    pub lengths: Option<MeasureStats>,
    /// Free coordinates of the solved state.
    pub coords: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
}

/// Copy of `model` with `functional` assigned to every triangle (area
/// functionals) or every cable (length functionals).
pub fn with_uniform_functional(model: &Model, functional: ElementFunctional) -> Model {
    let mut m = model.clone();
    let id = m.functionals.len();
    m.functionals.push(functional);
    if functional.applies_to_areas() {
        m.elements.iter_mut().for_each(|e| e.functional = id);
    } else {
        for mem in &mut m.members {
            if let MemberRole::Cable { functional } = &mut mem.role {
                *functional = id;
            }
        }
    }
    // Drop functionals nothing refers to any more.
    let mut used = vec![false; m.functionals.len()];
    m.elements.iter().for_each(|e| used[e.functional] = true);
    m.cables().for_each(|(_, f)| used[f] = true);
    let mut remap = vec![usize::MAX; used.len()];
    let mut kept = Vec::new();
    for (i, f) in m.functionals.iter().enumerate() {
        if used[i] {
            remap[i] = kept.len();
            kept.push(*f);
        }
    }
    m.functionals = kept;
    m.elements.iter_mut().for_each(|e| e.functional = remap[e.functional]);
    for mem in &mut m.members {
        if let MemberRole::Cable { functional } = &mut mem.role {
            *functional = remap[*functional];
        }
    }
    m
}

/// One solve per functional with a shared seed; rows run in parallel and a
/// failed row records its error without stopping the others.
pub fn compare_functionals(
    model: &Model,
    functionals: &[ElementFunctional],
    options: &SolveOptions,
) -> Result<Comparison> {
    model.ensure_valid()?;
    let rows = functionals.par_iter().map(|&f| compare_row(model, f, options)).collect();
    Ok(Comparison { seed: options.seed, rows })
}

fn compare_row(model: &Model, functional: ElementFunctional, options: &SolveOptions) -> ComparisonRow {
    let failed = |e: String| ComparisonRow {
        functional,
        converged: false,
        iterations: 0,
        energy: None,
        residual_norm: None,
        areas: None,
        lengths: None,
        coords: None,
        error: Some(e),
    };
    let m = with_uniform_functional(model, functional);
    let state = match optimizer::minimize_constrained(&m, options) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    let asm = match Assembly::new(&m) {
        Ok(a) => a,
        Err(e) => return failed(e.to_string()),
    };
    let pos = asm.positions(&state.coords);
    ComparisonRow {
        functional,
        converged: state.converged,
        iterations: state.iterations,
        energy: Some(state.energy),
        residual_norm: Some(state.residual_norm),
        areas: MeasureStats::from_values(&asm.element_areas(&pos)),
        lengths: MeasureStats::from_values(&asm.cable_lengths(&pos)),
        coords: Some(state.coords),
        error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{LinearMember, Node};
    use approx::assert_abs_diff_eq;

    fn two_cables(n: f64) -> Model {
        Model {
            nodes: vec![Node::free(0, [0.; 3]), Node::fixed(1, [-1., 0., 0.]), Node::fixed(2, [2., 0., 0.])],
            functionals: vec![ElementFunctional::PowerLength { weight: n / 2.0, power: 2 }],
            members: vec![LinearMember::cable(0, 0, 1, 0), LinearMember::cable(1, 0, 2, 0)],
            elements: vec![],
        }
    }

    fn forces(n: Vec<f64>) -> GeneralizedForces {
        GeneralizedForces { member_forces: n, element_stresses: vec![], strut_multipliers: vec![] }
    }

    #[test]
    fn balanced_node_has_zero_residual() {
        let m = two_cables(3.0);
        let r = equilibrium_residual(&m, &[0.; 3], &forces(vec![3.0, 3.0])).unwrap();
        assert_eq!(r.inf_norm, 0.0);
        assert_eq!(r.nodes.len(), 1);
        assert_eq!(r.members[0].force_density, 3.0);
        assert_eq!(r.members[1].force_density, 1.5);
    }

    #[test]
    fn unbalanced_cable_residual_is_its_force() {
        let m = Model {
            nodes: vec![Node::free(0, [0.; 3]), Node::fixed(1, [0., 0., 2.])],
            functionals: vec![ElementFunctional::PowerLength { weight: 1.0, power: 2 }],
            members: vec![LinearMember::cable(0, 0, 1, 0)],
            elements: vec![],
        };
        let r = equilibrium_residual(&m, &[0.; 3], &forces(vec![2.5])).unwrap();
        assert_abs_diff_eq!(r.inf_norm, 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.relative_norm, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.nodes[0].residual[2], -2.5, epsilon = 1e-15);
    }

    #[test]
    fn residual_matches_total_gradient() {
        let m = fixtures::make_simplex(10.0);
        let asm = Assembly::new(&m).unwrap();
        let x = optimizer::random_initialization(asm.dimension(), 2.5, 5);
        let (g, f) = crate::functionals::total_gradient(&m, &x).unwrap();
        let r = equilibrium_residual(&m, &x, &f).unwrap();
        let flat: Vec<f64> = r.nodes.iter().flat_map(|n| n.residual).collect();
        for (a, b) in flat.iter().zip(&g) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn extended_density_arithmetic() {
        let d = ExtendedDensity::new(0, 2.0, 32.0);
        assert_eq!((d.q, d.w2, d.w4), (16.0, 8.0, 1.0));
    }

    #[test]
    fn extended_densities_rebuild_forces() {
        let m = fixtures::make_simplex(10.0);
        let asm = Assembly::new(&m).unwrap();
        let x = optimizer::random_initialization(asm.dimension(), 2.5, 9);
        let (_, f) = asm.gradient(&x).unwrap();
        for (d, n) in extended_force_densities(&m, &x, &f).unwrap().iter().zip(&f.member_forces) {
            assert!((d.q * d.length - n).abs() <= 1e-12 * n.abs());
            assert!((2.0 * d.w2 * d.length - n).abs() <= 1e-12 * n.abs());
            assert!((4.0 * d.w4 * d.length.powi(3) - n).abs() <= 1e-12 * n.abs());
        }
    }

    #[test]
    fn virtual_work_of_zero_variation_is_zero() {
        assert_eq!(relative_work(&[1.0, 2.0], &[0.0, 0.0], 1.0), 0.0);
    }

    #[test]
    fn virtual_work_detects_imbalance() {
        let m = two_cables(3.0);
        let w = virtual_work_check(&m, &[0.; 3], &forces(vec![3.0, 1.0]), 1, 10).unwrap();
        assert!(w > 1e-2);
        let w = virtual_work_check(&m, &[0.; 3], &forces(vec![3.0, 3.0]), 1, 10).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn stats_and_histogram() {
        let s = MeasureStats::from_values(&[1.0, 1.0, 3.0, 3.0]).unwrap();
        assert_eq!((s.total, s.mean, s.std_dev, s.cv), (8.0, 2.0, 1.0, 0.5));
        assert_eq!(s.histogram.iter().sum::<usize>(), 4);
        assert_eq!((s.histogram[0], s.histogram[HISTOGRAM_BINS - 1]), (2, 2));
        assert!(MeasureStats::from_values(&[]).is_none());
    }

    #[test]
    fn uniform_functional_reassigns_and_prunes() {
        let m = fixtures::make_cuboctahedron_membrane(2.0, 1.0, 10.0);
        let a = with_uniform_functional(&m, ElementFunctional::PlainArea);
        assert!(a.validate().is_empty());
        assert_eq!(a.functionals.len(), 2);
        assert!(a.elements.iter().all(|e| a.functionals[e.functional] == ElementFunctional::PlainArea));
        let l = with_uniform_functional(&m, ElementFunctional::PowerLength { weight: 1.0, power: 2 });
        assert!(l.cables().all(|(_, f)| l.functionals[f] == ElementFunctional::PowerLength { weight: 1.0, power: 2 }));
    }

    #[test]
    fn failing_rows_do_not_stop_the_comparison() {
        let m = fixtures::make_net(3, 3, &fixtures::corner_supports(3, 3, [0.0; 4]));
        let opts = SolveOptions { init: optimizer::Init::Model, max_iterations: 50, ..SolveOptions::default() };
        // A zero weight is rejected by validation, a valid row still runs.
        let c = compare_functionals(
            &m,
            &[
                ElementFunctional::PowerLength { weight: 0.0, power: 2 },
                ElementFunctional::PowerLength { weight: 1.0, power: 2 },
            ],
            &opts,
        )
        .unwrap();
        assert!(c.rows[0].error.is_some());
        assert!(c.rows[1].error.is_none());
        assert!(c.rows[1].lengths.is_some());
    }
}
