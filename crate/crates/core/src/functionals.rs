//! Element functionals, the total functional `Π_w` and its gradient.
//!
//! `Π_w(x) = Σ π_j(L_j(x)) + Σ π_k(S_k(x))` over cables and triangles. The
//! strut terms `Σ λ_l (L_l − L̄_l)` are not part of `Π_w`; the optimizer owns
//! them. The gradient is assembled as `Σ n_j ∇L_j + Σ σ_k ∇S_k` with
//! `n_j = ∂π_j/∂L_j` and `σ_k = ∂π_k/∂S_k`, which are returned alongside.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, AreaGradient, LengthGradient};
use crate::model::{DofMap, ElementFunctional, Entity, Model, Point3};

impl ElementFunctional {
    /// `π(measure)`.
    pub fn energy(&self, measure: f64) -> f64 {
        match *self {
            Self::PowerLength { weight, power } | Self::PowerArea { weight, power } => {
                weight * measure.powi(power as i32)
            }
            Self::SpringLength { stiffness, rest_length } => {
                let d = measure - rest_length;
                0.5 * stiffness * d * d
            }
            Self::PlainArea => measure,
        }
    }

    /// `dπ/d(measure)`: the member force `n` or the element stress `σ`.
    pub fn force(&self, measure: f64) -> f64 {
        match *self {
            Self::PowerLength { weight, power } | Self::PowerArea { weight, power } => {
                f64::from(power) * weight * measure.powi(power as i32 - 1)
            }
            Self::SpringLength { stiffness, rest_length } => stiffness * (measure - rest_length),
            Self::PlainArea => 1.0,
        }
    }
}

impl ElementFunctional {
    /// `π(m + dm) − π(m)` without cancellation: the difference is formed
    /// from `dm` rather than from two rounded energies.
    pub fn energy_change(&self, measure: f64, dm: f64) -> f64 {
        let m1 = measure + dm;
        match *self {
            Self::PowerLength { weight, power } | Self::PowerArea { weight, power } => {
                // m1^p − m^p = dm · Σ m1^k m^(p−1−k)
                let sum: f64 = (0..power as i32).map(|k| m1.powi(k) * measure.powi(power as i32 - 1 - k)).sum();
                weight * dm * sum
            }
            Self::SpringLength { stiffness, rest_length } => 0.5 * stiffness * dm * (measure + m1 - 2.0 * rest_length),
            Self::PlainArea => dm,
        }
    }
}

pub fn element_energy(functional: &ElementFunctional, measure: f64) -> f64 {
    functional.energy(measure)
}

pub fn element_force(functional: &ElementFunctional, measure: f64) -> f64 {
    functional.force(measure)
}

/// Member forces, element stresses and strut multipliers of one state.
///
/// `member_forces` follows the order of cables in [`Model::members`],
/// `strut_multipliers` the order of struts, `element_stresses` the order of
/// [`Model::elements`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedForces {
    pub member_forces: Vec<f64>,
    pub element_stresses: Vec<f64>,
    pub strut_multipliers: Vec<f64>,
}

impl GeneralizedForces {
    /// Mean absolute cable force, the scale used by convergence tests.
    pub fn mean_abs_cable_force(&self) -> f64 {
        mean_abs(&self.member_forces)
    }

    /// Mean absolute axial force over cables and struts.
    pub fn mean_abs_member_force(&self) -> f64 {
        let n = self.member_forces.len() + self.strut_multipliers.len();
        if n == 0 {
            return 0.0;
        }
        let s: f64 = self.member_forces.iter().chain(&self.strut_multipliers).map(|x| x.abs()).sum();
        s / n as f64
    }

    pub fn norm(&self) -> f64 {
        self.member_forces
            .iter()
            .chain(&self.element_stresses)
            .chain(&self.strut_multipliers)
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct CableRef {
    pub member: usize,
    pub ends: [usize; 2],
    pub functional: ElementFunctional,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct StrutRef {
    pub member: usize,
    pub ends: [usize; 2],
    pub rest_length: f64,
}

/// A validated model with its dof map and flattened element tables, shared by
/// every evaluation routine.
#[derive(Clone, Debug)]
pub struct Assembly<'m> {
    pub model: &'m Model,
    pub dofs: DofMap,
    pub(crate) cables: Vec<CableRef>,
    pub(crate) struts: Vec<StrutRef>,
}

impl<'m> Assembly<'m> {
    pub fn new(model: &'m Model) -> Result<Self> {
        model.ensure_valid()?;
        let dofs = DofMap::build(model)?;
        let cables = model
            .cables()
            .map(|(m, f)| CableRef { member: m.id, ends: m.endpoints, functional: model.functionals[f] })
            .collect();
        let struts =
            model.struts().map(|(m, l)| StrutRef { member: m.id, ends: m.endpoints, rest_length: l }).collect();
        Ok(Self { model, dofs, cables, struts })
    }

    pub fn dimension(&self) -> usize {
        self.dofs.len()
    }

    pub fn cable_count(&self) -> usize {
        self.cables.len()
    }

    pub fn strut_count(&self) -> usize {
        self.struts.len()
    }

    /// Member ids of the cables, in force-vector order.
    pub fn cable_members(&self) -> impl Iterator<Item = usize> + '_ {
        self.cables.iter().map(|c| c.member)
    }

    /// Member ids of the struts, in multiplier order.
    pub fn strut_members(&self) -> impl Iterator<Item = usize> + '_ {
        self.struts.iter().map(|s| s.member)
    }

    pub fn strut_rest_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.struts.iter().map(|s| s.rest_length)
    }

    pub fn positions(&self, coords: &[f64]) -> Vec<Point3> {
        self.dofs.positions(self.model, coords)
    }

    pub fn initial_coordinates(&self) -> Vec<f64> {
        self.dofs.gather(self.model)
    }

    pub fn cable_lengths(&self, pos: &[Point3]) -> Vec<f64> {
        self.cables.iter().map(|c| geometry::member_length(&pos[c.ends[0]], &pos[c.ends[1]])).collect()
    }

    pub fn strut_lengths(&self, pos: &[Point3]) -> Vec<f64> {
        self.struts.iter().map(|s| geometry::member_length(&pos[s.ends[0]], &pos[s.ends[1]])).collect()
    }

    pub fn element_areas(&self, pos: &[Point3]) -> Vec<f64> {
        self.model
            .elements
            .iter()
            .map(|t| {
                let [a, b, c] = t.vertices;
                geometry::triangle_area(&pos[a], &pos[b], &pos[c])
            })
            .collect()
    }

    /// Largest `|L_k − L̄_k|` over the struts.
    pub fn constraint_violation(&self, pos: &[Point3]) -> f64 {
        self.struts
            .iter()
            .map(|s| (geometry::member_length(&pos[s.ends[0]], &pos[s.ends[1]]) - s.rest_length).abs())
            .fold(0.0, f64::max)
    }

    /// `Π_w` at the given free coordinates.
    pub fn energy(&self, coords: &[f64]) -> f64 {
        self.energy_at(&self.positions(coords))
    }

    pub fn energy_at(&self, pos: &[Point3]) -> f64 {
        let cables: f64 = self
            .cables
            .iter()
            .map(|c| c.functional.energy(geometry::member_length(&pos[c.ends[0]], &pos[c.ends[1]])))
            .sum();
        let elements: f64 = self
            .model
            .elements
            .iter()
            .map(|t| {
                let [a, b, c] = t.vertices;
                self.model.functionals[t.functional].energy(geometry::triangle_area(&pos[a], &pos[b], &pos[c]))
            })
            .sum();
        cables + elements
    }

    /// `Π_w(pos1) − Π_w(pos0)` accumulated per element from node
    /// displacements, accurate even when the change is far below the
    /// rounding error of `Π_w` itself.
    pub fn energy_change(&self, pos0: &[Point3], pos1: &[Point3]) -> f64 {
        let disp: Vec<Point3> = pos0.iter().zip(pos1).map(|(a, b)| b - a).collect();
        let cables: f64 = self
            .cables
            .iter()
            .map(|c| {
                let [a, b] = c.ends;
                let (l0, dl) = geometry::length_change(&pos0[a], &pos0[b], &disp[a], &disp[b]);
                c.functional.energy_change(l0, dl)
            })
            .sum();
        let elements: f64 = self
            .model
            .elements
            .iter()
            .map(|t| {
                let [a, b, c] = t.vertices;
                let (s0, ds) = geometry::area_change(&pos0[a], &pos0[b], &pos0[c], &disp[a], &disp[b], &disp[c]);
                self.model.functionals[t.functional].energy_change(s0, ds)
            })
            .sum();
        cables + elements
    }

    pub fn cable_gradient(&self, pos: &[Point3], k: usize) -> Result<LengthGradient> {
        let c = &self.cables[k];
        geometry::member_length_gradient(&pos[c.ends[0]], &pos[c.ends[1]])
            .map_err(|d| Error::DegenerateGeometry { entity: Entity::Member(c.member), measure: d.measure })
    }

    pub fn strut_gradient(&self, pos: &[Point3], k: usize) -> Result<LengthGradient> {
        let s = &self.struts[k];
        geometry::member_length_gradient(&pos[s.ends[0]], &pos[s.ends[1]])
            .map_err(|d| Error::DegenerateGeometry { entity: Entity::Member(s.member), measure: d.measure })
    }

    pub fn element_gradient(&self, pos: &[Point3], k: usize) -> Result<AreaGradient> {
        let t = &self.model.elements[k];
        let [a, b, c] = t.vertices;
        geometry::triangle_area_gradient(&pos[a], &pos[b], &pos[c])
            .map_err(|d| Error::DegenerateGeometry { entity: Entity::Element(t.id), measure: d.measure })
    }

    /// Scatters a strut's length gradient into a dense vector over the free
    /// coordinates.
    pub(crate) fn scatter_strut(&self, out: &mut [f64], k: usize, g: &LengthGradient, scale: f64) {
        let [a, b] = self.struts[k].ends;
        self.dofs.scatter_add(out, a, &g.p, scale);
        self.dofs.scatter_add(out, b, &g.q, scale);
    }

    /// `∇Π_w` over the free coordinates together with the element forces it
    /// was assembled from. Strut multipliers are left at zero.
    pub fn gradient(&self, coords: &[f64]) -> Result<(Vec<f64>, GeneralizedForces)> {
        let pos = self.positions(coords);
        let mut grad = vec![0.0; self.dimension()];
        let forces = self.gradient_at(&pos, &mut grad)?;
        Ok((grad, forces))
    }

    /// Energy, gradient and forces in one pass over the elements.
    pub fn evaluate(&self, coords: &[f64]) -> Result<(f64, Vec<f64>, GeneralizedForces)> {
        let pos = self.positions(coords);
        let mut grad = vec![0.0; self.dimension()];
        let forces = self.gradient_at(&pos, &mut grad)?;
        Ok((self.energy_at(&pos), grad, forces))
    }

    pub(crate) fn gradient_at(&self, pos: &[Point3], grad: &mut [f64]) -> Result<GeneralizedForces> {
        let mut member_forces = Vec::with_capacity(self.cables.len());
        for (k, c) in self.cables.iter().enumerate() {
            let g = self.cable_gradient(pos, k)?;
            let n = c.functional.force(geometry::member_length(&pos[c.ends[0]], &pos[c.ends[1]]));
            self.dofs.scatter_add(grad, c.ends[0], &g.p, n);
            self.dofs.scatter_add(grad, c.ends[1], &g.q, n);
            member_forces.push(n);
        }
        let mut element_stresses = Vec::with_capacity(self.model.elements.len());
        for (k, t) in self.model.elements.iter().enumerate() {
            let g = self.element_gradient(pos, k)?;
            let [a, b, c] = t.vertices;
            let s = geometry::triangle_area(&pos[a], &pos[b], &pos[c]);
            let sigma = self.model.functionals[t.functional].force(s);
            self.dofs.scatter_add(grad, a, &g.p, sigma);
            self.dofs.scatter_add(grad, b, &g.q, sigma);
            self.dofs.scatter_add(grad, c, &g.r, sigma);
            element_stresses.push(sigma);
        }
        Ok(GeneralizedForces { member_forces, element_stresses, strut_multipliers: vec![0.0; self.struts.len()] })
    }

    /// `Σ n_j ∇L_j + Σ σ_k ∇S_k + Σ λ_l ∇L_l` for arbitrary forces.
    pub fn equilibrium_vector(&self, coords: &[f64], forces: &GeneralizedForces) -> Result<Vec<f64>> {
        check_force_lengths(self, forces)?;
        let pos = self.positions(coords);
        let mut out = vec![0.0; self.dimension()];
        for (k, c) in self.cables.iter().enumerate() {
            let g = self.cable_gradient(&pos, k)?;
            self.dofs.scatter_add(&mut out, c.ends[0], &g.p, forces.member_forces[k]);
            self.dofs.scatter_add(&mut out, c.ends[1], &g.q, forces.member_forces[k]);
        }
        for (k, t) in self.model.elements.iter().enumerate() {
            let g = self.element_gradient(&pos, k)?;
            let s = forces.element_stresses[k];
            let [a, b, c] = t.vertices;
            self.dofs.scatter_add(&mut out, a, &g.p, s);
            self.dofs.scatter_add(&mut out, b, &g.q, s);
            self.dofs.scatter_add(&mut out, c, &g.r, s);
        }
        for k in 0..self.struts.len() {
            let g = self.strut_gradient(&pos, k)?;
            self.scatter_strut(&mut out, k, &g, forces.strut_multipliers[k]);
        }
        Ok(out)
    }
}

fn check_force_lengths(asm: &Assembly<'_>, f: &GeneralizedForces) -> Result<()> {
    if f.member_forces.len() != asm.cables.len()
        || f.element_stresses.len() != asm.model.elements.len()
        || f.strut_multipliers.len() != asm.struts.len()
    {
        return Err(Error::Input(format!(
            "force vector sizes ({}, {}, {}) do not match model ({} cables, {} elements, {} struts)",
            f.member_forces.len(),
            f.element_stresses.len(),
            f.strut_multipliers.len(),
            asm.cables.len(),
            asm.model.elements.len(),
            asm.struts.len()
        )));
    }
    Ok(())
}

fn check_dimension(asm: &Assembly<'_>, coords: &[f64]) -> Result<()> {
    if coords.len() != asm.dimension() {
        return Err(Error::Input(format!(
            "coordinate vector has {} entries, model has {} free coordinates",
            coords.len(),
            asm.dimension()
        )));
    }
    Ok(())
}

/// `Π_w` of `model` at the free coordinates `coords` (strut terms excluded).
pub fn total_energy(model: &Model, coords: &[f64]) -> Result<f64> {
    let asm = Assembly::new(model)?;
    check_dimension(&asm, coords)?;
    Ok(asm.energy(coords))
}

/// `∇Π_w` of `model` at `coords` with the element forces used.
pub fn total_gradient(model: &Model, coords: &[f64]) -> Result<(Vec<f64>, GeneralizedForces)> {
    let asm = Assembly::new(model)?;
    check_dimension(&asm, coords)?;
    asm.gradient(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearMember, Node, TriElement};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn element_energies() {
        assert_eq!(ElementFunctional::PowerLength { weight: 1.0, power: 4 }.energy(2.0), 16.0);
        assert_eq!(ElementFunctional::SpringLength { stiffness: 2.0, rest_length: 1.0 }.energy(3.0), 4.0);
        assert_eq!(ElementFunctional::PlainArea.energy(0.5), 0.5);
    }

    #[test]
    fn element_forces() {
        assert_eq!(ElementFunctional::PowerLength { weight: 1.0, power: 4 }.force(2.0), 32.0);
        assert_eq!(ElementFunctional::PowerLength { weight: 1.0, power: 2 }.force(5.0), 10.0);
        assert_eq!(ElementFunctional::SpringLength { stiffness: 3.0, rest_length: 2.0 }.force(1.0), -3.0);
        assert_eq!(ElementFunctional::PlainArea.force(7.0), 1.0);
        assert_eq!(ElementFunctional::PowerArea { weight: 0.5, power: 2 }.force(3.0), 3.0);
    }

    #[test]
    fn force_is_derivative_of_energy() {
        let catalog = [
            ElementFunctional::PowerLength { weight: 1.3, power: 1 },
            ElementFunctional::PowerLength { weight: 0.7, power: 3 },
            ElementFunctional::PowerLength { weight: 2.0, power: 8 },
            ElementFunctional::SpringLength { stiffness: 4.0, rest_length: 0.8 },
            ElementFunctional::PowerArea { weight: 1.0, power: 2 },
            ElementFunctional::PlainArea,
        ];
        for f in catalog {
            for x in [0.3, 1.0, 1.7] {
                let h = 1e-6;
                let fd = (f.energy(x + h) - f.energy(x - h)) / (2.0 * h);
                assert_relative_eq!(f.force(x), fd, max_relative = 1e-7, epsilon = 1e-9);
            }
        }
    }

    fn centroid_star(weights: [f64; 4]) -> Model {
        Model {
            nodes: vec![
                Node::free(0, [0.3, -0.2, 0.5]),
                Node::fixed(1, [1.0, 0.0, 0.0]),
                Node::fixed(2, [-1.0, 0.0, 0.0]),
                Node::fixed(3, [0.0, 1.0, 0.0]),
                Node::fixed(4, [0.0, -1.0, 0.0]),
            ],
            functionals: weights.iter().map(|&w| ElementFunctional::PowerLength { weight: w, power: 2 }).collect(),
            members: (0..4).map(|i| LinearMember::cable(i, 0, i + 1, i)).collect(),
            elements: vec![],
        }
    }

    #[test]
    fn symmetric_star_has_zero_gradient_at_centre() {
        let m = centroid_star([1.5; 4]);
        let (g, f) = total_gradient(&m, &[0.0, 0.0, 0.0]).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-15), "{g:?}");
        assert_eq!(f.member_forces, vec![3.0; 4]);
    }

    #[test]
    fn single_cable_energy() {
        let m = Model {
            nodes: vec![Node::free(0, [0.0; 3]), Node::fixed(1, [1.0, 0.0, 0.0])],
            functionals: vec![ElementFunctional::PowerLength { weight: 1.0, power: 2 }],
            members: vec![LinearMember::cable(0, 0, 1, 0)],
            elements: vec![],
        };
        assert_eq!(total_energy(&m, &[0.0, 0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let m = centroid_star([1.0; 4]);
        assert!(matches!(total_energy(&m, &[0.0; 6]), Err(Error::Input(_))));
    }

    #[test]
    fn degenerate_cable_names_the_member() {
        let m = centroid_star([1.0; 4]);
        let err = total_gradient(&m, &[1.0, 0.0, 0.0]).unwrap_err();
        assert_eq!(err, Error::DegenerateGeometry { entity: Entity::Member(0), measure: 0.0 });
    }

    /// Random all-free model of cables and triangles on a few nodes.
    fn random_model(rng: &mut ChaCha8Rng) -> (Model, Vec<f64>) {
        let n = rng.gen_range(4..9);
        let nodes: Vec<Node> = (0..n)
            .map(|i| Node::free(i, [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]))
            .collect();
        let functionals = vec![
            ElementFunctional::PowerLength { weight: rng.gen_range(0.5..2.0), power: rng.gen_range(1..5) },
            ElementFunctional::SpringLength { stiffness: 2.0, rest_length: 0.5 },
            ElementFunctional::PowerArea { weight: rng.gen_range(0.5..2.0), power: 2 },
            ElementFunctional::PlainArea,
        ];
        let mut members = Vec::new();
        for i in 0..n {
            let j = (i + 1 + rng.gen_range(0..n - 1)) % n;
            members.push(LinearMember::cable(members.len(), i, j, rng.gen_range(0..2)));
        }
        let elements = (0..n - 2)
            .map(|k| TriElement { id: k, vertices: [k, k + 1, k + 2], functional: 2 + rng.gen_range(0..2) })
            .collect();
        let m = Model { nodes, functionals, members, elements };
        let x = DofMap::build(&m).unwrap().gather(&m);
        (m, x)
    }

    #[test]
    fn gradient_matches_directional_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (m, x) = random_model(&mut rng);
            let asm = Assembly::new(&m).unwrap();
            let (g, _) = asm.gradient(&x).unwrap();
            let d: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let shifted = |s: f64| -> Vec<f64> { x.iter().zip(&d).map(|(a, b)| a + s * b).collect() };
            let fd = (asm.energy(&shifted(h)) - asm.energy(&shifted(-h))) / (2.0 * h);
            let an: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert_relative_eq!(an, fd, max_relative = 1e-6, epsilon = 1e-7);
        }
    }

    #[test]
    fn all_free_gradient_is_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (m, x) = random_model(&mut rng);
            let (g, _) = total_gradient(&m, &x).unwrap();
            for axis in 0..3 {
                let s: f64 = g.iter().skip(axis).step_by(3).sum();
                assert!(s.abs() < 1e-10, "axis {axis}: {s}");
            }
        }
    }

    #[test]
    fn gradient_equals_element_wise_virtual_work() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let (m, x) = random_model(&mut rng);
            let asm = Assembly::new(&m).unwrap();
            let (g, forces) = asm.gradient(&x).unwrap();
            let pos = asm.positions(&x);
            let dx: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // All nodes are free, so the displacement field is just dx.
            let dpos = asm.positions(&dx);
            let mut dw = 0.0;
            for (k, c) in asm.cables.iter().enumerate() {
                let lg = asm.cable_gradient(&pos, k).unwrap();
                dw += forces.member_forces[k] * (lg.p.dot(&dpos[c.ends[0]]) + lg.q.dot(&dpos[c.ends[1]]));
            }
            for (k, t) in m.elements.iter().enumerate() {
                let sg = asm.element_gradient(&pos, k).unwrap();
                let ds: f64 = sg.blocks().iter().zip(t.vertices).map(|(b, v)| b.dot(&dpos[v])).sum();
                dw += forces.element_stresses[k] * ds;
            }
            let gdx: f64 = g.iter().zip(&dx).map(|(a, b)| a * b).sum();
            assert_relative_eq!(gdx, dw, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn extended_force_density_identities() {
        for l in [0.4, 1.0, 2.5] {
            let w = 1.7;
            let n4 = ElementFunctional::PowerLength { weight: w, power: 4 }.force(l);
            assert_relative_eq!(n4 / (4.0 * l.powi(3)), w, max_relative = 1e-15);
            let n2 = ElementFunctional::PowerLength { weight: w, power: 2 }.force(l);
            assert_relative_eq!(n2 / (2.0 * l), w, max_relative = 1e-15);
        }
    }

    #[test]
    fn energy_change_matches_plain_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let (m, x) = random_model(&mut rng);
            let asm = Assembly::new(&m).unwrap();
            let y: Vec<f64> = x.iter().map(|a| a + rng.gen_range(-0.3..0.3)).collect();
            let (p0, p1) = (asm.positions(&x), asm.positions(&y));
            let plain = asm.energy(&y) - asm.energy(&x);
            assert_relative_eq!(asm.energy_change(&p0, &p1), plain, max_relative = 1e-9, epsilon = 1e-10);
        }
    }

    #[test]
    fn energy_change_resolves_steps_below_round_off() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (m, x) = random_model(&mut rng);
        let asm = Assembly::new(&m).unwrap();
        let (g, _) = asm.gradient(&x).unwrap();
        let h = 1e-13;
        let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - h * b).collect();
        let de = asm.energy_change(&asm.positions(&x), &asm.positions(&y));
        let predicted = -h * g.iter().map(|v| v * v).sum::<f64>();
        assert!(de < 0.0);
        assert_relative_eq!(de, predicted, max_relative = 1e-2);
    }
}
