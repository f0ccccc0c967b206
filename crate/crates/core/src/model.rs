//! Structural data model: nodes, linear members, triangular elements and the
//! element functionals assigned to them.
//!
//! A [`Model`] is plain data. [`Model::validate`] reports every broken
//! invariant; solvers refuse models with violations. The free/fixed split of
//! the node coordinates is captured by a [`DofMap`].

use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub type Point3 = Vector3<f64>;

/// Largest integer power accepted by the power-law functionals.
pub const MAX_POWER: u32 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: usize,
    pub position: Point3,
    pub fixed: bool,
}

impl Node {
    pub fn free(id: usize, position: [f64; 3]) -> Self {
        Self { id, position: Point3::from(position), fixed: false }
    }

    pub fn fixed(id: usize, position: [f64; 3]) -> Self {
        Self { id, position: Point3::from(position), fixed: true }
    }
}

/// Element functional `π(L)` for a linear member or `π(S)` for a triangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params", rename_all = "snake_case")]
pub enum ElementFunctional {
    /// `w·L^p`
    PowerLength { weight: f64, power: u32 },
    /// `½k(L − L̄)²`
    SpringLength { stiffness: f64, rest_length: f64 },
    /// `w·S^p`
    PowerArea { weight: f64, power: u32 },
    /// `S`
    PlainArea,
}

impl ElementFunctional {
    pub fn applies_to_lengths(&self) -> bool {
        matches!(self, Self::PowerLength { .. } | Self::SpringLength { .. })
    }

    pub fn applies_to_areas(&self) -> bool {
        matches!(self, Self::PowerArea { .. } | Self::PlainArea)
    }

    /// Problems with the parameters, independent of where the functional is used.
    pub fn parameter_problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match *self {
            Self::PowerLength { weight, power } | Self::PowerArea { weight, power } => {
                if !weight.is_finite() || weight <= 0.0 {
                    out.push(format!("weight must be finite and > 0, got {weight}"));
                }
                if power == 0 || power > MAX_POWER {
                    out.push(format!("power must be in 1..={MAX_POWER}, got {power}"));
                }
            }
            Self::SpringLength { stiffness, rest_length } => {
                if !stiffness.is_finite() || stiffness <= 0.0 {
                    out.push(format!("stiffness must be finite and > 0, got {stiffness}"));
                }
                if !rest_length.is_finite() || rest_length < 0.0 {
                    out.push(format!("rest length must be finite and >= 0, got {rest_length}"));
                }
            }
            Self::PlainArea => {}
        }
        out
    }
}

impl fmt::Display for ElementFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::PowerLength { weight, power } => write!(f, "{weight}*L^{power}"),
            Self::SpringLength { stiffness, rest_length } => {
                write!(f, "0.5*{stiffness}*(L-{rest_length})^2")
            }
            Self::PowerArea { weight, power } => write!(f, "{weight}*S^{power}"),
            Self::PlainArea => write!(f, "S"),
        }
    }
}

/// Role of a linear member.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MemberRole {
    /// Tension member carrying an element functional (index into
    /// [`Model::functionals`]).
    Cable { functional: usize },
    /// Compression member whose length is held at `rest_length`.
    Strut { rest_length: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearMember {
    pub id: usize,
    pub endpoints: [usize; 2],
    pub role: MemberRole,
}

impl LinearMember {
    pub fn cable(id: usize, a: usize, b: usize, functional: usize) -> Self {
        Self { id, endpoints: [a, b], role: MemberRole::Cable { functional } }
    }

    pub fn strut(id: usize, a: usize, b: usize, rest_length: f64) -> Self {
        Self { id, endpoints: [a, b], role: MemberRole::Strut { rest_length } }
    }

    pub fn is_strut(&self) -> bool {
        matches!(self.role, MemberRole::Strut { .. })
    }

    pub fn rest_length(&self) -> Option<f64> {
        match self.role {
            MemberRole::Strut { rest_length } => Some(rest_length),
            MemberRole::Cable { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriElement {
    pub id: usize,
    pub vertices: [usize; 3],
    pub functional: usize,
}

/// Entity named by a validation violation or a geometry error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Entity {
    Model,
    Node(usize),
    Member(usize),
    Element(usize),
    Functional(usize),
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Model => write!(f, "model"),
            Entity::Node(i) => write!(f, "node {i}"),
            Entity::Member(i) => write!(f, "member {i}"),
            Entity::Element(i) => write!(f, "element {i}"),
            Entity::Functional(i) => write!(f, "functional {i}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: Entity,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Model {
    pub nodes: Vec<Node>,
    pub functionals: Vec<ElementFunctional>,
    pub members: Vec<LinearMember>,
    pub elements: Vec<TriElement>,
}

impl Model {
    pub fn free_node_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.fixed).count()
    }

    pub fn cables(&self) -> impl Iterator<Item = (&LinearMember, usize)> {
        self.members.iter().filter_map(|m| match m.role {
            MemberRole::Cable { functional } => Some((m, functional)),
            MemberRole::Strut { .. } => None,
        })
    }

    pub fn struts(&self) -> impl Iterator<Item = (&LinearMember, f64)> {
        self.members.iter().filter_map(|m| match m.role {
            MemberRole::Strut { rest_length } => Some((m, rest_length)),
            MemberRole::Cable { .. } => None,
        })
    }

    pub fn cable_count(&self) -> usize {
        self.cables().count()
    }

    pub fn strut_count(&self) -> usize {
        self.struts().count()
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.nodes.iter().map(|n| n.position).collect()
    }

    /// Lists every broken invariant. Empty iff the model is usable by the
    /// solvers.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |entity, message: String| out.push(Violation { entity, message });
        let n_nodes = self.nodes.len();

        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                push(
                    Entity::Node(node.id),
                    format!("node ids must be dense from 0; found id {} at position {i}", node.id),
                );
            }
            if !node.position.iter().all(|c| c.is_finite()) {
                push(Entity::Node(node.id), "position is not finite".into());
            }
        }
        if !self.nodes.is_empty() && self.nodes.iter().all(|n| n.fixed) {
            push(Entity::Model, "fully fixed model: at least one free node is required".into());
        }
        if self.nodes.is_empty() {
            push(Entity::Model, "model has no nodes".into());
        }

        for (i, f) in self.functionals.iter().enumerate() {
            for p in f.parameter_problems() {
                push(Entity::Functional(i), p);
            }
        }

        for (i, m) in self.members.iter().enumerate() {
            let e = Entity::Member(m.id);
            if m.id != i {
                push(e, format!("member ids must be dense from 0; found id {} at position {i}", m.id));
            }
            let [a, b] = m.endpoints;
            if a >= n_nodes || b >= n_nodes {
                push(e, format!("endpoint out of range ({a}, {b}) with {n_nodes} nodes"));
            } else if a == b {
                push(e, format!("endpoints are identical ({a})"));
            }
            match m.role {
                MemberRole::Cable { functional } => match self.functionals.get(functional) {
                    None => push(e, format!("references missing functional {functional}")),
                    Some(f) if !f.applies_to_lengths() => {
                        push(e, format!("cable references area functional {functional} ({f})"))
                    }
                    Some(_) => {}
                },
                MemberRole::Strut { rest_length } => {
                    if !rest_length.is_finite() || rest_length <= 0.0 {
                        push(e, format!("strut prescribed length must be > 0, got {rest_length}"));
                    }
                }
            }
        }

        for (i, t) in self.elements.iter().enumerate() {
            let e = Entity::Element(t.id);
            if t.id != i {
                push(e, format!("element ids must be dense from 0; found id {} at position {i}", t.id));
            }
            let [a, b, c] = t.vertices;
            if a >= n_nodes || b >= n_nodes || c >= n_nodes {
                push(e, format!("vertex out of range ({a}, {b}, {c}) with {n_nodes} nodes"));
            } else if a == b || b == c || a == c {
                push(e, format!("vertices are not pairwise distinct ({a}, {b}, {c})"));
            }
            match self.functionals.get(t.functional) {
                None => push(e, format!("references missing functional {}", t.functional)),
                Some(f) if !f.applies_to_areas() => {
                    push(e, format!("triangle references length functional {} ({f})", t.functional))
                }
                Some(_) => {}
            }
        }
        out
    }

    /// Fails with [`ModelError::Invalid`] when [`Model::validate`] reports
    /// anything.
    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// Returns a copy whose node positions are taken from `coords` for the
    /// free nodes.
    pub fn with_coordinates(&self, dofs: &DofMap, coords: &[f64]) -> Model {
        let mut out = self.clone();
        for (node, pos) in out.nodes.iter_mut().zip(dofs.positions(self, coords)) {
            node.position = pos;
        }
        out
    }
}

/// Bijection between free-node coordinates `(node, axis)` and the indices
/// `0..n` of the unknown vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    /// Base index of each node's x coordinate, `None` for fixed nodes.
    base: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
}

impl DofMap {
    pub fn build(model: &Model) -> Result<Self, ModelError> {
        let mut base = Vec::with_capacity(model.nodes.len());
        let mut free_nodes = Vec::new();
        for (i, node) in model.nodes.iter().enumerate() {
            if node.fixed {
                base.push(None);
            } else {
                base.push(Some(3 * free_nodes.len()));
                free_nodes.push(i);
            }
        }
        if free_nodes.is_empty() {
            return Err(ModelError::FullyFixed);
        }
        Ok(Self { base, free_nodes })
    }

    /// Number of unknowns.
    pub fn len(&self) -> usize {
        3 * self.free_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free_nodes.is_empty()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn node_base(&self, node: usize) -> Option<usize> {
        self.base[node]
    }

    pub fn index(&self, node: usize, axis: usize) -> Option<usize> {
        debug_assert!(axis < 3);
        self.base[node].map(|b| b + axis)
    }

    /// Inverse of [`DofMap::index`].
    pub fn node_axis(&self, index: usize) -> (usize, usize) {
        (self.free_nodes[index / 3], index % 3)
    }

    /// Free coordinates read off the model's node positions.
    pub fn gather(&self, model: &Model) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for &n in &self.free_nodes {
            out.extend(model.nodes[n].position.iter());
        }
        out
    }

    /// All node positions: fixed nodes from the model, free nodes from `coords`.
    pub fn positions(&self, model: &Model, coords: &[f64]) -> Vec<Point3> {
        debug_assert_eq!(coords.len(), self.len());
        model
            .nodes
            .iter()
            .zip(&self.base)
            .map(|(node, base)| match base {
                Some(b) => Point3::new(coords[*b], coords[b + 1], coords[b + 2]),
                None => node.position,
            })
            .collect()
    }

    /// Adds a 3-vector block into `out` at the node's slots; fixed nodes are dropped.
    #[inline]
    pub fn scatter_add(&self, out: &mut [f64], node: usize, block: &Point3, scale: f64) {
        if let Some(b) = self.base[node] {
            out[b] += scale * block.x;
            out[b + 1] += scale * block.y;
            out[b + 2] += scale * block.z;
        }
    }
}
