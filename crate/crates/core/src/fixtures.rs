//! Generators for the reference structures: the planar X-tensegrity, the
//! three-strut simplex, the 20-strut connection families, the cuboctahedral
//! membrane tensegrity, a ring-pair soap film and rectangular cable nets.
//! Two further models (a 220-cable net and a star-shaped tent) ship as
//! stored model files.
//!
//! Every generator is deterministic and returns a model that passes
//! [`Model::validate`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{ElementFunctional, LinearMember, Model, Node, TriElement};

const NET220_JSON: &str = include_str!("../fixtures/net220.json");
const TANZBRUNNEN_JSON: &str = include_str!("../fixtures/tanzbrunnen.json");

/// Radius of both rings of [`make_ring_membrane`].
pub const RING_RADIUS: f64 = 5.0;

/// Planar X-tensegrity: cables 0-2, 0-3, 1-2, 1-3 with `PowerLength(wᵢ, 4)`,
/// struts 0-1 and 2-3. All four nodes are free.
pub fn make_x_tensegrity(weights: [f64; 4], rest_lengths: [f64; 2]) -> Model {
    let nodes = vec![
        Node::free(0, [-1.0, 0.0, 0.0]),
        Node::free(1, [1.0, 0.0, 0.0]),
        Node::free(2, [0.0, -1.0, 0.0]),
        Node::free(3, [0.0, 1.0, 0.0]),
    ];
    let functionals = weights.iter().map(|&w| ElementFunctional::PowerLength { weight: w, power: 4 }).collect();
    let members = vec![
        LinearMember::cable(0, 0, 2, 0),
        LinearMember::cable(1, 0, 3, 1),
        LinearMember::cable(2, 1, 2, 2),
        LinearMember::cable(3, 1, 3, 3),
        LinearMember::strut(4, 0, 1, rest_lengths[0]),
        LinearMember::strut(5, 2, 3, rest_lengths[1]),
    ];
    Model { nodes, functionals, members, elements: vec![] }
}

/// Three-strut simplex with 9 cables (`PowerLength(1, 4)`): top triangle
/// 0-1-2, bottom triangle 3-4-5, verticals `3+i → i`; struts `3+i → (i+1)%3`.
pub fn make_simplex(rest_length: f64) -> Model {
    let mut nodes = Vec::with_capacity(6);
    let r = 0.5 * rest_length;
    let h = 0.8 * rest_length;
    for i in 0..3 {
        let a = 2.0 * PI * i as f64 / 3.0 + PI / 6.0;
        nodes.push(Node::free(i, [r * a.cos(), r * a.sin(), h]));
    }
    for i in 0..3 {
        let a = 2.0 * PI * i as f64 / 3.0;
        nodes.push(Node::free(3 + i, [r * a.cos(), r * a.sin(), 0.0]));
    }
    let mut members = Vec::with_capacity(12);
    for i in 0..3 {
        members.push(LinearMember::cable(members.len(), i, (i + 1) % 3, 0));
    }
    for i in 0..3 {
        members.push(LinearMember::cable(members.len(), 3 + i, 3 + (i + 1) % 3, 0));
    }
    for i in 0..3 {
        members.push(LinearMember::cable(members.len(), 3 + i, i, 0));
    }
    for i in 0..3 {
        members.push(LinearMember::strut(members.len(), 3 + i, (i + 1) % 3, rest_length));
    }
    Model {
        nodes,
        functionals: vec![ElementFunctional::PowerLength { weight: 1.0, power: 4 }],
        members,
        elements: vec![],
    }
}

/// Twenty struts `(2k−1, 2k)` (1-based) and 80 cables. For connection `c`,
/// cable `j` links `j → j+2c` with weight `w1` and cable `40+j` links
/// `j → j+2c+1` with weight `w2`, indices mod 40. Cables use power 4.
pub fn make_strut20(connection: u32, w1: f64, w2: f64, rest_length: f64) -> Result<Model> {
    if !(1..=9).contains(&connection) {
        return Err(Error::Input(format!("connection must be in 1..=9, got {connection}")));
    }
    const N: usize = 40;
    let c = connection as usize;
    let nodes = (0..N)
        .map(|i| {
            let a = 2.0 * PI * (i / 2) as f64 / 20.0;
            let r = 0.5 * rest_length;
            let z = if i % 2 == 0 { -0.4 } else { 0.4 } * rest_length;
            let twist = if i % 2 == 0 { 0.0 } else { 0.6 };
            Node::free(i, [r * (a + twist).cos(), r * (a + twist).sin(), z])
        })
        .collect();
    let mut members = Vec::with_capacity(100);
    for j in 0..N {
        members.push(LinearMember::cable(members.len(), j, (j + 2 * c) % N, 0));
    }
    for j in 0..N {
        members.push(LinearMember::cable(members.len(), j, (j + 2 * c + 1) % N, 1));
    }
    for k in 0..20 {
        members.push(LinearMember::strut(members.len(), 2 * k, 2 * k + 1, rest_length));
    }
    Ok(Model {
        nodes,
        functionals: vec![
            ElementFunctional::PowerLength { weight: w1, power: 4 },
            ElementFunctional::PowerLength { weight: w2, power: 4 },
        ],
        members,
        elements: vec![],
    })
}

/// Segments per boundary curve and cells per patch side of the cuboctahedral
/// membrane tensegrity.
pub const CUBOCTAHEDRON_DIVISIONS: usize = 8;

/// Membrane tensegrity on the cuboctahedral (Jessen) arrangement: 12
/// vertices, 6 struts, 24 boundary curves of 8 cable segments
/// (`PowerLength(w_cable, 4)`) and 6 folded square patches of 8×8×2
/// triangles (`PowerArea(w_membrane, 2)`). Node positions are the bilinear
/// patch interpolation, scaled so the struts start at `rest_length`.
pub fn make_cuboctahedron_membrane(w_cable: f64, w_membrane: f64, rest_length: f64) -> Model {
    let m = CUBOCTAHEDRON_DIVISIONS;
    let scale = rest_length / 4.0;
    let mut verts: Vec<[i32; 3]> = Vec::with_capacity(12);
    for s1 in [-1, 1] {
        for s2 in [-2, 2] {
            let v = [0, s1, s2];
            for shift in 0..3 {
                verts.push([v[(3 - shift) % 3], v[(4 - shift) % 3], v[(5 - shift) % 3]]);
            }
        }
    }
    let d2 = |a: [i32; 3], b: [i32; 3]| (0..3).map(|i| (a[i] - b[i]).pow(2)).sum::<i32>();

    let mut nodes: Vec<Node> =
        verts.iter().enumerate().map(|(i, v)| Node::free(i, v.map(|c| scale * c as f64))).collect();
    let functionals = vec![
        ElementFunctional::PowerLength { weight: w_cable, power: 4 },
        ElementFunctional::PowerArea { weight: w_membrane, power: 2 },
    ];
    let mut members = Vec::new();
    let mut elements = Vec::new();
    let add_node = |nodes: &mut Vec<Node>, p: [f64; 3]| {
        nodes.push(Node::free(nodes.len(), p));
        nodes.len() - 1
    };

    for a in 0..12 {
        for b in a + 1..12 {
            if d2(verts[a], verts[b]) != 4 {
                continue;
            }
            let common: Vec<usize> =
                (0..12).filter(|&c| d2(verts[a], verts[c]) == 6 && d2(verts[b], verts[c]) == 6).collect();
            debug_assert_eq!(common.len(), 2);
            // Corners in cycle order a, c, b, d map to (0,0), (1,0), (1,1), (0,1).
            let corner = [a, common[0], b, common[1]];
            let pos = |i: usize| nodes_pos(&verts[corner[i]], scale);
            let (p00, p10, p11, p01) = (pos(0), pos(1), pos(2), pos(3));
            let mut grid = vec![usize::MAX; (m + 1) * (m + 1)];
            let at = |i: usize, j: usize| i * (m + 1) + j;
            grid[at(0, 0)] = corner[0];
            grid[at(m, 0)] = corner[1];
            grid[at(m, m)] = corner[2];
            grid[at(0, m)] = corner[3];
            for i in 0..=m {
                for j in 0..=m {
                    if grid[at(i, j)] != usize::MAX {
                        continue;
                    }
                    let (u, v) = (i as f64 / m as f64, j as f64 / m as f64);
                    let p: [f64; 3] = std::array::from_fn(|k| {
                        (1.0 - u) * (1.0 - v) * p00[k]
                            + u * (1.0 - v) * p10[k]
                            + u * v * p11[k]
                            + (1.0 - u) * v * p01[k]
                    });
                    grid[at(i, j)] = add_node(&mut nodes, p);
                }
            }
            for s in 0..m {
                for (x, y) in [
                    (at(s, 0), at(s + 1, 0)),
                    (at(m, s), at(m, s + 1)),
                    (at(s, m), at(s + 1, m)),
                    (at(0, s), at(0, s + 1)),
                ] {
                    members.push(LinearMember::cable(members.len(), grid[x], grid[y], 0));
                }
            }
            for i in 0..m {
                for j in 0..m {
                    let (n00, n10, n11, n01) =
                        (grid[at(i, j)], grid[at(i + 1, j)], grid[at(i + 1, j + 1)], grid[at(i, j + 1)]);
                    // Alternate the diagonal to keep the mesh symmetric.
                    let tris = if (i + j) % 2 == 0 {
                        [[n00, n10, n11], [n00, n11, n01]]
                    } else {
                        [[n00, n10, n01], [n10, n11, n01]]
                    };
                    for t in tris {
                        elements.push(TriElement { id: elements.len(), vertices: t, functional: 1 });
                    }
                }
            }
        }
    }
    for a in 0..12 {
        for b in a + 1..12 {
            if d2(verts[a], verts[b]) == 16 {
                members.push(LinearMember::strut(members.len(), a, b, rest_length));
            }
        }
    }
    Model { nodes, functionals, members, elements }
}

fn nodes_pos(v: &[i32; 3], scale: f64) -> [f64; 3] {
    v.map(|c| scale * c as f64)
}

/// Soap film between two coaxial rings of radius [`RING_RADIUS`] at
/// `z = ±h/2`, meshed with `n_radial` bands of `n_hoop` quads split into
/// triangles. Both rings are fixed; interior nodes start on the cylinder.
/// Elements use `PlainArea`.
pub fn make_ring_membrane(height: f64, n_radial: usize, n_hoop: usize) -> Result<Model> {
    if !(height.is_finite() && height > 0.0) {
        return Err(Error::Input(format!("ring separation must be > 0, got {height}")));
    }
    if n_radial < 2 || n_hoop < 3 {
        return Err(Error::Input("ring membrane needs n_radial >= 2 and n_hoop >= 3".into()));
    }
    let mut nodes = Vec::with_capacity((n_radial + 1) * n_hoop);
    for i in 0..=n_radial {
        let z = -0.5 * height + height * i as f64 / n_radial as f64;
        // Stagger alternate rings by half a hoop step.
        let offset = if i % 2 == 1 { 0.5 } else { 0.0 };
        for j in 0..n_hoop {
            let a = 2.0 * PI * (j as f64 + offset) / n_hoop as f64;
            let p = [RING_RADIUS * a.cos(), RING_RADIUS * a.sin(), z];
            let id = nodes.len();
            nodes.push(if i == 0 || i == n_radial { Node::fixed(id, p) } else { Node::free(id, p) });
        }
    }
    let at = |i: usize, j: usize| i * n_hoop + j % n_hoop;
    let mut elements = Vec::with_capacity(2 * n_radial * n_hoop);
    for i in 0..n_radial {
        for j in 0..n_hoop {
            let tris = if i % 2 == 0 {
                [[at(i, j), at(i, j + 1), at(i + 1, j)], [at(i, j + 1), at(i + 1, j + 1), at(i + 1, j)]]
            } else {
                [[at(i, j), at(i + 1, j + 1), at(i + 1, j)], [at(i, j), at(i, j + 1), at(i + 1, j + 1)]]
            };
            for t in tris {
                elements.push(TriElement { id: elements.len(), vertices: t, functional: 0 });
            }
        }
    }
    Ok(Model { nodes, functionals: vec![ElementFunctional::PlainArea], members: vec![], elements })
}

/// A fixed node of a rectangular net, addressed by grid row and column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub row: usize,
    pub col: usize,
    pub z: f64,
}

/// The four corners of a `rows × cols` net at the given heights, listed
/// counter-clockwise from `(0, 0)`.
pub fn corner_supports(rows: usize, cols: usize, z: [f64; 4]) -> Vec<Support> {
    vec![
        Support { row: 0, col: 0, z: z[0] },
        Support { row: 0, col: cols - 1, z: z[1] },
        Support { row: rows - 1, col: cols - 1, z: z[2] },
        Support { row: rows - 1, col: 0, z: z[3] },
    ]
}

/// Rectangular grid of `PowerLength(1, 2)` cables with unit spacing in the
/// `xy` plane. Node `(r, c)` has id `r·cols + c`.
pub fn make_net(rows: usize, cols: usize, supports: &[Support]) -> Model {
    make_net_spaced(rows, cols, 1.0, supports)
}

pub fn make_net_spaced(rows: usize, cols: usize, spacing: f64, supports: &[Support]) -> Model {
    let mut nodes: Vec<Node> = (0..rows * cols)
        .map(|id| Node::free(id, [(id % cols) as f64 * spacing, (id / cols) as f64 * spacing, 0.0]))
        .collect();
    for s in supports {
        if s.row < rows && s.col < cols {
            let n = &mut nodes[s.row * cols + s.col];
            n.fixed = true;
            n.position.z = s.z;
        }
    }
    let mut members = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let id = r * cols + c;
            if c + 1 < cols {
                members.push(LinearMember::cable(members.len(), id, id + 1, 0));
            }
            if r + 1 < rows {
                members.push(LinearMember::cable(members.len(), id, id + cols, 0));
            }
        }
    }
    Model {
        nodes,
        functionals: vec![ElementFunctional::PowerLength { weight: 1.0, power: 2 }],
        members,
        elements: vec![],
    }
}

/// Stored 11×11 net with 220 cables and 5 fixed nodes (four corners and the
/// centre). Approximates a pictured net; the original topology is unknown.
pub fn net220() -> Model {
    io::parse_model(NET220_JSON).expect("stored net220 fixture parses")
}

/// Stored star-shaped tent: a low fixed eye ring, a radial membrane mesh and
/// six mast-supported high points with guy cables. Hand-built approximation.
pub fn tanzbrunnen() -> Model {
    io::parse_model(TANZBRUNNEN_JSON).expect("stored tanzbrunnen fixture parses")
}

/// Named fixture with its parameters, as accepted by the CLI and HTTP API.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum FixtureSpec {
    XTensegrity { weights: [f64; 4], rest_lengths: [f64; 2] },
    Simplex { rest_length: f64 },
    Strut20 { connection: u32, w1: f64, w2: f64, rest_length: f64 },
    Cuboctahedron { w_cable: f64, w_membrane: f64, rest_length: f64 },
    RingMembrane { height: f64, n_radial: usize, n_hoop: usize },
    Net { rows: usize, cols: usize },
    Net220,
    Tanzbrunnen,
}

pub const FIXTURE_NAMES: &[&str] =
    &["x_tensegrity", "simplex", "strut20", "cuboctahedron", "ring_membrane", "net", "net220", "tanzbrunnen"];

impl FixtureSpec {
    pub fn defaults(name: &str) -> Result<Self> {
        Ok(match name {
            "x_tensegrity" => Self::XTensegrity { weights: [1.0; 4], rest_lengths: [2f64.sqrt(); 2] },
            "simplex" => Self::Simplex { rest_length: 10.0 },
            "strut20" => Self::Strut20 { connection: 1, w1: 1.0, w2: 2.0, rest_length: 10.0 },
            "cuboctahedron" => Self::Cuboctahedron { w_cable: 2.0, w_membrane: 1.0, rest_length: 10.0 },
            "ring_membrane" => Self::RingMembrane { height: 4.0, n_radial: 12, n_hoop: 32 },
            "net" => Self::Net { rows: 10, cols: 10 },
            "net220" => Self::Net220,
            "tanzbrunnen" => Self::Tanzbrunnen,
            other => {
                return Err(Error::Input(format!("unknown fixture '{other}' (known: {})", FIXTURE_NAMES.join(", "))))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::XTensegrity { .. } => "x_tensegrity",
            Self::Simplex { .. } => "simplex",
            Self::Strut20 { .. } => "strut20",
            Self::Cuboctahedron { .. } => "cuboctahedron",
            Self::RingMembrane { .. } => "ring_membrane",
            Self::Net { .. } => "net",
            Self::Net220 => "net220",
            Self::Tanzbrunnen => "tanzbrunnen",
        }
    }

    /// Defaults for `name` overridden by `key=value` parameters. Weights and
    /// lengths of the X-tensegrity are set with `w1..w4` and `l1`, `l2`.
    pub fn with_params(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let mut spec = Self::defaults(name)?;
        for (key, &v) in params {
            let ok = match (&mut spec, key.as_str()) {
                (Self::XTensegrity { weights, .. }, k @ ("w1" | "w2" | "w3" | "w4")) => {
                    weights[k[1..].parse::<usize>().unwrap() - 1] = v;
                    true
                }
                (Self::XTensegrity { rest_lengths, .. }, k @ ("l1" | "l2")) => {
                    rest_lengths[k[1..].parse::<usize>().unwrap() - 1] = v;
                    true
                }
                (Self::Simplex { rest_length }, "rest_length")
                | (Self::Strut20 { rest_length, .. }, "rest_length")
                | (Self::Cuboctahedron { rest_length, .. }, "rest_length") => {
                    *rest_length = v;
                    true
                }
                (Self::Strut20 { connection, .. }, "connection") => {
                    *connection = as_count(key, v)? as u32;
                    true
                }
                (Self::Strut20 { w1, .. }, "w1") => {
                    *w1 = v;
                    true
                }
                (Self::Strut20 { w2, .. }, "w2") => {
                    *w2 = v;
                    true
                }
                (Self::Cuboctahedron { w_cable, .. }, "w_cable") => {
                    *w_cable = v;
                    true
                }
                (Self::Cuboctahedron { w_membrane, .. }, "w_membrane") => {
                    *w_membrane = v;
                    true
                }
                (Self::RingMembrane { height, .. }, "height") => {
                    *height = v;
                    true
                }
                (Self::RingMembrane { n_radial, .. }, "n_radial") => {
                    *n_radial = as_count(key, v)?;
                    true
                }
                (Self::RingMembrane { n_hoop, .. }, "n_hoop") => {
                    *n_hoop = as_count(key, v)?;
                    true
                }
                (Self::Net { rows, .. }, "rows") => {
                    *rows = as_count(key, v)?;
                    true
                }
                (Self::Net { cols, .. }, "cols") => {
                    *cols = as_count(key, v)?;
                    true
                }
                _ => false,
            };
            if !ok {
                return Err(Error::Input(format!("fixture '{name}' has no parameter '{key}'")));
            }
        }
        Ok(spec)
    }

    /// Builds the model and checks it.
    pub fn build(&self) -> Result<Model> {
        let model = match *self {
            Self::XTensegrity { weights, rest_lengths } => make_x_tensegrity(weights, rest_lengths),
            Self::Simplex { rest_length } => make_simplex(rest_length),
            Self::Strut20 { connection, w1, w2, rest_length } => make_strut20(connection, w1, w2, rest_length)?,
            Self::Cuboctahedron { w_cable, w_membrane, rest_length } => {
                make_cuboctahedron_membrane(w_cable, w_membrane, rest_length)
            }
            Self::RingMembrane { height, n_radial, n_hoop } => make_ring_membrane(height, n_radial, n_hoop)?,
            Self::Net { rows, cols } => {
                if rows < 2 || cols < 2 {
                    return Err(Error::Input("net needs at least 2 rows and 2 columns".into()));
                }
                make_net(rows, cols, &corner_supports(rows, cols, [0.0, 1.0, 0.0, 1.0]))
            }
            Self::Net220 => net220(),
            Self::Tanzbrunnen => tanzbrunnen(),
        };
        model.ensure_valid()?;
        Ok(model)
    }
}

/// Upper bound on count parameters (rows, divisions, connection index).
pub const MAX_COUNT_PARAM: usize = 512;

fn as_count(key: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= MAX_COUNT_PARAM as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Input(format!("parameter '{key}' must be an integer in 0..={MAX_COUNT_PARAM}, got {v}")))
    }
}
