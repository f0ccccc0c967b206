//! Model files, exports and the request/response types shared by the CLI
//! and the HTTP service.
//!
//! Model files are JSON tagged with [`FORMAT_VERSION`]:
//!
//! ```json
//! {
//!   "version": "tensiform/1",
//!   "nodes": [{"id": 0, "xyz": [0, 0, 0], "fixed": true}, ...],
//!   "functionals": [{"id": 0, "variant": "power_length", "params": {"weight": 1, "power": 4}}],
//!   "members": [{"id": 0, "endpoints": [0, 1], "role": "cable", "functional_id": 0},
//!               {"id": 1, "endpoints": [1, 2], "role": "strut", "rest_length": 10}],
//!   "elements": [{"id": 0, "vertices": [0, 1, 2], "functional_id": 1}]
//! }
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{self, Comparison, EquilibriumReport, Role};
use crate::error::{Error, ModelError};
use crate::functionals::{Assembly, GeneralizedForces};
use crate::linear_fdm::{self, LinearSolution, NullSpaceReport};
use crate::model::{ElementFunctional, Entity, LinearMember, MemberRole, Model, Node, TriElement, Violation};
use crate::optimizer::{self, ConvergedState, SolveOptions, TracePoint};

pub const FORMAT_VERSION: &str = "tensiform/1";

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unsupported format version '{0}' (expected '{FORMAT_VERSION}')")]
    Version(String),
    #[error("malformed model file: {0}")]
    Schema(String),
    #[error(transparent)]
    Invalid(#[from] ModelError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl LoadError {
    /// Violations carried by an invalid model, empty for other failures.
    pub fn violations(&self) -> &[Violation] {
        match self {
            LoadError::Invalid(ModelError::Invalid(v)) => v,
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub xyz: [f64; 3],
    #[serde(default)]
    pub fixed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRecord {
    pub id: usize,
    #[serde(flatten)]
    pub functional: ElementFunctional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum RoleRecord {
    Cable { functional_id: usize },
    Strut { rest_length: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub id: usize,
    pub endpoints: [usize; 2],
    #[serde(flatten)]
    pub role: RoleRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub id: usize,
    pub vertices: [usize; 3],
    pub functional_id: usize,
}

/// On-disk and on-wire form of a [`Model`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<NodeRecord>,
    #[serde(default)]
    pub functionals: Vec<FunctionalRecord>,
    #[serde(default)]
    pub members: Vec<MemberRecord>,
    #[serde(default)]
    pub elements: Vec<ElementRecord>,
}

impl ModelFile {
    pub fn from_model(model: &Model) -> Self {
        Self {
            version: FORMAT_VERSION.to_string(),
            name: None,
            nodes: model
                .nodes
                .iter()
                .map(|n| NodeRecord { id: n.id, xyz: [n.position.x, n.position.y, n.position.z], fixed: n.fixed })
                .collect(),
            functionals: model
                .functionals
                .iter()
                .enumerate()
                .map(|(id, &functional)| FunctionalRecord { id, functional })
                .collect(),
            members: model
                .members
                .iter()
                .map(|m| MemberRecord {
                    id: m.id,
                    endpoints: m.endpoints,
                    role: match m.role {
                        MemberRole::Cable { functional } => RoleRecord::Cable { functional_id: functional },
                        MemberRole::Strut { rest_length } => RoleRecord::Strut { rest_length },
                    },
                })
                .collect(),
            elements: model
                .elements
                .iter()
                .map(|e| ElementRecord { id: e.id, vertices: e.vertices, functional_id: e.functional })
                .collect(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Converts to a model and runs validation; every problem is reported.
    pub fn to_model(&self) -> Result<Model, LoadError> {
        if self.version != FORMAT_VERSION {
            return Err(LoadError::Version(self.version.clone()));
        }
        let mut violations = Vec::new();
        for (i, f) in self.functionals.iter().enumerate() {
            if f.id != i {
                violations.push(Violation {
                    entity: Entity::Functional(f.id),
                    message: format!("functional ids must be dense from 0; found id {} at position {i}", f.id),
                });
            }
        }
        let model = Model {
            nodes: self.nodes.iter().map(|n| Node { id: n.id, position: n.xyz.into(), fixed: n.fixed }).collect(),
            functionals: self.functionals.iter().map(|f| f.functional).collect(),
            members: self
                .members
                .iter()
                .map(|m| LinearMember {
                    id: m.id,
                    endpoints: m.endpoints,
                    role: match m.role {
                        RoleRecord::Cable { functional_id } => MemberRole::Cable { functional: functional_id },
                        RoleRecord::Strut { rest_length } => MemberRole::Strut { rest_length },
                    },
                })
                .collect(),
            elements: self
                .elements
                .iter()
                .map(|e| TriElement { id: e.id, vertices: e.vertices, functional: e.functional_id })
                .collect(),
        };
        violations.extend(model.validate());
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(LoadError::Invalid(ModelError::Invalid(violations)))
        }
    }
}

fn json_error(e: serde_json::Error) -> LoadError {
    use serde_json::error::Category;
    match e.classify() {
        Category::Syntax | Category::Eof | Category::Io => {
            LoadError::Syntax { line: e.line(), column: e.column(), message: e.to_string() }
        }
        Category::Data => LoadError::Schema(e.to_string()),
    }
}

/// Parses a model file without validating it.
pub fn parse_model_file(text: &str) -> Result<ModelFile, LoadError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_error)?;
    if let Some(v) = value.get("version") {
        match v.as_str() {
            Some(FORMAT_VERSION) => {}
            Some(other) => return Err(LoadError::Version(other.to_string())),
            None => return Err(LoadError::Schema("version must be a string".into())),
        }
    }
    serde_json::from_value(value).map_err(json_error)
}

/// Parses and validates a model from JSON text.
pub fn parse_model(text: &str) -> Result<Model, LoadError> {
    parse_model_file(text)?.to_model()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, LoadError> {
    parse_model(&read(path.as_ref())?)
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), LoadError> {
    fs::write(path, contents).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

pub fn model_to_json(model: &Model) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model file serializes")
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), LoadError> {
    write_file(path.as_ref(), model_to_json(model).as_bytes())
}

/// Formats `v` with 9 significant digits, trimming trailing zeros.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..9).contains(&exp) {
        return format!("{v:.8e}");
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

/// Wavefront OBJ text: `v` per node in id order, `l` per member and `f` per
/// triangle, 1-based. `coords` (free coordinates) override the stored node
/// positions when given.
pub fn obj_string(model: &Model, coords: Option<&[f64]>) -> Result<String, Error> {
    let positions = match coords {
        Some(c) => {
            let asm = Assembly::new(model)?;
            if c.len() != asm.dimension() {
                return Err(Error::Input(format!(
                    "coordinate vector has {} entries, model has {} free coordinates",
                    c.len(),
                    asm.dimension()
                )));
            }
            asm.positions(c)
        }
        None => model.positions(),
    };
    let mut out = String::new();
    for p in &positions {
        let _ = writeln!(out, "v {} {} {}", format_sig9(p.x), format_sig9(p.y), format_sig9(p.z));
    }
    for m in &model.members {
        let _ = writeln!(out, "l {} {}", m.endpoints[0] + 1, m.endpoints[1] + 1);
    }
    for e in &model.elements {
        let [a, b, c] = e.vertices;
        let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    Ok(out)
}

pub fn export_obj(model: &Model, coords: Option<&[f64]>, path: impl AsRef<Path>) -> Result<(), Error> {
    let text = obj_string(model, coords)?;
    write_file(path.as_ref(), text.as_bytes()).map_err(|e| Error::Input(e.to_string()))
}

pub const CSV_HEADER: [&str; 8] = ["member_id", "role", "L", "n", "q", "w2", "w4", "lambda"];

/// CSV member report. Cables fill `n, q, w2, w4`; struts fill `n = λ`,
/// `q = λ/L` and `lambda`. Two `#` comment lines carry the residual norms.
pub fn report_csv(report: &EquilibriumReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for m in &report.members {
        let (role, w2, w4, lambda) = match m.role {
            Role::Cable => {
                let d = analysis::ExtendedDensity::new(m.member_id, m.length, m.force);
                ("cable", d.w2.to_string(), d.w4.to_string(), String::new())
            }
            Role::Strut => ("strut", String::new(), String::new(), m.force.to_string()),
        };
        w.write_record([
            m.member_id.to_string(),
            role.to_string(),
            m.length.to_string(),
            m.force.to_string(),
            m.force_density.to_string(),
            w2,
            w4,
            lambda,
        ])
        .expect("in-memory write");
    }
    let mut bytes = w.into_inner().expect("in-memory flush");
    let _ = writeln!(bytes, "# residual_inf={}", report.inf_norm);
    let _ = writeln!(bytes, "# residual_rel={}", report.relative_norm);
    String::from_utf8(bytes).expect("utf-8 csv")
}

pub fn export_report_csv(report: &EquilibriumReport, path: impl AsRef<Path>) -> Result<(), LoadError> {
    write_file(path.as_ref(), report_csv(report).as_bytes())
}

/// Force densities from a q-file: whitespace- or comma-separated numbers,
/// `#` starts a comment.
pub fn parse_q_file(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        for tok in body.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|_| format!("line {}: '{tok}' is not a number", ln + 1))?;
            if !v.is_finite() {
                return Err(format!("line {}: force density must be finite", ln + 1));
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Parses a comma-separated list of element functionals:
/// `area`, `area^2`, `0.5*area^2`, `length^4`, `2*length^2`,
/// `spring(k, rest)`.
pub fn parse_functional_list(text: &str) -> Result<Vec<ElementFunctional>, String> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    let mut items = Vec::new();
    for (i, ch) in text.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                items.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    items.push(&text[start..]);
    for item in items {
        out.push(parse_functional(item.trim())?);
    }
    Ok(out)
}

fn parse_functional(item: &str) -> Result<ElementFunctional, String> {
    let compact: String = item.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err("empty functional".into());
    }
    let number = |s: &str| -> Result<f64, String> {
        let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number in '{item}'"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("'{s}' must be finite in '{item}'"))
        }
    };
    if let Some(args) = compact.strip_prefix("spring(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = args.split(',').collect();
        if parts.len() != 2 {
            return Err(format!("spring takes (stiffness, rest_length): '{item}'"));
        }
        let f = ElementFunctional::SpringLength { stiffness: number(parts[0])?, rest_length: number(parts[1])? };
        return checked(f, item);
    }
    let (weight, rest) = match compact.split_once('*') {
        Some((w, r)) => (Some(number(w)?), r),
        None => (None, compact.as_str()),
    };
    let (base, power) = match rest.split_once('^') {
        Some((b, p)) => {
            let p: u32 = p.parse().map_err(|_| format!("'{p}' is not a non-negative integer power in '{item}'"))?;
            (b, Some(p))
        }
        None => (rest, None),
    };
    let f = match (base, weight, power) {
        ("area", None, None) => ElementFunctional::PlainArea,
        ("area", w, p) => ElementFunctional::PowerArea { weight: w.unwrap_or(1.0), power: p.unwrap_or(1) },
        ("length", w, p) => ElementFunctional::PowerLength { weight: w.unwrap_or(1.0), power: p.unwrap_or(1) },
        _ => return Err(format!("unknown functional '{item}' (expected area, length or spring(k, rest))")),
    };
    checked(f, item)
}

fn checked(f: ElementFunctional, item: &str) -> Result<ElementFunctional, String> {
    match f.parameter_problems().first() {
        Some(p) => Err(format!("{item}: {p}")),
        None => Ok(f),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Linear,
    #[default]
    Formfind,
    Compare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRequest {
    pub model: ModelFile,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub options: SolveOptions,
    /// Force densities for `linear`; defaults per member role.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    /// Functionals compared by `compare`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub functionals: Vec<ElementFunctional>,
    /// Seeds for batch solves; ignored by single solves.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

impl SolveRequest {
    pub fn formfind(model: &Model, options: SolveOptions) -> Self {
        Self {
            model: ModelFile::from_model(model),
            mode: Mode::Formfind,
            options,
            q: None,
            functionals: vec![],
            seeds: vec![],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    NotConverged,
    Solved,
    Failed,
}

/// How a request ended; mapped to CLI exit codes and HTTP statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    NotConverged,
    InputError,
    Internal,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::NotConverged => 1,
            Outcome::InputError | Outcome::Internal => 2,
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            Outcome::Ok => 200,
            Outcome::NotConverged => 422,
            Outcome::InputError => 400,
            Outcome::Internal => 500,
        }
    }

    fn worst(self, other: Outcome) -> Outcome {
        let rank = |o: Outcome| match o {
            Outcome::Ok => 0,
            Outcome::NotConverged => 1,
            Outcome::InputError => 2,
            Outcome::Internal => 3,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

/// Evenly subsampled iteration history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub total: usize,
    pub points: Vec<TracePoint>,
}

pub const TRACE_POINTS: usize = 200;

impl TraceSummary {
    pub fn from_trace(trace: &[TracePoint]) -> Self {
        let n = trace.len();
        let points = if n <= TRACE_POINTS {
            trace.to_vec()
        } else {
            (0..TRACE_POINTS).map(|i| trace[i * (n - 1) / (TRACE_POINTS - 1)]).collect()
        };
        Self { total: n, points }
    }
}

/// Wire projection of a [`ConvergedState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub coords: Vec<f64>,
    /// All node positions in id order.
    pub positions: Vec<[f64; 3]>,
    pub forces: GeneralizedForces,
    pub energy: f64,
    pub residual_norm: f64,
    pub residual_scale: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub jitter_events: usize,
    pub trace: TraceSummary,
}

impl StateSummary {
    pub fn new(model: &Model, s: &ConvergedState) -> Result<Self, Error> {
        let asm = Assembly::new(model)?;
        Ok(Self {
            positions: asm.positions(&s.coords).iter().map(|p| [p.x, p.y, p.z]).collect(),
            coords: s.coords.clone(),
            forces: s.forces.clone(),
            energy: s.energy,
            residual_norm: s.residual_norm,
            residual_scale: s.residual_scale,
            constraint_violation: s.constraint_violation,
            iterations: s.iterations,
            converged: s.converged,
            jitter_events: s.jitter_events,
            trace: TraceSummary::from_trace(&s.trace),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub mode: Mode,
    pub seed: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearSolution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_space: Option<NullSpaceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl SolveResult {
    fn empty(mode: Mode, seed: u64, status: Status) -> Self {
        Self { mode, seed, status, state: None, linear: None, null_space: None, comparison: None, error: None }
    }

    fn failure(mode: Mode, seed: u64, error: &Error) -> (Self, Outcome) {
        let mut r = Self::empty(mode, seed, Status::Failed);
        let (kind, outcome) = match error {
            Error::Model(_) => ("invalid_model", Outcome::InputError),
            Error::Input(_) => ("invalid_input", Outcome::InputError),
            Error::NoFixedNodes(rep) => {
                r.null_space = Some((**rep).clone());
                ("no_fixed_nodes", Outcome::InputError)
            }
            Error::SingularSystem(rep) => {
                r.null_space = Some((**rep).clone());
                ("singular_system", Outcome::InputError)
            }
            Error::DegenerateGeometry { .. } => ("degenerate_geometry", Outcome::NotConverged),
        };
        let violations = match error {
            Error::Model(ModelError::Invalid(v)) => v.clone(),
            _ => vec![],
        };
        r.error = Some(ErrorBody { kind: kind.into(), message: error.to_string(), violations });
        (r, outcome)
    }

    fn load_failure(mode: Mode, seed: u64, e: &LoadError) -> (Self, Outcome) {
        let mut r = Self::empty(mode, seed, Status::Failed);
        r.error = Some(ErrorBody {
            kind: "invalid_model".into(),
            message: e.to_string(),
            violations: e.violations().to_vec(),
        });
        (r, Outcome::InputError)
    }

    /// Free coordinates and generalized forces of whichever solution is present.
    pub fn coordinates_and_forces(&self, model: &Model) -> Option<(Vec<f64>, GeneralizedForces)> {
        if let Some(s) = &self.state {
            return Some((s.coords.clone(), s.forces.clone()));
        }
        let lin = self.linear.as_ref()?;
        let mut forces =
            GeneralizedForces { member_forces: vec![], element_stresses: vec![], strut_multipliers: vec![] };
        for (m, &n) in model.members.iter().zip(&lin.tensions) {
            if m.is_strut() {
                forces.strut_multipliers.push(n);
            } else {
                forces.member_forces.push(n);
            }
        }
        Some((lin.coords.clone(), forces))
    }
}

/// Runs one request. Shared by the CLI and the HTTP service so both produce
/// identical results for identical input.
pub fn run_request(req: &SolveRequest) -> (SolveResult, Outcome) {
    let seed = req.options.seed;
    let model = match req.model.to_model() {
        Ok(m) => m,
        Err(e) => return SolveResult::load_failure(req.mode, seed, &e),
    };
    match req.mode {
        Mode::Linear => {
            let q = req.q.clone().unwrap_or_else(|| linear_fdm::default_force_densities(&model));
            match linear_fdm::solve_linear_fdm(&model, &q) {
                Ok(sol) => {
                    let mut r = SolveResult::empty(Mode::Linear, seed, Status::Solved);
                    r.linear = Some(sol);
                    (r, Outcome::Ok)
                }
                Err(e) => SolveResult::failure(Mode::Linear, seed, &e),
            }
        }
        Mode::Formfind => match optimizer::minimize_constrained(&model, &req.options) {
            Ok(state) => formfind_result(&model, seed, &state),
            Err(e) => SolveResult::failure(Mode::Formfind, seed, &e),
        },
        Mode::Compare => {
            if req.functionals.is_empty() {
                return SolveResult::failure(
                    Mode::Compare,
                    seed,
                    &Error::Input("compare needs at least one functional".into()),
                );
            }
            match analysis::compare_functionals(&model, &req.functionals, &req.options) {
                Ok(c) => {
                    let all = c.rows.iter().all(|r| r.converged);
                    let mut r = SolveResult::empty(
                        Mode::Compare,
                        seed,
                        if all { Status::Converged } else { Status::NotConverged },
                    );
                    r.comparison = Some(c);
                    (r, if all { Outcome::Ok } else { Outcome::NotConverged })
                }
                Err(e) => SolveResult::failure(Mode::Compare, seed, &e),
            }
        }
    }
}

fn formfind_result(model: &Model, seed: u64, state: &ConvergedState) -> (SolveResult, Outcome) {
    match StateSummary::new(model, state) {
        Ok(summary) => {
            let (status, outcome) = if state.converged {
                (Status::Converged, Outcome::Ok)
            } else {
                (Status::NotConverged, Outcome::NotConverged)
            };
            let mut r = SolveResult::empty(Mode::Formfind, seed, status);
            r.state = Some(summary);
            (r, outcome)
        }
        Err(e) => SolveResult::failure(Mode::Formfind, seed, &e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub seeds: Vec<u64>,
    /// Final energy per seed, `None` where the solve failed.
    pub energies: Vec<Option<f64>>,
    pub converged: Vec<bool>,
    pub results: Vec<SolveResult>,
}

/// Form-finds once per seed (in parallel). An empty seed list runs the
/// request's own seed. The batch succeeds when at least one seed converges;
/// per-seed statuses are in the results.
pub fn run_batch(req: &SolveRequest) -> (BatchResult, Outcome) {
    let seeds = if req.seeds.is_empty() { vec![req.options.seed] } else { req.seeds.clone() };
    let model = match req.model.to_model() {
        Ok(m) => m,
        Err(e) => {
            let (r, o) = SolveResult::load_failure(Mode::Formfind, req.options.seed, &e);
            return (BatchResult { seeds, energies: vec![None], converged: vec![false], results: vec![r] }, o);
        }
    };
    let states = optimizer::minimize_many(&model, &req.options, &seeds);
    let mut outcome = Outcome::Ok;
    let mut any_converged = false;
    let mut results = Vec::with_capacity(seeds.len());
    for (&seed, state) in seeds.iter().zip(states) {
        let (r, o) = match state {
            Ok(s) => formfind_result(&model, seed, &s),
            Err(e) => SolveResult::failure(Mode::Formfind, seed, &e),
        };
        any_converged |= o == Outcome::Ok;
        outcome = outcome.worst(o);
        results.push(r);
    }
    if any_converged {
        outcome = Outcome::Ok;
    }
    let energies = results.iter().map(|r| r.state.as_ref().map(|s| s.energy)).collect();
    let converged = results.iter().map(|r| r.status == Status::Converged).collect();
    (BatchResult { seeds, energies, converged, results }, outcome)
}

/// A solved model as written by `form-find`/`solve-linear` and read by `export`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub version: String,
    pub model: ModelFile,
    pub result: SolveResult,
}

impl StateFile {
    pub fn new(model: ModelFile, result: SolveResult) -> Self {
        Self { version: FORMAT_VERSION.to_string(), model, result }
    }
}

pub fn parse_state_file(text: &str) -> Result<StateFile, LoadError> {
    let state: StateFile = serde_json::from_str(text).map_err(json_error)?;
    if state.version != FORMAT_VERSION {
        return Err(LoadError::Version(state.version));
    }
    Ok(state)
}

pub fn load_state(path: impl AsRef<Path>) -> Result<StateFile, LoadError> {
    parse_state_file(&read(path.as_ref())?)
}

pub fn save_state(state: &StateFile, path: impl AsRef<Path>) -> Result<(), LoadError> {
    let text = serde_json::to_string_pretty(state).expect("state serializes");
    write_file(path.as_ref(), text.as_bytes())
}

/// Equilibrium report of the solution stored in a state file.
pub fn state_report(state: &StateFile) -> Result<(Model, Vec<f64>, EquilibriumReport), Error> {
    let model = state.model.to_model().map_err(|e| Error::Input(e.to_string()))?;
    let (coords, forces) = state
        .result
        .coordinates_and_forces(&model)
        .ok_or_else(|| Error::Input("state file holds no solution".into()))?;
    let report = analysis::equilibrium_residual(&model, &coords, &forces)?;
    Ok((model, coords, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, FixtureSpec, FIXTURE_NAMES};

    #[test]
    fn every_fixture_round_trips() {
        for name in FIXTURE_NAMES {
            let m = FixtureSpec::defaults(name).unwrap().build().unwrap();
            let text = model_to_json(&m);
            assert_eq!(parse_model(&text).unwrap(), m, "{name}");
            let file = parse_model_file(&text).unwrap();
            assert_eq!(serde_json::to_string_pretty(&file).unwrap(), text);
        }
    }

    #[test]
    fn truncated_file_is_a_syntax_error() {
        let text = model_to_json(&fixtures::make_simplex(10.0));
        assert!(matches!(parse_model(&text[..text.len() / 2]), Err(LoadError::Syntax { .. })));
    }

    #[test]
    fn unknown_functional_variant_is_named() {
        let text = model_to_json(&fixtures::make_simplex(10.0)).replace("power_length", "power_volume");
        match parse_model(&text) {
            Err(LoadError::Schema(msg)) => assert!(msg.contains("power_volume"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = model_to_json(&fixtures::make_simplex(10.0)).replace("tensiform/1", "tensiform/9");
        assert!(matches!(parse_model(&text), Err(LoadError::Version(v)) if v == "tensiform/9"));
    }

    #[test]
    fn all_violations_are_listed() {
        let mut file = ModelFile::from_model(&fixtures::make_simplex(10.0));
        file.members[0].endpoints = [0, 0];
        file.members[11].role = RoleRecord::Strut { rest_length: -1.0 };
        file.functionals[0].id = 3;
        let err = file.to_model().unwrap_err();
        assert_eq!(err.violations().len(), 3, "{err}");
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-2.5), "-2.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456.789123), "123456.789");
        assert_eq!(format_sig9(1e-9), "1.00000000e-9");
        assert_eq!(format_sig9(-1e-17), "-1.00000000e-17");
    }

    #[test]
    fn obj_for_triangle_and_simplex() {
        let tri = Model {
            nodes: vec![Node::fixed(0, [0.; 3]), Node::fixed(1, [1., 0., 0.]), Node::free(2, [0., 1., 0.])],
            functionals: vec![ElementFunctional::PlainArea],
            members: vec![],
            elements: vec![TriElement { id: 0, vertices: [0, 1, 2], functional: 0 }],
        };
        let text = obj_string(&tri, None).unwrap();
        assert_eq!(text, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
        let s = obj_string(&fixtures::make_simplex(10.0), None).unwrap();
        assert_eq!(s.lines().filter(|l| l.starts_with("v ")).count(), 6);
        assert_eq!(s.lines().filter(|l| l.starts_with("l ")).count(), 12);
        let moved = obj_string(&tri, Some(&[0.5, 0.5, 2.0])).unwrap();
        assert!(moved.contains("v 0.5 0.5 2\n"));
        assert!(obj_string(&tri, Some(&[1.0])).is_err());
    }

    #[test]
    fn q_file_parsing() {
        assert_eq!(parse_q_file("1 2.5\n# note\n-1, 3e-1 # tail\n").unwrap(), vec![1.0, 2.5, -1.0, 0.3]);
        assert!(parse_q_file("1 x").unwrap_err().contains("line 1"));
        assert!(parse_q_file("inf").is_err());
        assert!(parse_q_file("").unwrap().is_empty());
    }

    #[test]
    fn functional_list_parsing() {
        use ElementFunctional::*;
        let got = parse_functional_list("area, area^2, 0.5*area^2, length^4, 2*length, spring(3, 1.5)").unwrap();
        assert_eq!(
            got,
            vec![
                PlainArea,
                PowerArea { weight: 1.0, power: 2 },
                PowerArea { weight: 0.5, power: 2 },
                PowerLength { weight: 1.0, power: 4 },
                PowerLength { weight: 2.0, power: 1 },
                SpringLength { stiffness: 3.0, rest_length: 1.5 },
            ]
        );
        for bad in ["", "volume", "area^x", "-1*area", "area^0", "spring(1)", "area,,length", "length^99"] {
            assert!(parse_functional_list(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn csv_report_schema_and_values() {
        let m = fixtures::make_simplex(10.0);
        let x = optimizer::random_initialization(18, 2.5, 1);
        let (_, mut f) = crate::functionals::total_gradient(&m, &x).unwrap();
        f.strut_multipliers = vec![-1.25, -2.0, 0.1];
        let rep = analysis::equilibrium_residual(&m, &x, &f).unwrap();
        let text = report_csv(&rep);
        assert_eq!(text.lines().next().unwrap(), "member_id,role,L,n,q,w2,w4,lambda");
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 12);
        for (row, mem) in rows.iter().zip(&rep.members) {
            let n: f64 = row[3].parse().unwrap();
            assert!((n - mem.force).abs() <= 1e-12 * mem.force.abs().max(1.0));
            let l: f64 = row[2].parse().unwrap();
            assert!((l - mem.length).abs() <= 1e-12 * mem.length);
            if mem.role == Role::Strut {
                assert_eq!(&row[1], "strut");
                assert!(row[5].is_empty() && row[6].is_empty());
                assert_eq!(row[7].parse::<f64>().unwrap(), mem.force);
            } else {
                assert!(row[7].is_empty());
            }
        }
        assert!(text.contains("# residual_inf="));
    }

    #[test]
    fn no_fixed_nodes_linear_request_is_an_input_error() {
        let m = fixtures::make_x_tensegrity([1.0; 4], [2f64.sqrt(); 2]);
        let req = SolveRequest { mode: Mode::Linear, ..SolveRequest::formfind(&m, SolveOptions::default()) };
        let (r, o) = run_request(&req);
        assert_eq!(o, Outcome::InputError);
        assert_eq!(r.error.unwrap().kind, "no_fixed_nodes");
        assert_eq!(r.null_space.unwrap().nullity, 1);
    }

    #[test]
    fn request_round_trips_through_json() {
        let req = SolveRequest::formfind(&fixtures::make_simplex(10.0), SolveOptions::default().with_seed(7));
        let text = serde_json::to_string(&req).unwrap();
        let back: SolveRequest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, req);
        let minimal = format!("{{\"model\": {}}}", model_to_json(&fixtures::make_simplex(10.0)));
        let parsed: SolveRequest = serde_json::from_str(&minimal).unwrap();
        assert_eq!(parsed.mode, Mode::Formfind);
        assert_eq!(parsed.options, SolveOptions::default());
    }

    #[test]
    fn trace_summary_keeps_ends() {
        let t: Vec<TracePoint> = (0..1000).map(|i| TracePoint { energy: i as f64, residual: 0.0 }).collect();
        let s = TraceSummary::from_trace(&t);
        assert_eq!(s.total, 1000);
        assert_eq!(s.points.len(), TRACE_POINTS);
        assert_eq!(s.points[0].energy, 0.0);
        assert_eq!(s.points.last().unwrap().energy, 999.0);
    }

    #[test]
    fn batch_fails_only_when_no_seed_converges() {
        let model = fixtures::make_simplex(10.0);
        let mut req = SolveRequest::formfind(&model, SolveOptions::default());
        req.seeds = vec![1, 2, 3];
        let (b, o) = run_batch(&req);
        assert_eq!(o, Outcome::Ok);
        assert_eq!(b.energies.len(), 3);
        assert!(b.results.iter().zip(&b.seeds).all(|(r, s)| r.seed == *s));

        req.options.max_iterations = 1;
        let (b, o) = run_batch(&req);
        assert_eq!(o, Outcome::NotConverged);
        assert!(b.converged.iter().all(|c| !c));
    }
}
