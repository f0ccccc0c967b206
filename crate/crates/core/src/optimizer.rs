//! Constrained direct minimization of `Π_w(x)` with strut lengths held at
//! their prescribed values.
//!
//! Each iterate lives on the constraint set `{L_k(x) = L̄_k}`: a trial step is
//! followed by a midpoint-preserving rescale of every strut
//! ([`project_strut_lengths`]). Search directions are built from the
//! gradient projected onto the constraint tangent space. The multipliers of
//! that projection are the strut forces `λ_k`, so the projected gradient is
//! exactly the equilibrium residual `Σn∇L + Σσ∇S + Σλ∇L`.
//!
//! Two methods are available. [`Method::Descent`] is a backtracking
//! (Armijo) line search along a limited-memory quasi-Newton direction that
//! falls back to steepest descent whenever the memory is empty or stale.
//! [`Method::DynamicRelaxation`] is a pseudo-dynamic heavy-ball iteration
//! with kinetic damping: the velocity is zeroed whenever the energy would
//! rise.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{Assembly, GeneralizedForces};
use crate::geometry::{self, LENGTH_EPS};
use crate::model::{Entity, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Uniform in `[−range, range]` per free coordinate.
    Random {
        range: f64,
    },
    Given {
        coords: Vec<f64>,
    },
    /// The node positions stored in the model.
    Model,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Descent,
    #[serde(alias = "dynrelax")]
    DynamicRelaxation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    /// Largest coordinate change of a steepest-descent step. `None` picks
    /// `1e−2 × (mean L̄, or 1 without struts)`.
    pub initial_step: Option<f64>,
    /// Largest coordinate change of any step. `None` picks `10 × initial_step`.
    pub max_step: Option<f64>,
    pub backtracking: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Velocity retention per step in dynamic relaxation.
    pub damping: f64,
    /// Number of correction pairs kept by the quasi-Newton direction; 0 gives
    /// plain steepest descent.
    pub memory: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { initial_step: None, max_step: None, backtracking: 0.5, armijo: 1e-4, damping: 0.9, memory: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub seed: u64,
    pub init: Init,
    pub method: Method,
    pub step: StepControl,
    /// Wall-clock budget in seconds; the solve stops unconverged when it runs out.
    pub time_limit: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            gradient_tolerance: 1e-8,
            seed: 0,
            init: Init::Random { range: 2.5 },
            method: Method::Descent,
            step: StepControl::default(),
            time_limit: None,
        }
    }
}

impl SolveOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.gradient_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Input(m.to_string()));
        if !(self.gradient_tolerance.is_finite() && self.gradient_tolerance > 0.0) {
            return bad("gradient tolerance must be > 0");
        }
        if let Init::Random { range } = self.init {
            if !(range.is_finite() && range > 0.0) {
                return bad("random initialization range must be > 0");
            }
        }
        let s = &self.step;
        if !(s.backtracking > 0.0 && s.backtracking < 1.0) {
            return bad("backtracking factor must be in (0, 1)");
        }
        if !(s.armijo > 0.0 && s.armijo < 0.5) {
            return bad("armijo constant must be in (0, 0.5)");
        }
        if !(s.damping >= 0.0 && s.damping < 1.0) {
            return bad("damping must be in [0, 1)");
        }
        for v in [s.initial_step, s.max_step].into_iter().flatten() {
            if !(v.is_finite() && v > 0.0) {
                return bad("step sizes must be > 0");
            }
        }
        if let Some(t) = self.time_limit {
            if t.is_nan() || t <= 0.0 {
                return bad("time limit must be > 0");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub energy: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergedState {
    /// Free coordinates in dof-map order.
    pub coords: Vec<f64>,
    pub forces: GeneralizedForces,
    pub energy: f64,
    /// Infinity norm of the equilibrium residual after multiplier recovery.
    pub residual_norm: f64,
    /// `max(1, mean |n_j|)`, the scale the tolerance is measured against.
    pub residual_scale: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Number of times degenerate geometry was perturbed away.
    pub jitter_events: usize,
    pub trace: Vec<TracePoint>,
}

/// Deterministic uniform initial coordinates in `[−range, range]`.
pub fn random_initialization(n: usize, range: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-range..=range)).collect()
}

/// Rescales every strut about its midpoint to its prescribed length. A strut
/// with one fixed end is rescaled about that end. Struts sharing nodes are
/// swept until all lengths agree.
pub fn project_strut_lengths(model: &Model, coords: &[f64]) -> Result<Vec<f64>> {
    let asm = Assembly::new(model)?;
    let mut out = coords.to_vec();
    retract(&asm, &mut out)?;
    Ok(out)
}

fn retract(asm: &Assembly<'_>, coords: &mut [f64]) -> Result<()> {
    if asm.struts.is_empty() {
        return Ok(());
    }
    let l_max = asm.struts.iter().map(|s| s.rest_length).fold(0.0, f64::max);
    let mut pos = asm.positions(coords);
    for _sweep in 0..200 {
        // Already feasible points are left untouched so retraction is idempotent.
        let mut worst: f64 = 0.0;
        for s in &asm.struts {
            let len = (pos[s.ends[0]] - pos[s.ends[1]]).norm();
            if len <= LENGTH_EPS {
                return Err(Error::DegenerateGeometry { entity: Entity::Member(s.member), measure: len });
            }
            worst = worst.max((len - s.rest_length).abs());
        }
        if worst <= 1e-14 * l_max {
            return Ok(());
        }
        for s in &asm.struts {
            let [a, b] = s.ends;
            let d = pos[a] - pos[b];
            let len = d.norm();
            if len <= LENGTH_EPS {
                return Err(Error::DegenerateGeometry { entity: Entity::Member(s.member), measure: len });
            }
            let u = d / len;
            let (fa, fb) = (asm.dofs.node_base(a), asm.dofs.node_base(b));
            match (fa, fb) {
                (Some(_), Some(_)) => {
                    let mid = 0.5 * (pos[a] + pos[b]);
                    pos[a] = mid + 0.5 * s.rest_length * u;
                    pos[b] = mid - 0.5 * s.rest_length * u;
                }
                (Some(_), None) => pos[a] = pos[b] + s.rest_length * u,
                (None, Some(_)) => pos[b] = pos[a] - s.rest_length * u,
                (None, None) => {}
            }
            for (node, base) in [(a, fa), (b, fb)] {
                if let Some(base) = base {
                    coords[base..base + 3].copy_from_slice(pos[node].as_slice());
                }
            }
        }
    }
    Ok(())
}

/// Sparse strut Jacobian rows and helpers to split vectors into tangent and
/// normal parts.
struct Constraints {
    rows: Vec<Vec<(usize, f64)>>,
    gram: Option<GramSolver>,
}

enum GramSolver {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    PseudoInverse(DMatrix<f64>),
}

impl Constraints {
    fn build(asm: &Assembly<'_>, pos: &[crate::model::Point3]) -> Result<Self> {
        let r = asm.struts.len();
        if r == 0 {
            return Ok(Self { rows: vec![], gram: None });
        }
        let mut rows = Vec::with_capacity(r);
        for k in 0..r {
            let g = asm.strut_gradient(pos, k)?;
            let [a, b] = asm.struts[k].ends;
            let mut row = Vec::with_capacity(6);
            for (node, block) in [(a, g.p), (b, g.q)] {
                if let Some(base) = asm.dofs.node_base(node) {
                    for axis in 0..3 {
                        row.push((base + axis, block[axis]));
                    }
                }
            }
            rows.push(row);
        }
        let mut gram = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in i..r {
                let v = sparse_dot(&rows[i], &rows[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let solver = match gram.clone().cholesky() {
            Some(c) if cholesky_well_conditioned(&c) => GramSolver::Cholesky(c),
            _ => {
                log::warn!("strut constraint gradients are rank deficient; using minimum-norm multipliers");
                let svd = gram.svd(true, true);
                GramSolver::PseudoInverse(svd.pseudo_inverse(1e-12).expect("svd with vectors"))
            }
        };
        Ok(Self { rows, gram: Some(solver) })
    }

    fn rank_deficient(&self) -> bool {
        matches!(self.gram, Some(GramSolver::PseudoInverse(_)))
    }

    /// Multipliers `μ` minimizing `‖v + Jᵀμ‖` and the tangent part `v + Jᵀμ`.
    fn split(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let Some(gram) = &self.gram else {
            return (vec![], v.to_vec());
        };
        let jv = DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|row| row.iter().map(|&(i, c)| c * v[i]).sum::<f64>()),
        );
        let mu = match gram {
            GramSolver::Cholesky(c) => -c.solve(&jv),
            GramSolver::PseudoInverse(p) => -(p * jv),
        };
        let mut t = v.to_vec();
        for (row, &m) in self.rows.iter().zip(mu.iter()) {
            for &(i, c) in row {
                t[i] += m * c;
            }
        }
        (mu.iter().copied().collect(), t)
    }
}

fn cholesky_well_conditioned(c: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let d = c.l_dirty().diagonal();
    let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    lo > 1e-6 * hi
}

fn sparse_dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let mut s = 0.0;
    for &(i, x) in a {
        for &(j, y) in b {
            if i == j {
                s += x * y;
            }
        }
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Component of `v` tangent to the strut constraint set at `coords`.
pub(crate) fn tangent_part(asm: &Assembly<'_>, coords: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let cons = Constraints::build(asm, &asm.positions(coords))?;
    Ok(cons.split(v).1)
}

/// Least-squares strut multipliers for a given state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierFit {
    pub multipliers: Vec<f64>,
    /// Infinity norm of `Σn∇L + Σσ∇S` before adding strut terms.
    pub residual_before: f64,
    /// Infinity norm of `Σn∇L + Σσ∇S + Σλ∇L` with the fitted `λ`.
    pub residual_after: f64,
    pub rank_deficient: bool,
}

/// Fits `λ` so that `Σn∇L + Σσ∇S + Σλ∇L` is as small as possible in the
/// least-squares sense. Incoming strut multipliers are ignored.
pub fn recover_multipliers(model: &Model, coords: &[f64], forces: &GeneralizedForces) -> Result<MultiplierFit> {
    let asm = Assembly::new(model)?;
    let mut f = forces.clone();
    f.strut_multipliers = vec![0.0; asm.strut_count()];
    let g = asm.equilibrium_vector(coords, &f)?;
    let cons = Constraints::build(&asm, &asm.positions(coords))?;
    let (lambda, r) = cons.split(&g);
    Ok(MultiplierFit {
        multipliers: lambda,
        residual_before: inf_norm(&g),
        residual_after: inf_norm(&r),
        rank_deficient: cons.rank_deficient(),
    })
}

/// Runs one constrained minimization.
pub fn minimize_constrained(model: &Model, options: &SolveOptions) -> Result<ConvergedState> {
    options.validate()?;
    let asm = Assembly::new(model)?;
    Solver::new(&asm, options)?.run()
}

/// Independent solves for several seeds, run in parallel. Results come back
/// in seed order.
pub fn minimize_many(model: &Model, options: &SolveOptions, seeds: &[u64]) -> Vec<Result<ConvergedState>> {
    seeds.par_iter().map(|&s| minimize_constrained(model, &options.clone().with_seed(s))).collect()
}

const MAX_JITTER_RETRIES: usize = 3;

struct Solver<'a, 'm> {
    asm: &'a Assembly<'m>,
    opts: &'a SolveOptions,
    rng: ChaCha8Rng,
    scale_len: f64,
    l_max: f64,
    jitter_events: usize,
    deadline: Option<Instant>,
}

struct Point {
    x: Vec<f64>,
    energy: f64,
    /// Projected gradient, i.e. the equilibrium residual.
    pg: Vec<f64>,
    forces: GeneralizedForces,
}

impl<'a, 'm> Solver<'a, 'm> {
    fn new(asm: &'a Assembly<'m>, opts: &'a SolveOptions) -> Result<Self> {
        let n_struts = asm.strut_count();
        let scale_len = if n_struts == 0 { 1.0 } else { asm.strut_rest_lengths().sum::<f64>() / n_struts as f64 };
        let l_max = asm.strut_rest_lengths().fold(0.0, f64::max);
        Ok(Self {
            asm,
            opts,
            // Separate stream from the initialization, derived from the same seed.
            rng: ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15),
            scale_len,
            l_max,
            jitter_events: 0,
            deadline: opts.time_limit.map(|t| Instant::now() + Duration::from_secs_f64(t)),
        })
    }

    fn initial(&self) -> Result<Vec<f64>> {
        let n = self.asm.dimension();
        match &self.opts.init {
            Init::Random { range } => Ok(random_initialization(n, *range, self.opts.seed)),
            Init::Given { coords } if coords.len() == n => Ok(coords.clone()),
            Init::Given { coords } => Err(Error::Input(format!(
                "initial coordinates have {} entries, model has {n} free coordinates",
                coords.len()
            ))),
            Init::Model => Ok(self.asm.initial_coordinates()),
        }
    }

    /// Moves the free nodes of a degenerate entity by a small random offset.
    fn jitter(&mut self, x: &mut [f64], entity: Entity) {
        let nodes: Vec<usize> = match entity {
            Entity::Member(id) => self.asm.model.members[id].endpoints.to_vec(),
            Entity::Element(id) => self.asm.model.elements[id].vertices.to_vec(),
            _ => vec![],
        };
        let amp = 1e-6 * self.scale_len;
        for node in nodes {
            if let Some(base) = self.asm.dofs.node_base(node) {
                for v in &mut x[base..base + 3] {
                    *v += self.rng.gen_range(-amp..=amp);
                }
            }
        }
        self.jitter_events += 1;
        log::debug!("perturbed degenerate {entity}");
    }

    /// Retracts onto the constraint set and evaluates, perturbing degenerate
    /// geometry up to [`MAX_JITTER_RETRIES`] times.
    fn settle(&mut self, mut x: Vec<f64>) -> Result<Point> {
        let mut attempts = 0;
        loop {
            match self.try_point(&mut x) {
                Ok(p) => return Ok(p),
                Err(Error::DegenerateGeometry { entity, measure }) => {
                    attempts += 1;
                    if attempts > MAX_JITTER_RETRIES {
                        return Err(Error::DegenerateGeometry { entity, measure });
                    }
                    self.jitter(&mut x, entity);
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn try_point(&self, x: &mut [f64]) -> Result<Point> {
        retract(self.asm, x)?;
        let (energy, g, mut forces) = self.asm.evaluate(x)?;
        let cons = Constraints::build(self.asm, &self.asm.positions(x))?;
        let (lambda, pg) = cons.split(&g);
        forces.strut_multipliers = lambda;
        Ok(Point { x: x.to_vec(), energy, pg, forces })
    }

    /// Retracted trial point and its energy change relative to `base`;
    /// `None` when the step is unusable.
    fn trial(&self, base: &[f64], dir: &[f64], alpha: f64) -> Option<(Vec<f64>, f64)> {
        let mut x: Vec<f64> = base.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        retract(self.asm, &mut x).ok()?;
        let de = self.asm.energy_change(&self.asm.positions(base), &self.asm.positions(&x));
        de.is_finite().then_some((x, de))
    }

    /// Moves to an accepted trial point. The energy is carried forward by
    /// the accurately computed change so the history stays monotone below
    /// the rounding level of `Π_w`.
    fn advance(&mut self, from: &Point, x: Vec<f64>, de: f64) -> Result<Point> {
        let jitters = self.jitter_events;
        let mut next = self.settle(x)?;
        if self.jitter_events == jitters {
            next.energy = from.energy + de;
        }
        Ok(next)
    }

    fn tangent(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        tangent_part(self.asm, x, v)
    }

    fn residual_scale(p: &Point) -> f64 {
        p.forces.mean_abs_cable_force().max(1.0)
    }

    fn converged(&self, p: &Point) -> bool {
        let pos = self.asm.positions(&p.x);
        inf_norm(&p.pg) <= self.opts.gradient_tolerance * Self::residual_scale(p)
            && self.asm.constraint_violation(&pos) <= 1e-9 * self.l_max.max(f64::MIN_POSITIVE)
    }

    fn out_of_time(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    fn run(mut self) -> Result<ConvergedState> {
        let x0 = self.initial()?;
        let mut p = self.settle(x0)?;
        let step0 = self.opts.step.initial_step.unwrap_or(1e-2 * self.scale_len);
        let max_step = self.opts.step.max_step.unwrap_or(10.0 * step0);
        let mut trace = Vec::new();
        let mut iterations = 0;
        let converged = match self.opts.method {
            Method::Descent => self.descent(&mut p, &mut trace, &mut iterations, step0, max_step)?,
            Method::DynamicRelaxation => self.relax(&mut p, &mut trace, &mut iterations, step0, max_step)?,
        };
        let pos = self.asm.positions(&p.x);
        p.energy = self.asm.energy_at(&pos);
        Ok(ConvergedState {
            residual_norm: inf_norm(&p.pg),
            residual_scale: Self::residual_scale(&p),
            constraint_violation: self.asm.constraint_violation(&pos),
            energy: p.energy,
            coords: p.x,
            forces: p.forces,
            iterations,
            converged,
            jitter_events: self.jitter_events,
            trace,
        })
    }

    fn descent(
        &mut self,
        p: &mut Point,
        trace: &mut Vec<TracePoint>,
        iterations: &mut usize,
        step0: f64,
        max_step: f64,
    ) -> Result<bool> {
        let m = self.opts.step.memory;
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(m);
        loop {
            trace.push(TracePoint { energy: p.energy, residual: inf_norm(&p.pg) });
            if self.converged(p) {
                return Ok(true);
            }
            if *iterations >= self.opts.max_iterations || self.out_of_time() {
                return Ok(false);
            }
            *iterations += 1;

            let mut fresh = memory.is_empty();
            let mut dir = if fresh { p.pg.iter().map(|g| -g).collect() } else { two_loop(&p.pg, &memory) };
            if !fresh {
                dir = self.tangent(&p.x, &dir)?;
                if dot(&dir, &p.pg) >= 0.0 {
                    memory.clear();
                    fresh = true;
                    dir = p.pg.iter().map(|g| -g).collect();
                }
            }
            let slope = dot(&dir, &p.pg);
            let dnorm = inf_norm(&dir);
            if dnorm == 0.0 || !slope.is_finite() {
                return Ok(false);
            }
            let mut alpha = if fresh { step0 / dnorm } else { 1.0 };
            if alpha * dnorm > max_step {
                alpha = max_step / dnorm;
            }

            let mut accepted = None;
            for _ in 0..80 {
                if let Some((x, de)) = self.trial(&p.x, &dir, alpha) {
                    if de <= self.opts.step.armijo * alpha * slope {
                        accepted = Some((x, de));
                        break;
                    }
                }
                alpha *= self.opts.step.backtracking;
            }
            let Some((x_new, de)) = accepted else {
                if fresh {
                    log::debug!("line search stalled at iteration {iterations}");
                    return Ok(false);
                }
                memory.clear();
                continue;
            };

            let next = self.advance(p, x_new, de)?;
            if m > 0 {
                let s: Vec<f64> = next.x.iter().zip(&p.x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = next.pg.iter().zip(&p.pg).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    if memory.len() == m {
                        memory.pop_front();
                    }
                    memory.push_back((s, y, 1.0 / sy));
                }
            }
            *p = next;
        }
    }

    fn relax(
        &mut self,
        p: &mut Point,
        trace: &mut Vec<TracePoint>,
        iterations: &mut usize,
        step0: f64,
        max_step: f64,
    ) -> Result<bool> {
        let damping = self.opts.step.damping;
        let mut velocity = vec![0.0; p.x.len()];
        let mut alpha = step0 / inf_norm(&p.pg).max(f64::MIN_POSITIVE);
        let mut alpha_peak = alpha;
        loop {
            trace.push(TracePoint { energy: p.energy, residual: inf_norm(&p.pg) });
            if self.converged(p) {
                return Ok(true);
            }
            if *iterations >= self.opts.max_iterations || self.out_of_time() {
                return Ok(false);
            }
            *iterations += 1;

            let v = self.tangent(&p.x, &velocity)?;
            let mut step: Vec<f64> = v.iter().zip(&p.pg).map(|(v, g)| damping * v - alpha * g).collect();
            let sn = inf_norm(&step);
            if sn > max_step {
                step.iter_mut().for_each(|s| *s *= max_step / sn);
            }
            match self.trial(&p.x, &step, 1.0) {
                Some((x, de)) if de <= 0.0 => {
                    let next = self.advance(p, x, de)?;
                    velocity = next.x.iter().zip(&p.x).map(|(a, b)| a - b).collect();
                    *p = next;
                    alpha_peak = alpha_peak.max(alpha);
                    alpha *= 1.02;
                }
                _ if velocity.iter().any(|&v| v != 0.0) => {
                    // Kinetic energy peak passed: restart from rest.
                    velocity.iter_mut().for_each(|v| *v = 0.0);
                }
                _ => {
                    alpha *= 0.5;
                    if alpha < RELAX_STALL * alpha_peak {
                        // Steps from rest no longer beat round-off; finish
                        // with quasi-Newton descent.
                        trace.pop();
                        return self.descent(p, trace, iterations, step0, max_step);
                    }
                }
            }
        }
    }
}

/// Fraction of the largest accepted relaxation step below which relaxation
/// hands over to descent.
const RELAX_STALL: f64 = 1e-6;

/// Two-loop recursion: `−H·g` for the inverse Hessian approximation stored
/// in `memory` as `(s, y, 1/(s·y))`.
fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let (s, y, _) = memory.back().expect("non-empty memory");
    let gamma = dot(s, y) / dot(y, y);
    q.iter_mut().for_each(|v| *v *= gamma);
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Lengths of the struts at `coords`, a convenience for callers checking
/// constraint satisfaction.
pub fn strut_lengths(model: &Model, coords: &[f64]) -> Result<Vec<f64>> {
    let asm = Assembly::new(model)?;
    let pos = asm.positions(coords);
    Ok(asm.struts.iter().map(|s| geometry::member_length(&pos[s.ends[0]], &pos[s.ends[1]])).collect())
}
