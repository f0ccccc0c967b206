use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use tensiform::fixtures::FixtureSpec;
use tensiform::io::{
    self, load_model, load_state, obj_string, parse_functional_list, parse_q_file, report_csv, run_batch, run_request,
    save_state, state_report, BatchResult, Mode, ModelFile, Outcome, SolveRequest, SolveResult, StateFile,
};
use tensiform::{Init, Method, Model, SolveOptions};

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Parser)]
#[command(name = "tensiform", version, about = "Form-finding for cable nets, tensegrities and membranes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linear force density solve with prescribed force densities.
    SolveLinear {
        model: PathBuf,
        /// One force density per member; defaults derive from the member roles.
        #[arg(long)]
        q_file: Option<PathBuf>,
        /// State file to write (default: `<model>.state.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize the model's functional under the strut length constraints.
    FormFind {
        model: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
        /// Run this many consecutive seeds starting at `--seed` and keep the
        /// lowest-energy converged state.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve once per functional and compare the resulting meshes.
    Compare {
        model: PathBuf,
        /// Comma-separated list, e.g. `area, area^2` or `length^4, 2*length^2`.
        #[arg(long)]
        functionals: String,
        #[command(flatten)]
        solve: SolveArgs,
        /// Write the full comparison as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a generated or stored fixture as a model file.
    Fixture {
        name: String,
        /// Parameter override `key=value`; repeatable.
        #[arg(long = "param", value_parser = parse_key_value)]
        params: Vec<(String, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a state file as Wavefront OBJ or a CSV member report.
    Export {
        state: PathBuf,
        #[arg(long, conflicts_with = "csv", required_unless_present = "csv")]
        obj: bool,
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP solve API. `TENSIFORM_PORT` overrides `--port`.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Descent,
    Dynrelax,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitArg {
    /// Uniform random free coordinates in `[-range, range]`.
    Random,
    /// Start from the coordinates stored in the model.
    Model,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum, default_value_t = MethodArg::Descent)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    /// Half-width of the random initialization box.
    #[arg(long, default_value_t = 2.5)]
    pub range: f64,
    /// Wall-clock limit per solve in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
}

impl SolveArgs {
    pub fn options(&self) -> SolveOptions {
        let defaults = SolveOptions::default();
        SolveOptions {
            seed: self.seed,
            gradient_tolerance: self.tol.unwrap_or(defaults.gradient_tolerance),
            max_iterations: self.max_iter.unwrap_or(defaults.max_iterations),
            method: match self.method {
                MethodArg::Descent => Method::Descent,
                MethodArg::Dynrelax => Method::DynamicRelaxation,
            },
            init: match self.init {
                InitArg::Random => Init::Random { range: self.range },
                InitArg::Model => Init::Model,
            },
            time_limit: self.time_limit,
            ..defaults
        }
    }
}

fn parse_key_value(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("'{v}' is not a number"))?;
    Ok((k.trim().to_string(), v))
}

/// A failure that ends the command with the given exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

type CmdResult = Result<i32, Failure>;

pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::SolveLinear { model, q_file, out } => solve_linear(&model, q_file.as_deref(), out),
        Command::FormFind { model, solve, seeds, out } => form_find(&model, &solve, seeds, out),
        Command::Compare { model, functionals, solve, out } => compare(&model, &functionals, &solve, out),
        Command::Fixture { name, params, out } => fixture(&name, params, out.as_deref()),
        Command::Export { state, obj, csv: _, out } => export(&state, obj, out.as_deref()),
        Command::Serve { port, host } => serve(port, &host),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn read_model(path: &Path) -> Result<Model, Failure> {
    load_model(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// `<dir>/<stem>.state.json` next to the model file.
pub fn default_state_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    model.with_file_name(format!("{stem}.state.json"))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Failure::input(e.to_string()))
        }
    }
}

fn write_state(path: &Path, model: &Model, result: SolveResult) -> Result<(), Failure> {
    let state = StateFile::new(ModelFile::from_model(model), result);
    save_state(&state, path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    println!("state written to {}", path.display());
    Ok(())
}

fn report_error(result: &SolveResult) {
    let Some(err) = &result.error else { return };
    eprintln!("error: {}", err.message);
    for v in &err.violations {
        eprintln!("  {v}");
    }
    if let Some(ns) = &result.null_space {
        eprintln!(
            "null space of D: dimension {}, rank {}, nullity {} (tolerance {:e})",
            ns.dimension, ns.rank, ns.nullity, ns.tolerance
        );
        for (i, b) in ns.basis.iter().enumerate() {
            let v: Vec<String> = b.iter().map(|x| format!("{x:.6}")).collect();
            eprintln!("  kernel[{i}] = [{}]", v.join(", "));
        }
    }
}

fn solve_linear(path: &Path, q_file: Option<&Path>, out: Option<PathBuf>) -> CmdResult {
    let model = read_model(path)?;
    let q = match q_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
            Some(parse_q_file(&text).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let req = SolveRequest { mode: Mode::Linear, q, ..SolveRequest::formfind(&model, SolveOptions::default()) };
    let (result, outcome) = run_request(&req);
    if outcome != Outcome::Ok {
        report_error(&result);
        return Ok(outcome.exit_code());
    }
    if let Some(sol) = &result.linear {
        let max_n = sol.tensions.iter().fold(0.0f64, |m, n| m.max(n.abs()));
        println!("solved {} free coordinates, max |n| = {}", sol.coords.len(), io::format_sig9(max_n));
    }
    write_state(&out.unwrap_or_else(|| default_state_path(path)), &model, result)?;
    Ok(0)
}

fn print_state(result: &SolveResult) {
    let Some(s) = &result.state else { return };
    println!(
        "seed {} {}: {} iterations, energy {}, residual {:.3e} (scale {}), constraint violation {:.1e}",
        result.seed,
        if s.converged { "converged" } else { "NOT converged" },
        s.iterations,
        io::format_sig9(s.energy),
        s.residual_norm,
        io::format_sig9(s.residual_scale),
        s.constraint_violation
    );
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("[{}, {}]", io::format_sig9(lo), io::format_sig9(hi))
    };
    if !s.forces.member_forces.is_empty() {
        println!("  cable forces {}", range(&s.forces.member_forces));
    }
    if !s.forces.strut_multipliers.is_empty() {
        println!("  strut multipliers {}", range(&s.forces.strut_multipliers));
    }
    if !s.forces.element_stresses.is_empty() {
        println!("  element stresses {}", range(&s.forces.element_stresses));
    }
}

fn form_find(path: &Path, args: &SolveArgs, seeds: u64, out: Option<PathBuf>) -> CmdResult {
    let model = read_model(path)?;
    let out = out.unwrap_or_else(|| default_state_path(path));
    let options = args.options();
    if seeds <= 1 {
        let (result, outcome) = run_request(&SolveRequest::formfind(&model, options));
        if result.state.is_none() {
            report_error(&result);
            return Ok(outcome.exit_code());
        }
        print_state(&result);
        write_state(&out, &model, result)?;
        return Ok(outcome.exit_code());
    }
    let mut req = SolveRequest::formfind(&model, options);
    req.seeds = (args.seed..args.seed.saturating_add(seeds)).collect();
    let (batch, outcome) = run_batch(&req);
    print_batch(&batch);
    match best_result(&batch) {
        Some(best) => {
            println!("lowest energy: seed {}", best.seed);
            write_state(&out, &model, best.clone())?;
        }
        None => batch.results.iter().for_each(report_error),
    }
    Ok(outcome.exit_code())
}

fn print_batch(batch: &BatchResult) {
    println!("{:>8}  {:>18}  converged", "seed", "energy");
    for ((seed, e), c) in batch.seeds.iter().zip(&batch.energies).zip(&batch.converged) {
        let e = e.map(io::format_sig9).unwrap_or_else(|| "-".into());
        println!("{seed:>8}  {e:>18}  {c}");
    }
}

/// Lowest-energy converged result, falling back to any result with a state.
fn best_result(batch: &BatchResult) -> Option<&SolveResult> {
    let energy = |r: &&SolveResult| r.state.as_ref().map(|s| s.energy).unwrap_or(f64::INFINITY);
    let with_state = batch.results.iter().filter(|r| r.state.is_some());
    let converged: Vec<&SolveResult> = with_state.clone().filter(|r| r.state.as_ref().unwrap().converged).collect();
    let pool: Vec<&SolveResult> = if converged.is_empty() { with_state.collect() } else { converged };
    pool.into_iter().min_by(|a, b| energy(a).total_cmp(&energy(b)))
}

fn compare(path: &Path, list: &str, args: &SolveArgs, out: Option<PathBuf>) -> CmdResult {
    let model = read_model(path)?;
    let functionals = parse_functional_list(list).map_err(|e| Failure::input(format!("--functionals: {e}")))?;
    let req = SolveRequest { mode: Mode::Compare, functionals, ..SolveRequest::formfind(&model, args.options()) };
    let (result, outcome) = run_request(&req);
    let Some(cmp) = &result.comparison else {
        report_error(&result);
        return Ok(outcome.exit_code());
    };
    println!(
        "{:<28} {:>9} {:>7} {:>14} {:>14} {:>9} {:>14} {:>9}",
        "functional", "converged", "iters", "energy", "total area", "area cv", "total length", "length cv"
    );
    for row in &cmp.rows {
        let f = |v: Option<f64>| v.map(io::format_sig9).unwrap_or_else(|| "-".into());
        let cv = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<28} {:>9} {:>7} {:>14} {:>14} {:>9} {:>14} {:>9}",
            serde_json::to_string(&row.functional).unwrap_or_default(),
            row.converged,
            row.iterations,
            f(row.energy),
            f(row.areas.as_ref().map(|a| a.total)),
            cv(row.areas.as_ref().map(|a| a.cv)),
            f(row.lengths.as_ref().map(|a| a.total)),
            cv(row.lengths.as_ref().map(|a| a.cv)),
        );
        if let Some(e) = &row.error {
            eprintln!("  error: {e}");
        }
    }
    if let Some(p) = out {
        let text = serde_json::to_string_pretty(&result).expect("result serializes");
        write_output(Some(&p), &text)?;
    }
    Ok(outcome.exit_code())
}

fn fixture(name: &str, params: Vec<(String, f64)>, out: Option<&Path>) -> CmdResult {
    let params: BTreeMap<String, f64> = params.into_iter().collect();
    let spec = FixtureSpec::with_params(name, &params).map_err(|e| Failure::input(e.to_string()))?;
    let model = spec.build().map_err(|e| Failure::input(e.to_string()))?;
    let file = ModelFile::from_model(&model).named(spec.name());
    let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
    text.push('\n');
    write_output(out, &text)?;
    Ok(0)
}

fn export(path: &Path, obj: bool, out: Option<&Path>) -> CmdResult {
    let state = load_state(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let text = if obj {
        let model = state.model.to_model().map_err(|e| Failure::input(e.to_string()))?;
        let (coords, _) = state
            .result
            .coordinates_and_forces(&model)
            .ok_or_else(|| Failure::input("state file holds no solution"))?;
        obj_string(&model, Some(&coords)).map_err(|e| Failure::input(e.to_string()))?
    } else {
        let (_, _, report) = state_report(&state).map_err(|e| Failure::input(e.to_string()))?;
        report_csv(&report)
    };
    write_output(out, &text)?;
    Ok(0)
}

/// `TENSIFORM_PORT` when set and valid, otherwise the flag value.
pub fn effective_port(flag: u16, env: Option<&str>) -> Result<u16, String> {
    match env {
        Some(v) => v.trim().parse().map_err(|_| format!("TENSIFORM_PORT='{v}' is not a port number")),
        None => Ok(flag),
    }
}

fn serve(port: u16, host: &str) -> CmdResult {
    let env = std::env::var("TENSIFORM_PORT").ok();
    let port = effective_port(port, env.as_deref()).map_err(Failure::input)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure { code: 2, message: e.to_string() })?;
    runtime
        .block_on(crate::server::serve(host, port))
        .map_err(|e| Failure { code: 2, message: format!("server: {e}") })?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn key_values() {
        assert_eq!(parse_key_value("h=6.5").unwrap(), ("h".to_string(), 6.5));
        assert!(parse_key_value("h").is_err());
        assert!(parse_key_value("h=x").is_err());
    }

    #[test]
    fn env_port_wins() {
        assert_eq!(effective_port(8080, None), Ok(8080));
        assert_eq!(effective_port(8080, Some("9000")), Ok(9000));
        assert!(effective_port(8080, Some("nope")).is_err());
    }

    #[test]
    fn state_path_sits_next_to_the_model() {
        assert_eq!(default_state_path(Path::new("/a/simplex.json")), PathBuf::from("/a/simplex.state.json"));
        assert_eq!(default_state_path(Path::new("m")), PathBuf::from("m.state.json"));
    }

    #[test]
    fn solve_args_map_to_options() {
        let cli = Cli::parse_from([
            "tensiform",
            "form-find",
            "m.json",
            "--seed",
            "7",
            "--tol",
            "1e-6",
            "--max-iter",
            "50",
            "--method",
            "dynrelax",
            "--init",
            "model",
        ]);
        let Command::FormFind { solve, .. } = cli.command else { panic!("wrong command") };
        let o = solve.options();
        assert_eq!(o.seed, 7);
        assert_eq!(o.gradient_tolerance, 1e-6);
        assert_eq!(o.max_iterations, 50);
        assert_eq!(o.method, Method::DynamicRelaxation);
        assert_eq!(o.init, Init::Model);
    }
}
