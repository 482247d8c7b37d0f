//! `dimkit` command-line front end.
//!
//! Exit codes: 0 success or verdict pass, 1 verdict fail, 2 input error,
//! 3 search bound exhausted without a verdict.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use dimkit_core::dimension::{
    collapse_by_o_ideal, refinement_check, DimMonoid, EqVerdict, LeqVerdict, OIdeal,
};
use dimkit_core::egroup::{e_leq, EElement};
use dimkit_core::exec::ExecMode;
use dimkit_core::freeset::{
    find_free_subset, find_free_triple, PairMapping, SearchMode, SetMapping, SubsetOutcome,
    TripleOutcome,
};
use dimkit_core::interp::{
    sample_quads, validate_interpolator, Interpolator, OverrideEntry, Quad,
};
use dimkit_core::iterm::{
    derive_leq, refute_leq, render_witness, DeriveOutcome, ITerm, RefuteConfig, RefuteOutcome,
};
use dimkit_core::lattice::{FiniteLattice, LatticeFile};
use dimkit_core::scenarios::{run_all, run_by_id, ScenarioConfig, SCENARIO_IDS};

const EXIT_PASS: u8 = 0;
const EXIT_VERDICT_FAIL: u8 = 1;
const EXIT_INPUT_ERROR: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "dimkit", version, about = "Dimension monoids of finite lattices, ordered-group arithmetic, and finite refutation search")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Output::Text)]
    output: Output,
    /// Rewrite bound for monoid decisions.
    #[arg(long, global = true, default_value_t = 8)]
    bound: u32,
    /// Search-node budget (flag beats the DIMKIT_BUDGET variable).
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Worker threads for data-parallel scans; 1 forces sequential scans.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for sampled validation runs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Output {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-lattice checks.
    Lattice {
        #[command(subcommand)]
        cmd: LatticeCmd,
    },
    /// Dimension-monoid computations.
    Dim {
        #[command(subcommand)]
        cmd: DimCmd,
    },
    /// Ordered-group order decisions.
    Egroup {
        #[command(subcommand)]
        cmd: EgroupCmd,
    },
    /// Term-algebra proving and refuting.
    Iterm {
        #[command(subcommand)]
        cmd: ItermCmd,
    },
    /// Free-set finders.
    Freeset {
        #[command(subcommand)]
        cmd: FreesetCmd,
    },
    /// Interpolator validation.
    Interp {
        #[command(subcommand)]
        cmd: InterpCmd,
    },
    /// Verification scenarios.
    Scenario {
        #[command(subcommand)]
        cmd: ScenarioCmd,
    },
}

#[derive(Subcommand)]
enum LatticeCmd {
    /// Validate a lattice file and classify its structure.
    Check { file: PathBuf },
}

#[derive(Subcommand)]
enum DimCmd {
    /// Print presentation and certificate status.
    Compute { file: PathBuf },
    /// Decide equality of two elements, e.g. "[0,2]" vs "[0,1]+[1,2]".
    Equal {
        file: PathBuf,
        lhs: String,
        rhs: String,
    },
    /// Decide the algebraic order between two elements.
    Leq {
        file: PathBuf,
        lhs: String,
        rhs: String,
    },
    /// Search refinements for all equations up to a side bound.
    Refine {
        file: PathBuf,
        #[arg(long, default_value_t = 2)]
        size_bound: u32,
    },
    /// Collapse the lattice by the o-ideal generated by listed elements.
    Collapse {
        file: PathBuf,
        /// Ideal generators, e.g. "[c,a]".
        generators: Vec<String>,
    },
    /// Run a JSON query file.
    Query { file: PathBuf },
}

#[derive(Subcommand)]
enum EgroupCmd {
    /// Decide u <= v for expressions like "e - a_xi + 2a_eta".
    Leq { lhs: String, rhs: String },
}

#[derive(Subcommand)]
enum ItermCmd {
    /// Prove s <= t from the axioms.
    Derive {
        s_file: PathBuf,
        t_file: PathBuf,
        #[arg(long, default_value_t = 6)]
        depth: u32,
    },
    /// Search a finite model refuting s <= t.
    Refute { s_file: PathBuf, t_file: PathBuf },
}

#[derive(Subcommand)]
enum FreesetCmd {
    /// Find a free subset of the requested size.
    Subset {
        file: PathBuf,
        #[arg(short)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
    },
    /// Find a free triple.
    Triple { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Greedy,
}

#[derive(Subcommand)]
enum InterpCmd {
    /// Check an override table against the interpolator rules.
    Validate {
        file: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Run one scenario by id, or `all`.
    Run { id: String },
}

#[derive(Deserialize)]
struct QueryFile {
    lattice: String,
    op: String,
    lhs: Vec<(String, String)>,
    rhs: Vec<(String, String)>,
    #[serde(default)]
    bound: Option<u32>,
}

struct Ctx {
    output: Output,
    bound: u32,
    budget: u64,
    mode: ExecMode,
    seed: u64,
}

impl Ctx {
    fn emit(&self, text: String, value: serde_json::Value) {
        match self.output {
            Output::Text => println!("{text}"),
            Output::Json => println!("{value}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let budget = cli
        .budget
        .or_else(|| {
            std::env::var("DIMKIT_BUDGET")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1_000_000);
    let mode = configure_workers(cli.workers);
    let ctx = Ctx {
        output: cli.output,
        bound: cli.bound,
        budget,
        mode,
        seed: cli.seed,
    };
    match dispatch(&cli.command, &ctx) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT_ERROR)
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_workers(workers: Option<usize>) -> ExecMode {
    match workers {
        Some(1) => ExecMode::Sequential,
        Some(n) => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            ExecMode::Parallel
        }
        None => ExecMode::Parallel,
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_workers(_workers: Option<usize>) -> ExecMode {
    ExecMode::Sequential
}

fn load_lattice(path: &Path) -> Result<FiniteLattice> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let file: LatticeFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    FiniteLattice::from_file(&file).map_err(|e| anyhow!("{e}"))
}

fn load_term(path: &Path) -> Result<ITerm> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    ITerm::parse(&text).map_err(|e| anyhow!("{e}"))
}

fn dispatch(command: &Command, ctx: &Ctx) -> Result<u8> {
    match command {
        Command::Lattice {
            cmd: LatticeCmd::Check { file },
        } => lattice_check(file, ctx),
        Command::Dim { cmd } => dim_cmd(cmd, ctx),
        Command::Egroup {
            cmd: EgroupCmd::Leq { lhs, rhs },
        } => egroup_leq(lhs, rhs, ctx),
        Command::Iterm { cmd } => iterm_cmd(cmd, ctx),
        Command::Freeset { cmd } => freeset_cmd(cmd, ctx),
        Command::Interp {
            cmd: InterpCmd::Validate {
                file,
                rank,
                samples,
            },
        } => interp_validate(file, *rank, *samples, ctx),
        Command::Scenario {
            cmd: ScenarioCmd::Run { id },
        } => scenario_run(id, ctx),
    }
}

fn lattice_check(file: &Path, ctx: &Ctx) -> Result<u8> {
    let text = fs::read_to_string(file)
        .with_context(|| format!("reading {}", file.display()))?;
    let parsed: LatticeFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
    match FiniteLattice::from_file(&parsed) {
        Ok(l) => {
            let report = l.classify();
            ctx.emit(
                format!(
                    "valid lattice with {} elements: modular={} distributive={} complemented={}{}",
                    l.len(),
                    report.modular,
                    report.distributive,
                    report.complemented,
                    report
                        .pentagon_witness
                        .as_ref()
                        .map(|w| format!(" pentagon={w:?}"))
                        .unwrap_or_default()
                ),
                json!({"valid": true, "elements": l.len(), "report": report}),
            );
            Ok(EXIT_PASS)
        }
        Err(e) => {
            ctx.emit(
                format!("not a lattice: {e}"),
                json!({"valid": false, "error": e.to_string()}),
            );
            Ok(EXIT_VERDICT_FAIL)
        }
    }
}

fn eq_exit(v: &EqVerdict) -> u8 {
    match v {
        EqVerdict::Equal { .. } => EXIT_PASS,
        EqVerdict::Distinct { .. } => EXIT_VERDICT_FAIL,
        EqVerdict::Inconclusive => EXIT_BUDGET,
    }
}

fn leq_exit(v: &LeqVerdict) -> u8 {
    match v {
        LeqVerdict::Leq { .. } => EXIT_PASS,
        LeqVerdict::NotLeq { .. } => EXIT_VERDICT_FAIL,
        LeqVerdict::Inconclusive => EXIT_BUDGET,
    }
}

fn dim_cmd(cmd: &DimCmd, ctx: &Ctx) -> Result<u8> {
    match cmd {
        DimCmd::Compute { file } => {
            let l = load_lattice(file)?;
            let m = DimMonoid::new(&l, ctx.bound);
            let pc = l.projectivity_classes();
            ctx.emit(
                format!("{m}; {} projectivity classes", pc.class_count()),
                json!({
                    "generators": m.generator_count(),
                    "relations": m.relation_count(),
                    "projectivity_classes": pc.class_count(),
                    "certificates": m.invariant_summary(),
                }),
            );
            Ok(EXIT_PASS)
        }
        DimCmd::Equal { file, lhs, rhs } => {
            let l = load_lattice(file)?;
            let m = DimMonoid::new(&l, ctx.bound);
            let a = m.parse_element(lhs).map_err(|e| anyhow!("{e}"))?;
            let b = m.parse_element(rhs).map_err(|e| anyhow!("{e}"))?;
            let v = m.dim_equal(&a, &b);
            ctx.emit(format!("{v:?}"), json!(v));
            Ok(eq_exit(&v))
        }
        DimCmd::Leq { file, lhs, rhs } => {
            let l = load_lattice(file)?;
            let m = DimMonoid::new(&l, ctx.bound);
            let a = m.parse_element(lhs).map_err(|e| anyhow!("{e}"))?;
            let b = m.parse_element(rhs).map_err(|e| anyhow!("{e}"))?;
            let v = m.dim_leq(&a, &b);
            ctx.emit(format!("{v:?}"), json!(v));
            Ok(leq_exit(&v))
        }
        DimCmd::Refine { file, size_bound } => {
            let l = load_lattice(file)?;
            let m = DimMonoid::new(&l, ctx.bound);
            let report = refinement_check(&m, *size_bound, ctx.budget);
            ctx.emit(
                format!(
                    "{} equations, {} refined, {} unresolved, complete={}",
                    report.equations,
                    report.refined,
                    report.unresolved.len(),
                    report.complete
                ),
                json!(report),
            );
            if !report.complete {
                Ok(EXIT_BUDGET)
            } else if report.unresolved.is_empty() {
                Ok(EXIT_PASS)
            } else {
                Ok(EXIT_VERDICT_FAIL)
            }
        }
        DimCmd::Collapse { file, generators } => {
            let l = load_lattice(file)?;
            let m = DimMonoid::new(&l, ctx.bound);
            let gens = generators
                .iter()
                .map(|g| m.parse_element(g))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| anyhow!("{e}"))?;
            let ideal = OIdeal::new(gens, 3);
            match collapse_by_o_ideal(&m, &ideal) {
                Ok((theta, quotient)) => {
                    let report = quotient.classify();
                    ctx.emit(
                        format!(
                            "congruence blocks {:?}; quotient has {} elements, modular={}",
                            theta.blocks(),
                            quotient.len(),
                            report.modular
                        ),
                        json!({
                            "blocks": theta.blocks(),
                            "quotient_elements": quotient.len(),
                            "quotient_report": report,
                        }),
                    );
                    Ok(EXIT_PASS)
                }
                Err(e) => {
                    ctx.emit(format!("{e}"), json!({"error": e.to_string()}));
                    Ok(EXIT_BUDGET)
                }
            }
        }
        DimCmd::Query { file } => {
            let text = fs::read_to_string(file)
                .with_context(|| format!("reading {}", file.display()))?;
            let q: QueryFile = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", file.display()))?;
            let lattice_path = if Path::new(&q.lattice).is_absolute() {
                PathBuf::from(&q.lattice)
            } else {
                file.parent().unwrap_or(Path::new(".")).join(&q.lattice)
            };
            let l = load_lattice(&lattice_path)?;
            let m = DimMonoid::new(&l, q.bound.unwrap_or(ctx.bound));
            let a = m.element_from_intervals(&q.lhs).map_err(|e| anyhow!("{e}"))?;
            let b = m.element_from_intervals(&q.rhs).map_err(|e| anyhow!("{e}"))?;
            match q.op.as_str() {
                "dim_equal" => {
                    let v = m.dim_equal(&a, &b);
                    let rendered = match &v {
                        EqVerdict::Equal { path } => json!({"verdict": "equal", "witness": path}),
                        EqVerdict::Distinct { certificate } => {
                            json!({"verdict": "distinct", "witness": certificate})
                        }
                        EqVerdict::Inconclusive => {
                            json!({"verdict": "inconclusive", "witness": null})
                        }
                    };
                    ctx.emit(format!("{v:?}"), rendered);
                    Ok(eq_exit(&v))
                }
                "dim_leq" => {
                    let v = m.dim_leq(&a, &b);
                    let rendered = match &v {
                        LeqVerdict::Leq { complement } => {
                            json!({"verdict": "leq", "witness": complement})
                        }
                        LeqVerdict::NotLeq { certificate } => {
                            json!({"verdict": "not_leq", "witness": certificate})
                        }
                        LeqVerdict::Inconclusive => {
                            json!({"verdict": "inconclusive", "witness": null})
                        }
                    };
                    ctx.emit(format!("{v:?}"), rendered);
                    Ok(leq_exit(&v))
                }
                other => Err(anyhow!("unknown op `{other}`")),
            }
        }
    }
}

/// Parses `2e + a_xi - 3a_eta` style expressions.
fn parse_e_expr(text: &str) -> Result<EElement> {
    let mut out = EElement::zero();
    let cleaned = text.replace('-', "+-").replace(' ', "");
    for raw in cleaned.split('+') {
        let term = raw.trim();
        if term.is_empty() {
            continue;
        }
        let (sign, body) = match term.strip_prefix('-') {
            Some(rest) => (-1i64, rest),
            None => (1, term),
        };
        if body == "0" {
            continue;
        }
        let (coeff, sym) = {
            let digits: String = body.chars().take_while(|c| c.is_ascii_digit()).collect();
            let rest = &body[digits.len()..];
            let c = if digits.is_empty() {
                1
            } else {
                digits.parse::<i64>()?
            };
            (c, rest.trim_start_matches('*'))
        };
        let value = if sym == "e" {
            EElement::unit()
        } else if let Some(label) = sym.strip_prefix("a_") {
            if label.is_empty() {
                return Err(anyhow!("empty generator label in `{term}`"));
            }
            EElement::gen(label)
        } else if sym == "0" {
            EElement::zero()
        } else {
            return Err(anyhow!("cannot parse term `{term}`; use `e`, `a_<label>` or `0`"));
        };
        out = out.add(&value.scaled(sign * coeff));
    }
    Ok(out)
}

fn egroup_leq(lhs: &str, rhs: &str, ctx: &Ctx) -> Result<u8> {
    let u = parse_e_expr(lhs)?;
    let v = parse_e_expr(rhs)?;
    let holds = e_leq(&u, &v);
    let d = v.sub(&u);
    let detail = if holds {
        format!("{u} <= {v}")
    } else {
        format!(
            "{u} <= {v} fails: subset {{{}}} gives {}",
            d.min_subset().join(","),
            d.subset_min()
        )
    };
    ctx.emit(
        detail,
        json!({"holds": holds, "difference": d, "subset_min": d.subset_min()}),
    );
    Ok(if holds { EXIT_PASS } else { EXIT_VERDICT_FAIL })
}

fn iterm_cmd(cmd: &ItermCmd, ctx: &Ctx) -> Result<u8> {
    match cmd {
        ItermCmd::Derive {
            s_file,
            t_file,
            depth,
        } => {
            let s = load_term(s_file)?;
            let t = load_term(t_file)?;
            match derive_leq(&s, &t, *depth, ctx.budget) {
                DeriveOutcome::Proved(d) => {
                    ctx.emit(
                        format!("Proved in {} steps:\n{}", d.steps.len(), d.render().join("\n")),
                        json!({"outcome": "proved", "steps": d.render()}),
                    );
                    Ok(EXIT_PASS)
                }
                DeriveOutcome::Unknown => {
                    ctx.emit(
                        format!("Unknown at depth {depth}"),
                        json!({"outcome": "unknown"}),
                    );
                    Ok(EXIT_BUDGET)
                }
            }
        }
        ItermCmd::Refute { s_file, t_file } => {
            let s = load_term(s_file)?;
            let t = load_term(t_file)?;
            let cfg = RefuteConfig {
                budget: ctx.budget,
                mode: ctx.mode,
                ..RefuteConfig::default()
            };
            match refute_leq(&s, &t, &cfg) {
                RefuteOutcome::Refuted(w) => {
                    ctx.emit(format!("Refuted: {}", render_witness(&w)), json!(w));
                    Ok(EXIT_PASS)
                }
                RefuteOutcome::NoWitnessFound(stats) => {
                    ctx.emit(
                        format!(
                            "NoWitnessFound after {} candidates ({} nodes, complete={})",
                            stats.candidates, stats.nodes, stats.complete
                        ),
                        json!(stats),
                    );
                    Ok(if stats.complete {
                        EXIT_VERDICT_FAIL
                    } else {
                        EXIT_BUDGET
                    })
                }
            }
        }
    }
}

fn freeset_cmd(cmd: &FreesetCmd, ctx: &Ctx) -> Result<u8> {
    match cmd {
        FreesetCmd::Subset { file, k, mode } => {
            let text = fs::read_to_string(file)
                .with_context(|| format!("reading {}", file.display()))?;
            let m: SetMapping = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", file.display()))?;
            let mode = match mode {
                Mode::Exact => SearchMode::Exact,
                Mode::Greedy => SearchMode::Greedy,
            };
            match find_free_subset(&m, *k, mode) {
                SubsetOutcome::Found(s) => {
                    ctx.emit(format!("Found {s:?}"), json!({"found": s}));
                    Ok(EXIT_PASS)
                }
                SubsetOutcome::NotFound => {
                    ctx.emit("NotFound".into(), json!({"found": null}));
                    Ok(match mode {
                        SearchMode::Exact => EXIT_VERDICT_FAIL,
                        SearchMode::Greedy => EXIT_BUDGET,
                    })
                }
            }
        }
        FreesetCmd::Triple { file } => {
            let text = fs::read_to_string(file)
                .with_context(|| format!("reading {}", file.display()))?;
            let p: PairMapping = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", file.display()))?;
            match find_free_triple(&p, ctx.mode) {
                TripleOutcome::Found(a, b, c) => {
                    ctx.emit(
                        format!("Found ({a}, {b}, {c})"),
                        json!({"found": [a, b, c]}),
                    );
                    Ok(EXIT_PASS)
                }
                TripleOutcome::NotFound => {
                    ctx.emit("NotFound".into(), json!({"found": null}));
                    Ok(EXIT_VERDICT_FAIL)
                }
            }
        }
    }
}

fn interp_validate(file: &Path, rank: usize, samples: usize, ctx: &Ctx) -> Result<u8> {
    let text =
        fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let entries: Vec<OverrideEntry> = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", file.display()))?;
    let it = Interpolator::from_entries(rank, &entries);
    let overrides: Vec<(Quad, Vec<i64>)> = it
        .overrides()
        .map(|(q, z)| (q.clone(), z.clone()))
        .collect();
    let quads = sample_quads(rank, samples, ctx.seed);
    let violations = validate_interpolator(&it, &overrides, &quads);
    ctx.emit(
        if violations.is_empty() {
            format!("ok: {} overrides, {} samples", overrides.len(), samples)
        } else {
            format!("{} violations: {violations:?}", violations.len())
        },
        json!({"violations": violations}),
    );
    Ok(if violations.is_empty() {
        EXIT_PASS
    } else {
        EXIT_VERDICT_FAIL
    })
}

fn scenario_run(id: &str, ctx: &Ctx) -> Result<u8> {
    let cfg = ScenarioConfig {
        budget: ctx.budget,
        mode: ctx.mode,
        derive_depth: 6,
    };
    let reports = if id == "all" {
        run_all(&cfg)
    } else {
        match run_by_id(id, &cfg) {
            Some(r) => vec![r],
            None => {
                return Err(anyhow!(
                    "unknown scenario `{id}`; available: {}",
                    SCENARIO_IDS.join(", ")
                ))
            }
        }
    };
    let all_pass = reports.iter().all(|r| r.pass);
    match ctx.output {
        Output::Text => {
            for r in &reports {
                print!("{}", r.render_table());
            }
        }
        Output::Json => println!("{}", json!(reports)),
    }
    Ok(if all_pass { EXIT_PASS } else { EXIT_VERDICT_FAIL })
}
