use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use mitigation_games::attackers::{run_attack, Attacker, StrategyKind, TargetShape};
use mitigation_games::bounds::{self, stage_kinds, BoundParams};
use mitigation_games::montecarlo::{self, ExperimentConfig, Mode};
use mitigation_games::net::{self, RemoteOracle, SessionPolicy};
use mitigation_games::numfmt::parse_count;
use mitigation_games::replica::{bytewise_against_replicas, verify_corollary};
use mitigation_games::session::GameSession;
use mitigation_games::{CountermeasureSpec, KeyPolicy};

#[derive(Parser, Debug)]
#[command(
    name = "mitigate",
    version,
    about = "Exploit mitigations as probabilistic games: bounds, simulation, verification and a remote oracle"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write results to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
    /// Worker threads for simulations; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
    Markdown,
}

fn count(s: &str) -> Result<u64, String> {
    parse_count(s)
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form bounds: per-attempt, multi-query (fixed and per-query keys), leakage, switching.
    Bounds {
        #[command(subcommand)]
        which: BoundsCmd,
    },
    /// Composition bounds table: Q_total × per-attempt success for every stack of countermeasures.
    Table1(Table1Args),
    /// Monte Carlo or exhaustive estimate of attacker success, compared with the analytic bound.
    Simulate(SimulateArgs),
    /// One in-process attack run with its transcript summary.
    Attack(AttackArgs),
    /// Numeric checks of the security arguments; exits 2 if one fails.
    Verify {
        #[command(subcommand)]
        which: VerifyCmd,
    },
    /// Serve a protected program as a remote oracle (newline-delimited JSON over TCP).
    Serve(ServeArgs),
    /// Run an attacker against a remote oracle.
    Exploit(ExploitArgs),
}

#[derive(Subcommand, Debug)]
enum BoundsCmd {
    /// Composition bounds table: Q_total × per-attempt success for every stack of countermeasures.
    Table1(Table1Args),
    /// Every bound for one countermeasure stack.
    Eval(EvalArgs),
    /// Random function vs random permutation advantage q(q-1)/2^(n+1).
    Switching {
        #[arg(long, value_parser = count)]
        q: u64,
        #[arg(long)]
        n: u32,
    },
}

#[derive(Args, Debug, Clone)]
struct Table1Args {
    /// Architectures (bit widths) to tabulate.
    #[arg(long, value_delimiter = ',', default_values_t = vec![32, 64, 128])]
    arch: Vec<u32>,
    #[arg(long, value_parser = count, default_value = "2^25")]
    q_total: u64,
    #[arg(long, value_parser = count, default_value = "2^16")]
    valid_size: u64,
    #[arg(long, value_parser = count, default_value = "2^12")]
    isa_size: u64,
}

#[derive(Args, Debug, Clone)]
struct EvalArgs {
    /// Countermeasure stack, e.g. canary:32+aslr:32+isr:32.
    #[arg(long)]
    cm: CountermeasureSpec,
    /// Address width (defaults to the PointGuard/ASLR width, else the canary width).
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, value_parser = count, default_value = "2^16")]
    valid_size: u64,
    #[arg(long, value_parser = count, default_value = "2^12")]
    isa_size: u64,
    #[arg(long, value_parser = count, default_value = "1")]
    q: u64,
    #[arg(long, value_parser = count)]
    r: Option<u64>,
    #[arg(long, value_parser = count)]
    t: Option<u64>,
    /// Leaked key bits.
    #[arg(long, default_value_t = 0)]
    lambda: u32,
}

#[derive(Args, Debug, Clone)]
struct GameArgs {
    /// Countermeasure stack, e.g. canary:16 or canary:8+isr:8.
    #[arg(long)]
    cm: CountermeasureSpec,
    #[arg(long, default_value = "fixed")]
    policy: KeyPolicy,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, value_parser = count)]
    valid_size: Option<u64>,
    #[arg(long, value_parser = count)]
    isa_size: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct SimulateArgs {
    /// Read the whole experiment from a JSON file instead of flags.
    #[arg(long, conflicts_with = "cm")]
    config: Option<std::path::PathBuf>,
    #[arg(long, required_unless_present = "config")]
    cm: Option<CountermeasureSpec>,
    #[arg(long, default_value = "fixed")]
    policy: KeyPolicy,
    #[arg(long, default_value = "uniform")]
    attacker: StrategyKind,
    /// Per-slot budgets for the composed attacker, e.g. 16,16.
    #[arg(long, value_delimiter = ',', value_parser = count)]
    stage_budgets: Option<Vec<u64>>,
    #[arg(long, value_parser = count, default_value = "1")]
    queries: u64,
    #[arg(long, value_parser = count, default_value = "10000")]
    trials: u64,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, value_parser = count)]
    valid_size: Option<u64>,
    #[arg(long, value_parser = count)]
    isa_size: Option<u64>,
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 10)]
    min_successes: u64,
}

#[derive(Args, Debug, Clone)]
struct AttackArgs {
    #[command(flatten)]
    game: GameArgs,
    #[arg(long, default_value = "enum")]
    strategy: StrategyKind,
    #[arg(long, value_parser = count, default_value = "2^10")]
    queries: u64,
    #[arg(long, value_delimiter = ',', value_parser = count)]
    stage_budgets: Option<Vec<u64>>,
}

#[derive(Subcommand, Debug)]
enum VerifyCmd {
    /// Canary game rewritten with a bad flag: identical-until-bad, exhaustively.
    Fig1 {
        #[arg(long, value_delimiter = ',', default_values_t = vec![4, 8, 12])]
        n: Vec<u32>,
    },
    /// Random function vs random permutation: collision distinguisher against the birthday bound.
    Switching {
        #[arg(long, value_parser = count, default_value = "20")]
        q: u64,
        #[arg(long, default_value_t = 8)]
        n: u32,
        #[arg(long, value_parser = count, default_value = "1e5")]
        trials: u64,
    },
    /// Dual execution with distinct keys: no payload exploits both replicas.
    Corollary {
        #[arg(long, default_value = "canary:8")]
        cm: CountermeasureSpec,
        #[arg(long)]
        n: Option<u32>,
        /// Also run the byte-wise attacker against the replicas for this many queries.
        #[arg(long, value_parser = count)]
        side_channel_queries: Option<u64>,
        /// Canary width for the byte-wise run; wider than one byte so partial prefixes exist.
        #[arg(long, default_value_t = 32)]
        side_channel_width: u32,
    },
    /// Composition table against the published exponents.
    Table1Check(Table1Args),
}

#[derive(Args, Debug, Clone)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    #[command(flatten)]
    game: GameArgs,
    #[arg(long, value_parser = count, default_value = "2^25")]
    budget: u64,
    #[arg(long, default_value_t = 1)]
    latency_ms: u64,
    /// Really wait latency_ms before each answer.
    #[arg(long)]
    pace: bool,
}

#[derive(Args, Debug, Clone)]
struct ExploitArgs {
    #[arg(long)]
    connect: String,
    /// The target's countermeasure stack (shapes the payload, not secret).
    #[arg(long)]
    cm: CountermeasureSpec,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, default_value = "enum")]
    strategy: StrategyKind,
    #[arg(long, value_parser = count, default_value = "2^10")]
    queries: u64,
}

struct Output {
    config: Value,
    result: Value,
    text: String,
    csv: Option<String>,
    markdown: Option<String>,
    failed: bool,
}

impl Output {
    fn new(config: Value, result: Value, text: String) -> Self {
        Self { config, result, text, csv: None, markdown: None, failed: false }
    }

    fn render(&self, format: Format) -> String {
        let cfg = serde_json::to_string(&self.config).expect("config serializes");
        match format {
            Format::Json => {
                let mut s =
                    serde_json::to_string_pretty(&json!({"config": self.config, "result": self.result})).expect("serializes");
                s.push('\n');
                s
            }
            Format::Text => format!("# config: {cfg}\n{}", self.text),
            Format::Csv => format!("# config: {cfg}\n{}", self.csv.clone().unwrap_or_else(|| self.text.clone())),
            Format::Markdown => format!("<!-- config: {cfg} -->\n{}", self.markdown.clone().unwrap_or_else(|| self.text.clone())),
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn table1_output(args: &Table1Args, check: bool) -> Result<Output, String> {
    let t = bounds::table1(&args.arch, args.q_total, args.valid_size, args.isa_size).map_err(|e| e.to_string())?;
    let config = json!({"command": if check {"verify table1-check"} else {"table1"}, "arch": args.arch,
        "q_total": args.q_total, "valid_size": args.valid_size, "isa_size": args.isa_size});
    let mut out = Output::new(config, to_value(&t), t.to_text());
    out.csv = Some(t.to_csv());
    out.markdown = Some(t.to_markdown());
    if check {
        let published = args.q_total == 1 << 25 && args.valid_size == 1 << 16 && args.isa_size == 1 << 12;
        let mut lines = Vec::new();
        let mut failed = !published;
        for arch in &args.arch {
            let tol = if *arch == 32 { 1 } else { 0 };
            let bad = t.mismatches(*arch, tol);
            lines.push(format!("{arch}-bit: {} mismatches (tolerance {tol} bit)", bad.len()));
            for (row, got, want) in &bad {
                lines.push(format!("  {row}: computed 2^{got}, published 2^{want}"));
            }
            failed |= !bad.is_empty();
        }
        if !published {
            lines.push("published values only apply to Q_total = 2^25, |Valid| = 2^16, |ISA| = 2^12".into());
        }
        lines.push(if failed { "FAIL".into() } else { "PASS".into() });
        out.text.push_str(&lines.join("\n"));
        out.text.push('\n');
        out.result = json!({"table": out.result, "passed": !failed, "notes": lines});
        out.failed = failed;
    }
    Ok(out)
}

fn infer_n(spec: &CountermeasureSpec, n: Option<u32>) -> u32 {
    use mitigation_games::countermeasures::StageKind;
    n.or(spec.stage(StageKind::PointGuard).map(|s| s.width))
        .or(spec.stage(StageKind::Aslr).map(|s| s.width))
        .or(spec.stage(StageKind::Canary).map(|s| s.width))
        .unwrap_or(32)
}

fn infer_m(spec: &CountermeasureSpec, m: Option<u32>, n: u32) -> u32 {
    use mitigation_games::countermeasures::StageKind;
    m.or(spec.stage(StageKind::Isr).map(|s| s.width)).unwrap_or(n)
}

fn experiment(g: &GameArgs, attacker: StrategyKind, queries: u64, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(g.cm.clone(), attacker, g.policy, queries).seed(seed);
    cfg.n = infer_n(&g.cm, g.n);
    cfg.m = infer_m(&g.cm, g.m, cfg.n);
    cfg.valid_size = g.valid_size.unwrap_or(1 << cfg.n.saturating_sub(4).min(16));
    cfg.isa_size = g.isa_size.unwrap_or(1 << cfg.m.saturating_sub(4).min(12));
    cfg
}

fn eval_output(a: &EvalArgs) -> Result<Output, String> {
    let n = infer_n(&a.cm, a.n);
    let m = infer_m(&a.cm, a.m, n);
    let params = BoundParams {
        n,
        canary_width: a.cm.stage(mitigation_games::countermeasures::StageKind::Canary).map(|s| s.width),
        m,
        valid_size: a.valid_size,
        isa_size: a.isa_size,
        q: a.q,
        r: a.r.unwrap_or(a.q),
        t: a.t.unwrap_or(a.q),
        lambda: a.lambda,
        policy: KeyPolicy::Fixed,
    };
    let stages = stage_kinds(&a.cm);
    let e = |x: mitigation_games::error::BoundError| x.to_string();
    let single = bounds::single_attempt(&stages, &params).map_err(e)?;
    let fixed = bounds::multi_query_fixed(&stages, &params).map_err(e)?;
    let per_query = bounds::multi_query_perquery(&stages, &params).map_err(e)?;
    let leak = bounds::leakage_adjusted(&stages, &params).map_err(e)?;
    let text = format!(
        "composition           {}\nsingle attempt        {}\nfixed keys: sum       {}\nfixed keys: closed    {}\nper-query: union      {}\nper-query: exact      {}\nleakage ({} bits)      {}\n",
        a.cm.label(),
        single.label(),
        fixed.exact_sum.label(),
        fixed.closed_form.label(),
        per_query.union.label(),
        per_query.exact.label(),
        a.lambda,
        leak.closed_form.label()
    );
    let result = json!({"single_attempt": single, "fixed": fixed, "per_query": per_query, "leakage_adjusted": leak});
    let csv = format!(
        "bound,log2,label\nsingle_attempt,{},{}\nfixed_sum,{},{}\nfixed_closed,{},{}\nper_query_union,{},{}\nper_query_exact,{},{}\nleakage_adjusted,{},{}\n",
        single.log2_value, single.label(), fixed.exact_sum.log2_value, fixed.exact_sum.label(), fixed.closed_form.log2_value,
        fixed.closed_form.label(), per_query.union.log2_value, per_query.union.label(), per_query.exact.log2_value,
        per_query.exact.label(), leak.closed_form.log2_value, leak.closed_form.label()
    );
    let mut out = Output::new(json!({"command": "bounds eval", "cm": a.cm, "params": params}), result, text);
    out.csv = Some(csv);
    Ok(out)
}

fn simulate_output(a: &SimulateArgs, common: &Common) -> Result<Output, String> {
    let cfg = match &a.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&raw).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => {
            let g = GameArgs {
                cm: a.cm.clone().expect("required by clap"),
                policy: a.policy,
                n: a.n,
                m: a.m,
                valid_size: a.valid_size,
                isa_size: a.isa_size,
            };
            let mut cfg = experiment(&g, a.attacker, a.queries, common.seed).trials(a.trials);
            cfg.stage_budgets = a.stage_budgets.clone();
            cfg.min_successes = a.min_successes;
            if a.exhaustive {
                cfg.mode = Mode::Exhaustive;
            }
            cfg
        }
    };
    let report = montecarlo::estimate_success_with(&cfg, common.workers).map_err(|e| e.to_string())?;
    let text = format!(
        "successes   {} / {}\nestimate    {:.6e}\n99% CI      [{:.6e}, {:.6e}]\nbound       {} ({:.6e})\nverdict     {:?}\n",
        report.successes,
        report.trials,
        report.estimate,
        report.ci.lower,
        report.ci.upper,
        report.bound.label(),
        report.bound.value(),
        report.verdict
    );
    let mut out =
        Output::new(json!({"command": "simulate", "experiment": cfg, "workers": common.workers}), to_value(&report), text);
    out.csv = Some(format!(
        "successes,trials,estimate,ci_lower,ci_upper,bound,verdict\n{},{},{},{},{},{},{:?}\n",
        report.successes,
        report.trials,
        report.estimate,
        report.ci.lower,
        report.ci.upper,
        report.bound.value(),
        report.verdict
    ));
    Ok(out)
}

fn attack_output(a: &AttackArgs, common: &Common) -> Result<Output, String> {
    let mut cfg = experiment(&a.game, a.strategy, a.queries, common.seed);
    cfg.stage_budgets = a.stage_budgets.clone();
    let game = cfg.game().map_err(|e| e.to_string())?;
    let shape = cfg.shape().map_err(|e| e.to_string())?;
    let attacker = match &a.stage_budgets {
        Some(b) => Attacker::composed(shape, b, a.queries),
        None => Attacker::new(a.strategy, shape, a.queries),
    }
    .map_err(|e| e.to_string())?;
    let mut session = GameSession::new(game, cfg.policy, mitigation_games::mixing::derive_seed(common.seed, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(mitigation_games::mixing::mix3(common.seed, 2, 0));
    let report = run_attack(attacker, &mut session, &mut rng).map_err(|e| e.to_string())?;
    let crashes = report.transcript.iter().filter(|(_, o)| o.tag() == "crash").count();
    let normals = report.transcript.iter().filter(|(_, o)| o.tag() == "normal").count();
    let text = format!(
        "success     {}\nqueries     {}\ncrash       {crashes}\nnormal      {normals}\nbound       {}\n",
        report.success,
        report.queries_used,
        cfg.analytic_bound().map(|b| b.label()).unwrap_or_default()
    );
    let result = json!({"success": report.success, "queries_used": report.queries_used, "crashes": crashes, "normals": normals});
    Ok(Output::new(json!({"command": "attack", "experiment": cfg}), result, text))
}

fn verify_output(which: &VerifyCmd, common: &Common) -> Result<Output, String> {
    match which {
        VerifyCmd::Fig1 { n } => {
            let mut reports = Vec::new();
            let mut text = String::new();
            let mut failed = false;
            for &w in n {
                let r = montecarlo::fig1_check(w).map_err(|e| e.to_string())?;
                text.push_str(&format!(
                    "n={w:<3} Pr[E]_G1={}  Pr[E]_G2={}  Pr[bad]_G2={}  payloads={}  {}\n",
                    r.reference.exploit_g1,
                    r.reference.exploit_g2,
                    r.reference.bad_g2,
                    r.payloads_checked,
                    if r.passed { "PASS" } else { "FAIL" }
                ));
                failed |= !r.passed;
                reports.push(r);
            }
            let mut out = Output::new(json!({"command": "verify fig1", "n": n}), to_value(&reports), text);
            out.failed = failed;
            Ok(out)
        }
        VerifyCmd::Switching { q, n, trials } => {
            let r = montecarlo::switching_experiment(*q, *n, *trials, common.seed).map_err(|e| e.to_string())?;
            let ok = r.exact_in_ci && r.within_bound && r.permutation_collisions == 0;
            let text = format!(
                "advantage   {:.5}\n99% CI      [{:.5}, {:.5}]\nexact       {:.5}\nbound       {:.5}\n{}\n",
                r.advantage,
                r.ci.lower,
                r.ci.upper,
                num_traits_to_f64(&r.exact),
                r.bound.value(),
                if ok { "PASS" } else { "FAIL" }
            );
            let mut out = Output::new(
                json!({"command": "verify switching", "q": q, "n": n, "trials": trials, "seed": common.seed}),
                to_value(&r),
                text,
            );
            out.failed = !ok;
            Ok(out)
        }
        VerifyCmd::Corollary { cm, n, side_channel_queries, side_channel_width } => {
            let n = n.unwrap_or_else(|| cm.stages().first().map(|s| s.width).unwrap_or(8));
            let r = verify_corollary(cm, n).map_err(|e| e.to_string())?;
            let mut text = format!(
                "key pairs   {}\npayloads    {}\nsuccesses   {}\npartial Normal pairs {}\n{}\n",
                r.key_pairs, r.payloads, r.successes, r.partial_normal_pairs, r.note
            );
            let mut failed = !r.passed;
            let mut result = json!({"corollary": r});
            if let Some(q) = side_channel_queries {
                let s = bytewise_against_replicas(*side_channel_width, *q, common.seed).map_err(|e| e.to_string())?;
                text.push_str(&format!(
                    "bytewise vs replicas: {} queries, {} exploits, {} / {} partial probes Normal, longest prefix {}\n",
                    s.queries, s.exploits, s.partial_normal, s.partial_probes, s.longest_prefix
                ));
                failed |= !s.closed;
                result["side_channel"] = to_value(&s);
            }
            text.push_str(if failed { "FAIL\n" } else { "PASS\n" });
            let mut out =
                Output::new(json!({"command": "verify corollary", "cm": cm, "n": n, "seed": common.seed}), result, text);
            out.failed = failed;
            Ok(out)
        }
        VerifyCmd::Table1Check(args) => table1_output(args, true),
    }
}

fn num_traits_to_f64(r: &num_rational::BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

fn serve_cmd(a: &ServeArgs, common: &Common) -> Result<Output, String> {
    let cfg = experiment(&a.game, StrategyKind::Uniform, 1, common.seed);
    let mut policy = SessionPolicy::new(a.game.cm.clone(), a.game.policy, common.seed).with_budget(a.budget);
    policy.n = cfg.n;
    policy.m = cfg.m;
    policy.valid_size = cfg.valid_size;
    policy.isa_size = cfg.isa_size;
    policy.latency_ms = a.latency_ms;
    policy.pace = a.pace;
    eprintln!("# config: {}", serde_json::to_string(&json!({"command": "serve", "listen": a.listen, "policy": policy})).unwrap());
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(common.workers.max(1))
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(net::serve(&a.listen, policy.clone())).map_err(|e| e.to_string())?;
    Ok(Output::new(
        json!({"command": "serve", "listen": a.listen, "policy": policy}),
        json!({"stopped": true}),
        "server stopped\n".into(),
    ))
}

fn exploit_output(a: &ExploitArgs, common: &Common) -> Result<Output, String> {
    let n = infer_n(&a.cm, a.n);
    let m = infer_m(&a.cm, a.m, n);
    let prog =
        mitigation_games::ProgramModel::with_sizes(n, m, 1 << n.saturating_sub(4).min(16), 1 << m.saturating_sub(4).min(12))
            .map_err(|e| e.to_string())?;
    let shape = TargetShape::new(&a.cm, &prog);
    let attacker = Attacker::new(a.strategy, shape, a.queries).map_err(|e| e.to_string())?;
    let mut oracle = RemoteOracle::connect(a.connect.as_str()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(mitigation_games::mixing::mix3(common.seed, 2, 0));
    let report = run_attack(attacker, &mut oracle, &mut rng);
    let config = json!({"command": "exploit", "connect": a.connect, "cm": a.cm, "strategy": a.strategy, "queries": a.queries, "seed": common.seed});
    let (success, used, stop) = match report {
        Ok(r) => (r.success, r.queries_used, "halted".to_string()),
        Err(mitigation_games::OracleError::BudgetExhausted) => (false, oracle.queries_used(), "budget_exhausted".into()),
        Err(e) => return Err(e.to_string()),
    };
    let stats = oracle.stats().ok();
    let text = format!(
        "success     {success}\nqueries     {used}\nstopped     {stop}\nsimulated   {} ms\n",
        stats.map(|s| s.1.to_string()).unwrap_or_else(|| "?".into())
    );
    let result = json!({"success": success, "queries_used": used, "stopped": stop,
        "simulated_elapsed_ms": stats.map(|s| s.1)});
    Ok(Output::new(config, result, text))
}

fn run(cli: Cli) -> Result<Output, String> {
    let c = &cli.common;
    match &cli.command {
        Command::Bounds { which } => match which {
            BoundsCmd::Table1(a) => table1_output(a, false),
            BoundsCmd::Eval(a) => eval_output(a),
            BoundsCmd::Switching { q, n } => {
                let b = bounds::switching_bound(*q, *n);
                let text = format!("switching bound q={q} n={n}: {} ({:.6})\n", b.label(), b.value());
                Ok(Output::new(json!({"command": "bounds switching", "q": q, "n": n}), to_value(&b), text))
            }
        },
        Command::Table1(a) => table1_output(a, false),
        Command::Simulate(a) => simulate_output(a, c),
        Command::Attack(a) => attack_output(a, c),
        Command::Verify { which } => verify_output(which, c),
        Command::Serve(a) => serve_cmd(a, c),
        Command::Exploit(a) => exploit_output(a, c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let format = cli.common.format;
    let out_path = cli.common.out.clone();
    let output = match run(cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let rendered = output.render(format);
    let written = match &out_path {
        Some(p) => std::fs::write(p, rendered.as_bytes()),
        None => std::io::stdout().write_all(rendered.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(1);
    }
    if output.failed {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
