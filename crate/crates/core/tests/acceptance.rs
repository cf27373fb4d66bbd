//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits non-zero if any fails. Each check also has a wall-clock limit.

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mitigation_games::attackers::{run_attack, Attacker, StrategyKind, TargetShape};
use mitigation_games::bounds::{self, stage_kinds, BoundParams, TABLE1_ARCHES};
use mitigation_games::countermeasures::StageKind;
use mitigation_games::game::{AttackInput, KeyPolicy};
use mitigation_games::mixing::{derive_seed, mix3};
use mitigation_games::montecarlo::{self, estimate_success, exhaustive_success, exhaustive_success_many, ExperimentConfig};
use mitigation_games::net::{spawn_server, RemoteOracle, SessionPolicy};
use mitigation_games::replica::{bytewise_against_replicas, verify_corollary};
use mitigation_games::session::{GameSession, Oracle};
use mitigation_games::{CountermeasureSpec, OracleError};

type Check = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn spec(s: &str) -> CountermeasureSpec {
    s.parse().expect("valid spec")
}

fn composition_table() -> Check {
    let t = bounds::table1(&TABLE1_ARCHES, 1 << 25, 1 << 16, 1 << 12).map_err(|e| e.to_string())?;
    let m64 = t.mismatches(64, 0);
    let m128 = t.mismatches(128, 0);
    let m32 = t.mismatches(32, 1);
    ensure(m64.is_empty(), format!("64-bit mismatches: {m64:?}"))?;
    ensure(m128.is_empty(), format!("128-bit mismatches: {m128:?}"))?;
    ensure(m32.is_empty(), format!("32-bit off by more than one bit: {m32:?}"))?;
    let cell = |row: &str, arch: u32| {
        let r = t.rows.iter().find(|r| r.composition == row).expect("row present");
        r.cells.iter().find(|c| c.arch == arch).expect("arch present").clone()
    };
    ensure(cell("ASLR⊗PointGuard", 64).exponent() == -23, "ASLR⊗PointGuard 64-bit")?;
    ensure(cell("Canary⊗ASLR⊗ISR", 128).exponent() == -331, "Canary⊗ASLR⊗ISR 128-bit")?;
    let clamp = cell("ASLR⊗PointGuard", 32);
    ensure(clamp.bound.clamped && clamp.bound.value() == 1.0, "ASLR⊗PointGuard 32-bit should clamp to 1")?;
    Ok(format!("{} rows; 64/128-bit exact, 32-bit within one bit", t.rows.len()))
}

fn leakage_example() -> Check {
    let params = BoundParams { n: 32, canary_width: Some(32), lambda: 8, q: 1, r: 1, t: 1, ..BoundParams::default() };
    let b = bounds::leakage_adjusted(&[StageKind::Canary], &params).map_err(|e| e.to_string())?.closed_form;
    let got = b.exact.ok_or("leakage bound not exact")?;
    let want = rat(1, (1 << 24) - 1);
    ensure(got == want, format!("got {got}, want {want}"))?;
    // Relative error of the rounded published value against the exact bound.
    let published = rat(1, 1 << 24);
    let rel = ((&got - &published) / &got).abs();
    ensure(rel <= rat(1, 1 << 24), format!("relative error {rel}"))?;
    Ok(format!("1/(2^24 - 1), relative error to 2^-24 = {rel}"))
}

fn dominance_grid() -> Check {
    let qs = [1u64, 4, 16, 64];
    let mut points = 0;
    for n in [4u32, 8, 12] {
        for policy in [KeyPolicy::Fixed, KeyPolicy::PerQuery] {
            for cm in ["canary", "aslr", "pointguard", "isr"] {
                for attacker in [StrategyKind::Enumerator, StrategyKind::Uniform] {
                    let cfg = ExperimentConfig::new(spec(&format!("{cm}:{n}")), attacker, policy, 64).seed(u64::from(n));
                    ensure(cm != "aslr" || cfg.valid_size == 1 << (n - 4), "aslr valid set size")?;
                    let exact = exhaustive_success_many(&cfg, &qs).map_err(|e| format!("{cm}:{n} {policy} {attacker}: {e}"))?;
                    for (&q, p) in qs.iter().zip(&exact) {
                        let at = ExperimentConfig { queries: q, ..cfg.clone() };
                        let stages = stage_kinds(&at.spec);
                        let params = at.bound_params();
                        let bound = match policy {
                            KeyPolicy::Fixed => bounds::multi_query_fixed(&stages, &params).map_err(|e| e.to_string())?.exact_sum,
                            KeyPolicy::PerQuery => {
                                bounds::multi_query_perquery(&stages, &params).map_err(|e| e.to_string())?.union
                            }
                        };
                        ensure(
                            bound.exact.is_some() && bound.dominates(p),
                            format!("{cm}:{n} {policy} {attacker} q={q}: exact {p} > bound {:?}", bound.exact),
                        )?;
                        points += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{points} (config, q) points, exact probability <= bound in rational arithmetic"))
}

fn enumerator_exactness() -> Check {
    let fixed = ExperimentConfig::new(spec("canary:8"), StrategyKind::Enumerator, KeyPolicy::Fixed, 64);
    let p = exhaustive_success(&fixed).map_err(|e| e.to_string())?;
    ensure(p == rat(64, 256), format!("fixed enumerator: {p}"))?;
    let fresh = ExperimentConfig::new(spec("canary:8"), StrategyKind::Uniform, KeyPolicy::PerQuery, 64);
    let p = exhaustive_success(&fresh).map_err(|e| e.to_string())?;
    let want = BigRational::one() - Pow::pow(rat(255, 256), 64u32);
    ensure(p == want, format!("per-query uniform: {p}"))?;
    Ok(format!("64/256 and 1 - (255/256)^64 ≈ {:.6}", want.to_f64().unwrap_or(f64::NAN)))
}

fn bytewise_side_channel() -> Check {
    let cfg = ExperimentConfig::new(spec("canary:32"), StrategyKind::Bytewise, KeyPolicy::Fixed, 1025);
    let game = cfg.game().map_err(|e| e.to_string())?;
    let shape = cfg.shape().map_err(|e| e.to_string())?;
    let mut worst = 0;
    for i in 0..1000u64 {
        let mut session = GameSession::new(Arc::clone(&game), KeyPolicy::Fixed, derive_seed(7, i));
        let mut rng = ChaCha8Rng::seed_from_u64(mix3(7, 2, i));
        let attacker = Attacker::new(StrategyKind::Bytewise, shape.clone(), 1025).map_err(|e| e.to_string())?.without_history();
        let r = run_attack(attacker, &mut session, &mut rng).map_err(|e| e.to_string())?;
        ensure(r.success, format!("session {i} failed after {} queries", r.queries_used))?;
        worst = worst.max(r.queries_used);
    }
    ensure(worst <= 1025, format!("worst session used {worst} queries"))?;

    let pq = ExperimentConfig::new(spec("canary:16"), StrategyKind::Bytewise, KeyPolicy::PerQuery, 4096).trials(100_000).seed(11);
    let rep = estimate_success(&pq).map_err(|e| e.to_string())?;
    let limit = 4096.0 / 65536.0 + rep.ci.half_width();
    ensure(rep.estimate <= limit, format!("per-query estimate {} > {limit}", rep.estimate))?;
    Ok(format!(
        "fixed: 1000/1000 sessions, worst {worst} queries; per-query: {}/{} <= 2^-4 + half-width",
        rep.successes, rep.trials
    ))
}

fn sme_corollary() -> Check {
    let r = verify_corollary(&spec("canary:8"), 8).map_err(|e| e.to_string())?;
    ensure(r.key_pairs == 256 * 255, format!("{} key pairs", r.key_pairs))?;
    ensure(r.successes == 0, format!("{} successes", r.successes))?;
    ensure(r.passed, r.note.clone())?;
    let s = bytewise_against_replicas(32, 100_000, 3).map_err(|e| e.to_string())?;
    ensure(s.exploits == 0, format!("{} exploits through replicas", s.exploits))?;
    // Replica keys are redrawn after every crash, so a pair occasionally shares
    // a byte; what must not happen is a Normal rate above a blind 1/256 guess.
    ensure(s.closed, format!("partial-overwrite Normal rate CI {:?} not below chance", s.normal_rate_ci))?;
    Ok(format!(
        "0 successes over {} key pairs x {} payloads; bytewise: {} queries, {}/{} partial probes Normal (99% upper {:.2e} < 1/256)",
        r.key_pairs, r.payloads, s.queries, s.partial_normal, s.partial_probes, s.normal_rate_ci.upper
    ))
}

fn identical_until_bad() -> Check {
    let mut total = 0;
    for n in [4u32, 8, 12] {
        let r = montecarlo::fig1_check(n).map_err(|e| e.to_string())?;
        ensure(r.exploit_g2_always_zero, format!("n={n}: Pr[E] in G2 not 0"))?;
        ensure(r.bad_is_one_in_2n, format!("n={n}: Pr[bad] in G2 not 2^-n"))?;
        ensure(r.inequality_holds && r.passed, format!("n={n}: |Pr[E]_G1 - Pr[E]_G2| > Pr[bad]"))?;
        ensure(r.reference.bad_g2 == rat(1, 1 << n), format!("n={n}: reference bad {}", r.reference.bad_g2))?;
        total += r.payloads_checked;
    }
    Ok(format!("n = 4, 8, 12; {total} payloads checked against every key"))
}

fn switching() -> Check {
    let r = montecarlo::switching_experiment(20, 8, 100_000, 5).map_err(|e| e.to_string())?;
    let exact = r.exact.to_f64().unwrap_or(f64::NAN);
    ensure(r.exact_in_ci, format!("exact {exact} outside CI [{}, {}]", r.ci.lower, r.ci.upper))?;
    ensure(r.within_bound && r.advantage <= 380.0 / 512.0, format!("advantage {} above 380/512", r.advantage))?;
    Ok(format!("advantage {:.4}, exact {:.4}, bound {:.4}", r.advantage, exact, 380.0 / 512.0))
}

fn remote_equivalence() -> Check {
    let specs = ["canary:8", "canary:16", "canary:32", "aslr:12", "pointguard:12", "isr:10", "canary:8+isr:8", "canary:8+aslr:8"];
    let strategies = [StrategyKind::Uniform, StrategyKind::Enumerator, StrategyKind::Bytewise];
    let mut pick = ChaCha8Rng::seed_from_u64(2024);
    let mut queries = 0;
    for i in 0..20 {
        let s = spec(specs[pick.random_range(0..specs.len())]);
        let kind = strategies[pick.random_range(0..strategies.len())];
        let kind = if kind == StrategyKind::Bytewise && !s.has(StageKind::Canary) { StrategyKind::Uniform } else { kind };
        let policy = if pick.random() { KeyPolicy::Fixed } else { KeyPolicy::PerQuery };
        let seed: u64 = pick.random();
        let sp = SessionPolicy::new(s.clone(), policy, seed);
        let game = sp.game().map_err(|e| e.to_string())?;
        let shape = TargetShape::new(&s, &sp.program().map_err(|e| e.to_string())?);
        let budget = 300;
        let attacker = || Attacker::new(kind, shape.clone(), budget).map_err(|e| e.to_string());

        let mut local = sp.session(game, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let a = run_attack(attacker()?, &mut local, &mut rng).map_err(|e| e.to_string())?;

        let server = spawn_server("127.0.0.1:0", sp).map_err(|e| e.to_string())?;
        let mut remote = RemoteOracle::connect(server.addr).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let b = run_attack(attacker()?, &mut remote, &mut rng).map_err(|e| e.to_string())?;
        ensure(a.transcript == b.transcript, format!("config {i} ({s}, {kind}, {policy}): transcripts differ"))?;
        queries += a.queries_used;
        server.shutdown().map_err(|e| e.to_string())?;
    }

    let server = spawn_server("127.0.0.1:0", SessionPolicy::new(spec("canary:8"), KeyPolicy::Fixed, 1).with_budget(1 << 10))
        .map_err(|e| e.to_string())?;
    let mut c = RemoteOracle::connect(server.addr).map_err(|e| e.to_string())?;
    for k in 1..=1024 {
        c.query(&AttackInput::Legal(vec![1])).map_err(|e| format!("query {k}: {e}"))?;
    }
    ensure(matches!(c.query(&AttackInput::Legal(vec![1])), Err(OracleError::BudgetExhausted)), "query 1025 not refused")?;
    Ok(format!("20 configs, {queries} queries, identical transcripts; budget_exhausted on query 1025"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("composition bounds table", 1, composition_table),
        ("leakage-adjusted bound", 1, leakage_example),
        ("exhaustive dominance grid", 120, dominance_grid),
        ("enumerator exactness", 10, enumerator_exactness),
        ("byte-wise canary side channel", 120, bytewise_side_channel),
        ("replica corollary", 120, sme_corollary),
        ("identical-until-bad canary transformation", 30, identical_until_bad),
        ("PRF/PRP switching", 60, switching),
        ("remote oracle equivalence", 120, remote_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > Duration::from_secs(*limit) => Err(format!("{detail}; took {took:.2?}, limit {limit}s")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {} {name} ({took:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} ({took:.2?}): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
