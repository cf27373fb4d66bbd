//! Adaptive attacker strategies.
//!
//! An [`Attacker`] emits one [`AttackInput`] at a time, reads the
//! observation, and stops on the first exploit, when its query budget runs
//! out, or when it has nothing left to try.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::countermeasures::{canary_bytes, CountermeasureSpec, StageKind};
use crate::error::{GameError, OracleError};
use crate::game::{is_success, AttackInput, Observation, Overflow, ProgramModel};
use crate::mixing::mask;
use crate::session::Oracle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Fresh uniform values for every unknown slot on every query.
    Uniform,
    /// Every candidate once, in lexicographic order.
    #[serde(rename = "enum")]
    Enumerator,
    /// Canary recovery one byte at a time through the crash oracle.
    Bytewise,
    /// Enumeration of a per-stage sub-grid: `q` canaries × `r` addresses × `t` code words.
    Composed,
}

impl FromStr for StrategyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(StrategyKind::Uniform),
            "enum" | "enumerator" => Ok(StrategyKind::Enumerator),
            "bytewise" => Ok(StrategyKind::Bytewise),
            "composed" => Ok(StrategyKind::Composed),
            other => Err(format!("unknown strategy `{other}` (expected uniform | enum | bytewise | composed)")),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::Uniform => "uniform",
            StrategyKind::Enumerator => "enum",
            StrategyKind::Bytewise => "bytewise",
            StrategyKind::Composed => "composed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Canary,
    ReturnAddress,
    Code,
}

/// What the attacker knows about its target: which slots hide a secret, how
/// wide they are, and one valid return address for slots it need not guess.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetShape {
    pub canary_width: Option<u32>,
    /// Width of the return address if it has to be guessed (PointGuard or ASLR).
    pub ra_width: Option<u32>,
    /// Width of the code word if it has to be guessed (ISR).
    pub code_width: Option<u32>,
    pub known_ra: u64,
    pub fill: Vec<u8>,
}

impl TargetShape {
    pub fn new(spec: &CountermeasureSpec, prog: &ProgramModel) -> Self {
        let guessed_ra = spec.has(StageKind::PointGuard) || spec.has(StageKind::Aslr);
        Self {
            canary_width: spec.stage(StageKind::Canary).map(|s| s.width),
            ra_width: guessed_ra.then_some(prog.addr_width()),
            code_width: spec.stage(StageKind::Isr).map(|s| s.width),
            known_ra: prog.known_valid(),
            fill: Vec::new(),
        }
    }

    pub fn with_known_ra(mut self, ra: u64) -> Self {
        self.known_ra = ra;
        self
    }

    /// Guessed slots in stage order with their candidate counts.
    pub fn slots(&self) -> Vec<(Slot, u32)> {
        let mut out = Vec::new();
        if let Some(w) = self.canary_width {
            out.push((Slot::Canary, w));
        }
        if let Some(w) = self.ra_width {
            out.push((Slot::ReturnAddress, w));
        }
        if let Some(w) = self.code_width {
            out.push((Slot::Code, w));
        }
        out
    }

    /// Full overflow with the given values for the guessed slots (in `slots()` order).
    pub fn build(&self, values: &[u64]) -> AttackInput {
        let mut o = Overflow { fill: self.fill.clone(), canary: None, ra: Some(self.known_ra), code: None };
        for ((slot, width), &v) in self.slots().into_iter().zip(values) {
            match slot {
                Slot::Canary => o.canary = Some(canary_bytes(v, width)),
                Slot::ReturnAddress => o.ra = Some(v),
                Slot::Code => o.code = Some(v),
            }
        }
        AttackInput::Overflow(o)
    }
}

fn slot_size(width: u32) -> u128 {
    1u128 << width.min(127)
}

#[derive(Clone, Debug)]
enum Cursor {
    Uniform,
    Grid { next: u128, total: u128, radices: Vec<u128> },
    Bytewise { prefix: Vec<u8>, candidate: u16, finishing: bool },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Query {
    Input(AttackInput),
    Halt,
}

/// Attacker state: strategy, budget, history and strategy cursor.
#[derive(Clone, Debug)]
pub struct Attacker {
    kind: StrategyKind,
    shape: TargetShape,
    budget: u64,
    emitted: u64,
    succeeded: bool,
    record: bool,
    history: Vec<(AttackInput, Observation)>,
    cursor: Cursor,
}

impl Attacker {
    pub fn new(kind: StrategyKind, shape: TargetShape, budget: u64) -> Result<Self, GameError> {
        let slots = shape.slots();
        let cursor = match kind {
            StrategyKind::Uniform => Cursor::Uniform,
            StrategyKind::Enumerator | StrategyKind::Composed => {
                let radices: Vec<u128> = slots.iter().map(|&(_, w)| slot_size(w)).collect();
                Cursor::Grid { next: 0, total: radices.iter().fold(1u128, |a, &r| a.saturating_mul(r)), radices }
            }
            StrategyKind::Bytewise => {
                if shape.canary_width.is_none() {
                    return Err(GameError::Config("bytewise strategy needs a canary stage".into()));
                }
                Cursor::Bytewise { prefix: Vec::new(), candidate: 0, finishing: false }
            }
        };
        Ok(Self { kind, shape, budget, emitted: 0, succeeded: false, record: true, history: Vec::new(), cursor })
    }

    /// Composed enumerator with its own budget per guessed slot.
    pub fn composed(shape: TargetShape, stage_budgets: &[u64], budget: u64) -> Result<Self, GameError> {
        let slots = shape.slots();
        if stage_budgets.len() != slots.len() {
            return Err(GameError::Config(format!(
                "{} stage budgets given for {} guessed slots",
                stage_budgets.len(),
                slots.len()
            )));
        }
        let mut a = Self::new(StrategyKind::Composed, shape, budget)?;
        let radices: Vec<u128> = slots.iter().zip(stage_budgets).map(|(&(_, w), &b)| slot_size(w).min(u128::from(b))).collect();
        a.cursor = Cursor::Grid { next: 0, total: radices.iter().fold(1u128, |x, &r| x.saturating_mul(r)), radices };
        Ok(a)
    }

    /// Stop keeping the transcript; used by bulk simulation.
    pub fn without_history(mut self) -> Self {
        self.record = false;
        self
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn shape(&self) -> &TargetShape {
        &self.shape
    }

    pub fn queries_used(&self) -> u64 {
        self.emitted
    }

    pub fn succeeded(&self) -> bool {
        self.succeeded
    }

    pub fn history(&self) -> &[(AttackInput, Observation)] {
        &self.history
    }

    pub fn into_history(self) -> Vec<(AttackInput, Observation)> {
        self.history
    }

    /// Canary bytes confirmed so far (bytewise only).
    pub fn recovered_prefix(&self) -> &[u8] {
        match &self.cursor {
            Cursor::Bytewise { prefix, .. } => prefix,
            _ => &[],
        }
    }

    pub fn next_query<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> Query {
        if self.succeeded || self.emitted >= self.budget {
            return Query::Halt;
        }
        let input = match &mut self.cursor {
            Cursor::Uniform => {
                let values: Vec<u64> = self.shape.slots().iter().map(|&(_, w)| rng.random::<u64>() & mask(w)).collect();
                self.shape.build(&values)
            }
            Cursor::Grid { next, total, radices } => {
                if *next >= *total {
                    return Query::Halt;
                }
                let mut idx = *next;
                let mut values = vec![0u64; radices.len()];
                for (v, &r) in values.iter_mut().zip(radices.iter()).rev() {
                    *v = (idx % r) as u64;
                    idx /= r;
                }
                *next += 1;
                self.shape.build(&values)
            }
            Cursor::Bytewise { prefix, candidate, finishing } => {
                let width = self.shape.canary_width.expect("checked at construction");
                let len = width.div_ceil(8) as usize;
                if prefix.len() == len {
                    *finishing = true;
                    AttackInput::Overflow(Overflow {
                        fill: self.shape.fill.clone(),
                        canary: Some(prefix.clone()),
                        ra: Some(self.shape.known_ra),
                        code: None,
                    })
                } else {
                    let mut probe = prefix.clone();
                    probe.push(*candidate as u8);
                    AttackInput::Overflow(Overflow { fill: self.shape.fill.clone(), canary: Some(probe), ra: None, code: None })
                }
            }
        };
        self.emitted += 1;
        Query::Input(input)
    }

    pub fn observe(&mut self, input: &AttackInput, obs: &Observation) {
        if is_success(obs) {
            self.succeeded = true;
        }
        if let Cursor::Bytewise { prefix, candidate, finishing } = &mut self.cursor {
            let width = self.shape.canary_width.expect("checked at construction");
            let len = width.div_ceil(8) as usize;
            if *finishing {
                *finishing = false;
                if !is_success(obs) {
                    // Key changed under us; start over.
                    prefix.clear();
                    *candidate = 0;
                }
            } else {
                match obs {
                    Observation::Normal(_) => {
                        prefix.push(*candidate as u8);
                        *candidate = 0;
                    }
                    _ => {
                        let pos = prefix.len();
                        let bits_here = if pos + 1 == len { width - 8 * pos as u32 } else { 8 };
                        if u64::from(*candidate) >= mask(bits_here) {
                            prefix.clear();
                            *candidate = 0;
                        } else {
                            *candidate += 1;
                        }
                    }
                }
            }
        }
        if self.record {
            self.history.push((input.clone(), obs.clone()));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttackReport {
    pub queries_used: u64,
    pub success: bool,
    pub transcript: Vec<(AttackInput, Observation)>,
}

/// Drives an attacker against an oracle until it exploits, halts or hits its budget.
pub fn run_attack<O: Oracle + ?Sized, R: RngCore + ?Sized>(
    mut attacker: Attacker,
    oracle: &mut O,
    rng: &mut R,
) -> Result<AttackReport, OracleError> {
    while let Query::Input(input) = attacker.next_query(rng) {
        let obs = oracle.query(&input)?;
        attacker.observe(&input, &obs);
    }
    Ok(AttackReport { queries_used: attacker.queries_used(), success: attacker.succeeded(), transcript: attacker.into_history() })
}
