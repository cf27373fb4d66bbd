//! Victim program model, attacker inputs, observations and the two reference
//! executions (ideal and unprotected) shared by every countermeasure game.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GameError;
use crate::mixing::mask;

/// Finite set of `width`-bit words, stored sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordSet {
    width: u32,
    members: Vec<u64>,
}

impl WordSet {
    pub fn new(width: u32, members: impl IntoIterator<Item = u64>) -> Result<Self, GameError> {
        if width == 0 || width > 64 {
            return Err(GameError::Program(format!("word width {width} outside 1..=64")));
        }
        let mut members: Vec<u64> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if let Some(&top) = members.last() {
            if top > mask(width) {
                return Err(GameError::Domain { value: top, width });
            }
        }
        Ok(Self { width, members })
    }

    /// The `size` smallest words `[0, size)`.
    pub fn prefix(width: u32, size: u64) -> Result<Self, GameError> {
        Self::new(width, 0..size)
    }

    #[inline]
    pub fn contains(&self, word: u64) -> bool {
        self.members.binary_search(&word).is_ok()
    }

    pub fn len(&self) -> u64 {
        self.members.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.members.iter().copied()
    }

    pub fn min(&self) -> Option<u64> {
        self.members.first().copied()
    }

    /// Smallest word of the domain that is not a member.
    pub fn first_non_member(&self) -> Option<u64> {
        let mut expect = 0u64;
        for &m in &self.members {
            if m != expect {
                return Some(expect);
            }
            expect = expect.checked_add(1)?;
        }
        (expect <= mask(self.width)).then_some(expect)
    }
}

pub type LegalOutputFn = Arc<dyn Fn(&[u8]) -> Vec<u8> + Send + Sync>;

/// Abstract victim program.
///
/// `valid_set` holds the return addresses that lead to executable code and
/// `isa_set` the instruction words that decode. `legal_output` stands in for
/// the program's behaviour on inputs that stay within bounds.
#[derive(Clone)]
pub struct ProgramModel {
    addr_width: u32,
    instr_width: u32,
    valid_set: WordSet,
    isa_set: WordSet,
    legal_output: Option<LegalOutputFn>,
}

impl fmt::Debug for ProgramModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProgramModel")
            .field("addr_width", &self.addr_width)
            .field("instr_width", &self.instr_width)
            .field("valid_size", &self.valid_set.len())
            .field("isa_size", &self.isa_set.len())
            .field("legal_output", &if self.legal_output.is_some() { "custom" } else { "identity" })
            .finish()
    }
}

impl ProgramModel {
    pub fn new(valid_set: WordSet, isa_set: WordSet) -> Result<Self, GameError> {
        let (n, m) = (valid_set.width(), isa_set.width());
        check_proper_subset("valid", &valid_set)?;
        check_proper_subset("isa", &isa_set)?;
        Ok(Self { addr_width: n, instr_width: m, valid_set, isa_set, legal_output: None })
    }

    /// Program whose valid addresses and instruction words are the lowest
    /// `valid_size` and `isa_size` words of their domains.
    pub fn with_sizes(addr_width: u32, instr_width: u32, valid_size: u64, isa_size: u64) -> Result<Self, GameError> {
        Self::new(WordSet::prefix(addr_width, valid_size)?, WordSet::prefix(instr_width, isa_size)?)
    }

    pub fn with_legal_output(mut self, f: impl Fn(&[u8]) -> Vec<u8> + Send + Sync + 'static) -> Self {
        self.legal_output = Some(Arc::new(f));
        self
    }

    pub fn addr_width(&self) -> u32 {
        self.addr_width
    }

    pub fn instr_width(&self) -> u32 {
        self.instr_width
    }

    pub fn valid_set(&self) -> &WordSet {
        &self.valid_set
    }

    pub fn isa_set(&self) -> &WordSet {
        &self.isa_set
    }

    #[inline]
    pub fn is_valid(&self, addr: u64) -> bool {
        self.valid_set.contains(addr)
    }

    #[inline]
    pub fn is_instruction(&self, word: u64) -> bool {
        self.isa_set.contains(word)
    }

    /// Some member of `Valid`, the address an attacker is assumed to know.
    pub fn known_valid(&self) -> u64 {
        self.valid_set.min().expect("valid set is non-empty")
    }

    pub fn known_invalid(&self) -> u64 {
        self.valid_set.first_non_member().expect("valid set is a proper subset")
    }

    pub fn legal_output(&self, data: &[u8]) -> Vec<u8> {
        match &self.legal_output {
            Some(f) => f(data),
            None => data.to_vec(),
        }
    }
}

fn check_proper_subset(name: &str, set: &WordSet) -> Result<(), GameError> {
    let domain = if set.width() >= 64 { u128::from(u64::MAX) + 1 } else { 1u128 << set.width() };
    let size = u128::from(set.len());
    if size == 0 || size >= domain {
        return Err(GameError::Program(format!("{name} set must satisfy 1 <= |set| < 2^{}, got {size}", set.width())));
    }
    Ok(())
}

/// The out-of-bounds part of an input. Slots are laid out contiguously
/// after the buffer: canary, then return address, then injected code.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Overflow {
    /// Bytes filling the buffer itself.
    pub fill: Vec<u8>,
    /// Little-endian bytes written over the canary, possibly fewer than its width.
    pub canary: Option<Vec<u8>>,
    pub ra: Option<u64>,
    /// Injected instruction word, fetched when control reaches `ra`.
    pub code: Option<u64>,
}

impl Overflow {
    pub fn canary_bytes(&self) -> &[u8] {
        self.canary.as_deref().unwrap_or(&[])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AttackInput {
    Legal(Vec<u8>),
    Overflow(Overflow),
}

impl AttackInput {
    pub fn is_overflow(&self) -> bool {
        matches!(self, AttackInput::Overflow(_))
    }

    /// Input-level shape check; countermeasure-specific checks happen in the game.
    pub fn check_shape(&self) -> Result<(), GameError> {
        if let AttackInput::Overflow(o) = self {
            if o.code.is_some() && o.ra.is_none() {
                return Err(GameError::Contiguity("code slot written without a return address"));
            }
        }
        Ok(())
    }
}

/// What the remote attacker sees after one query.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Observation {
    Crash,
    Normal(Vec<u8>),
    /// Control reached attacker-chosen code; carries the return address as
    /// written by the attacker, never a key-dependent value.
    Exploited(u64),
}

impl Observation {
    pub fn tag(&self) -> &'static str {
        match self {
            Observation::Crash => "crash",
            Observation::Normal(_) => "normal",
            Observation::Exploited(_) => "exploited",
        }
    }
}

/// Success event: an overflow that the program did not stop.
#[inline]
pub fn is_success(obs: &Observation) -> bool {
    matches!(obs, Observation::Exploited(_))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyId {
    Canary,
    PointGuard,
    AslrSlide,
    AslrLayout,
    Isr,
}

impl KeyId {
    pub const ALL: [KeyId; 5] = [KeyId::Canary, KeyId::PointGuard, KeyId::AslrSlide, KeyId::AslrLayout, KeyId::Isr];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            KeyId::Canary => "canary",
            KeyId::PointGuard => "pointguard",
            KeyId::AslrSlide => "aslr",
            KeyId::AslrLayout => "aslr.layout",
            KeyId::Isr => "isr",
        }
    }
}

/// When keys are drawn: before every query, or once per session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyPolicy {
    PerQuery,
    #[default]
    Fixed,
}

impl std::str::FromStr for KeyPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per-query" | "perquery" | "per_query" => Ok(KeyPolicy::PerQuery),
            "fixed" => Ok(KeyPolicy::Fixed),
            other => Err(format!("unknown key policy `{other}` (expected fixed | per-query)")),
        }
    }
}

impl fmt::Display for KeyPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyPolicy::PerQuery => "per-query",
            KeyPolicy::Fixed => "fixed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KeySlot {
    pub id: KeyId,
    pub width: u32,
}

/// Key values for one game instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KeyMaterial {
    policy: KeyPolicy,
    schema: Vec<KeySlot>,
    values: [u64; 5],
}

impl KeyMaterial {
    /// All keys zero; mostly useful as a starting point for `set`.
    pub fn zeroed(schema: &[KeySlot], policy: KeyPolicy) -> Self {
        Self { policy, schema: schema.to_vec(), values: [0; 5] }
    }

    pub fn sample<R: Rng + ?Sized>(schema: &[KeySlot], policy: KeyPolicy, rng: &mut R) -> Self {
        let mut keys = Self::zeroed(schema, policy);
        keys.resample(rng);
        keys
    }

    pub fn from_values(schema: &[KeySlot], policy: KeyPolicy, values: &[(KeyId, u64)]) -> Result<Self, GameError> {
        let mut keys = Self::zeroed(schema, policy);
        for &(id, v) in values {
            keys.set(id, v)?;
        }
        Ok(keys)
    }

    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for slot in &self.schema {
            self.values[slot.id.index()] = rng.random::<u64>() & mask(slot.width);
        }
    }

    /// Redraws the keys if the policy asks for a fresh draw per query.
    pub fn refresh<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.policy == KeyPolicy::PerQuery {
            self.resample(rng);
        }
    }

    pub fn policy(&self) -> KeyPolicy {
        self.policy
    }

    pub fn schema(&self) -> &[KeySlot] {
        &self.schema
    }

    fn slot(&self, id: KeyId) -> Option<&KeySlot> {
        self.schema.iter().find(|s| s.id == id)
    }

    #[inline]
    pub fn get(&self, id: KeyId) -> Result<u64, GameError> {
        match self.slot(id) {
            Some(_) => Ok(self.values[id.index()]),
            None => Err(GameError::MissingKey(id.name())),
        }
    }

    pub fn set(&mut self, id: KeyId, value: u64) -> Result<(), GameError> {
        let width = self.slot(id).ok_or(GameError::MissingKey(id.name()))?.width;
        if value > mask(width) {
            return Err(GameError::Domain { value, width });
        }
        self.values[id.index()] = value;
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (KeySlot, u64)> + '_ {
        self.schema.iter().map(|s| (*s, self.values[s.id.index()]))
    }
}

/// A probabilistic execution of the victim program under some keys.
pub trait Game: Send + Sync + fmt::Debug {
    fn program(&self) -> &ProgramModel;

    fn key_schema(&self) -> Vec<KeySlot>;

    fn evaluate(&self, input: &AttackInput, keys: &KeyMaterial) -> Result<Observation, GameError>;
}

/// Program with perfect memory safety: every overflow crashes.
pub fn run_ideal(input: &AttackInput, prog: &ProgramModel) -> Observation {
    match input {
        AttackInput::Legal(d) => Observation::Normal(prog.legal_output(d)),
        AttackInput::Overflow(_) => Observation::Crash,
    }
}

/// Program without any countermeasure: a valid overwritten return address is
/// followed.
pub fn run_unprotected(input: &AttackInput, prog: &ProgramModel) -> Observation {
    match input {
        AttackInput::Legal(d) => Observation::Normal(prog.legal_output(d)),
        AttackInput::Overflow(o) => match o.ra {
            Some(ra) if prog.is_valid(ra) => Observation::Exploited(ra),
            _ => Observation::Crash,
        },
    }
}

#[derive(Clone, Debug)]
pub struct IdealGame {
    prog: ProgramModel,
}

impl IdealGame {
    pub fn new(prog: ProgramModel) -> Self {
        Self { prog }
    }
}

impl Game for IdealGame {
    fn program(&self) -> &ProgramModel {
        &self.prog
    }

    fn key_schema(&self) -> Vec<KeySlot> {
        Vec::new()
    }

    fn evaluate(&self, input: &AttackInput, _keys: &KeyMaterial) -> Result<Observation, GameError> {
        input.check_shape()?;
        Ok(run_ideal(input, &self.prog))
    }
}

#[derive(Clone, Debug)]
pub struct UnprotectedGame {
    prog: ProgramModel,
}

impl UnprotectedGame {
    pub fn new(prog: ProgramModel) -> Self {
        Self { prog }
    }
}

impl Game for UnprotectedGame {
    fn program(&self) -> &ProgramModel {
        &self.prog
    }

    fn key_schema(&self) -> Vec<KeySlot> {
        Vec::new()
    }

    fn evaluate(&self, input: &AttackInput, _keys: &KeyMaterial) -> Result<Observation, GameError> {
        input.check_shape()?;
        Ok(run_unprotected(input, &self.prog))
    }
}
