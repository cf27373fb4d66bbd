use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::GameError;
use crate::game::{KeyId, KeySlot, ProgramModel};

/// Countermeasure kinds in the only order they can be stacked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageKind {
    Canary,
    PointGuard,
    Aslr,
    Isr,
}

impl StageKind {
    pub fn token(self) -> &'static str {
        match self {
            StageKind::Canary => "canary",
            StageKind::PointGuard => "pointguard",
            StageKind::Aslr => "aslr",
            StageKind::Isr => "isr",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StageKind::Canary => "Canary",
            StageKind::PointGuard => "PointGuard",
            StageKind::Aslr => "ASLR",
            StageKind::Isr => "ISR",
        }
    }
}

impl FromStr for StageKind {
    type Err = GameError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "canary" => Ok(StageKind::Canary),
            "pointguard" | "pg" => Ok(StageKind::PointGuard),
            "aslr" => Ok(StageKind::Aslr),
            "isr" => Ok(StageKind::Isr),
            other => Err(GameError::Config(format!("unknown countermeasure `{other}`"))),
        }
    }
}

/// One countermeasure with the bit width of its key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Stage {
    pub kind: StageKind,
    pub width: u32,
}

pub const DEFAULT_CANARY_WIDTH: u32 = 32;

/// Ordered stack of countermeasures, e.g. `canary:32+aslr:32+isr:8`.
///
/// An empty spec (`none`) describes the unprotected program.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct CountermeasureSpec {
    stages: Vec<Stage>,
}

impl CountermeasureSpec {
    pub fn new(stages: Vec<Stage>) -> Result<Self, GameError> {
        for pair in stages.windows(2) {
            if pair[0].kind == pair[1].kind {
                return Err(GameError::Config(format!("duplicate {} stage", pair[0].kind.token())));
            }
            if pair[0].kind > pair[1].kind {
                return Err(GameError::Config(format!(
                    "{} cannot follow {}; order is canary, pointguard, aslr, isr",
                    pair[1].kind.token(),
                    pair[0].kind.token()
                )));
            }
        }
        for s in &stages {
            if s.width == 0 || s.width > 64 {
                return Err(GameError::Config(format!("{} width {} outside 1..=64", s.kind.token(), s.width)));
            }
        }
        Ok(Self { stages })
    }

    pub fn unprotected() -> Self {
        Self::default()
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn stage(&self, kind: StageKind) -> Option<Stage> {
        self.stages.iter().copied().find(|s| s.kind == kind)
    }

    pub fn has(&self, kind: StageKind) -> bool {
        self.stage(kind).is_some()
    }

    /// Keys the composed game needs. ASLR contributes its secret slide and a
    /// 64-bit layout key for the Feistel scramble.
    pub fn key_schema(&self) -> Vec<KeySlot> {
        let mut out = Vec::new();
        for s in &self.stages {
            match s.kind {
                StageKind::Canary => out.push(KeySlot { id: KeyId::Canary, width: s.width }),
                StageKind::PointGuard => out.push(KeySlot { id: KeyId::PointGuard, width: s.width }),
                StageKind::Aslr => {
                    out.push(KeySlot { id: KeyId::AslrSlide, width: s.width });
                    out.push(KeySlot { id: KeyId::AslrLayout, width: 64 });
                }
                StageKind::Isr => out.push(KeySlot { id: KeyId::Isr, width: s.width }),
            }
        }
        out
    }

    /// Checks stage widths against the program's address and instruction widths.
    pub fn check_program(&self, prog: &ProgramModel) -> Result<(), GameError> {
        for s in &self.stages {
            let expected = match s.kind {
                StageKind::Canary => continue,
                StageKind::PointGuard | StageKind::Aslr => prog.addr_width(),
                StageKind::Isr => prog.instr_width(),
            };
            if s.width != expected {
                return Err(GameError::Config(format!(
                    "{} key width {} does not match program width {expected}",
                    s.kind.token(),
                    s.width
                )));
            }
        }
        Ok(())
    }

    /// Human-readable name such as `Canary⊗ASLR⊗ISR`.
    pub fn label(&self) -> String {
        if self.stages.is_empty() {
            return "none".to_string();
        }
        self.stages.iter().map(|s| s.kind.label()).collect::<Vec<_>>().join("⊗")
    }
}

impl fmt::Display for CountermeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.stages.is_empty() {
            return f.write_str("none");
        }
        let parts: Vec<String> = self.stages.iter().map(|s| format!("{}:{}", s.kind.token(), s.width)).collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for CountermeasureSpec {
    type Err = GameError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(Self::unprotected());
        }
        let mut stages = Vec::new();
        for part in s.split(['+', ',']) {
            let (name, width) = match part.split_once(':') {
                Some((n, w)) => (n, Some(w)),
                None => (part, None),
            };
            let kind: StageKind = name.parse()?;
            let width = match (width, kind) {
                (Some(w), _) => {
                    w.trim().parse::<u32>().map_err(|_| GameError::Config(format!("bad width `{w}` for {}", kind.token())))?
                }
                (None, StageKind::Canary) => DEFAULT_CANARY_WIDTH,
                (None, _) => {
                    return Err(GameError::Config(format!("{} needs an explicit key width", kind.token())));
                }
            };
            stages.push(Stage { kind, width });
        }
        Self::new(stages)
    }
}

impl Serialize for CountermeasureSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CountermeasureSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
