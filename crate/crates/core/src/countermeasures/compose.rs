use crate::countermeasures::overwrite::ow_preserves;
use crate::countermeasures::spec::{CountermeasureSpec, StageKind};
use crate::error::GameError;
use crate::game::{AttackInput, Game, KeyId, KeyMaterial, KeySlot, Observation, ProgramModel};
use crate::mixing::mask;
use crate::permutation::AddressLayout;

/// Little-endian bytes of a `width`-bit canary.
pub fn canary_bytes(value: u64, width: u32) -> Vec<u8> {
    let len = width.div_ceil(8) as usize;
    value.to_le_bytes()[..len].to_vec()
}

/// A program protected by a stack of countermeasures.
///
/// Stages are checked in order: canary integrity (with partial-overwrite
/// semantics), PointGuard decryption of the return address, membership of
/// the resulting address in the (possibly randomized) valid set, then ISR
/// decryption of the injected code word. The first failing stage crashes.
#[derive(Clone, Debug)]
pub struct ProtectedGame {
    prog: ProgramModel,
    spec: CountermeasureSpec,
    canary: Option<u32>,
    pointguard: bool,
    aslr: bool,
    isr: bool,
}

impl ProtectedGame {
    pub fn new(prog: ProgramModel, spec: CountermeasureSpec) -> Result<Self, GameError> {
        spec.check_program(&prog)?;
        Ok(Self {
            canary: spec.stage(StageKind::Canary).map(|s| s.width),
            pointguard: spec.has(StageKind::PointGuard),
            aslr: spec.has(StageKind::Aslr),
            isr: spec.has(StageKind::Isr),
            prog,
            spec,
        })
    }

    pub fn spec(&self) -> &CountermeasureSpec {
        &self.spec
    }

    fn check_word(value: u64, width: u32) -> Result<u64, GameError> {
        if value > mask(width) {
            return Err(GameError::Domain { value, width });
        }
        Ok(value)
    }
}

/// Builds the single game for a spec.
pub fn compose(prog: ProgramModel, spec: CountermeasureSpec) -> Result<ProtectedGame, GameError> {
    ProtectedGame::new(prog, spec)
}

impl Game for ProtectedGame {
    fn program(&self) -> &ProgramModel {
        &self.prog
    }

    fn key_schema(&self) -> Vec<KeySlot> {
        self.spec.key_schema()
    }

    fn evaluate(&self, input: &AttackInput, keys: &KeyMaterial) -> Result<Observation, GameError> {
        input.check_shape()?;
        let o = match input {
            AttackInput::Legal(d) => return Ok(Observation::Normal(self.prog.legal_output(d))),
            AttackInput::Overflow(o) => o,
        };
        let n = self.prog.addr_width();

        if let Some(width) = self.canary {
            let key = keys.get(KeyId::Canary)?.to_le_bytes();
            let k = &key[..width.div_ceil(8) as usize];
            let ca = o.canary_bytes();
            if o.ra.is_some() && ca.len() != k.len() {
                return Err(GameError::Contiguity("return address written past a partially written canary"));
            }
            if !ow_preserves(k, ca)? {
                return Ok(Observation::Crash);
            }
            if o.ra.is_none() {
                return Ok(Observation::Normal(self.prog.legal_output(&o.fill)));
            }
        }

        let Some(ra) = o.ra else {
            return Ok(Observation::Crash);
        };
        let written = Self::check_word(ra, n)?;
        let mut ra = written;

        if self.pointguard {
            ra ^= keys.get(KeyId::PointGuard)?;
        }

        let member = if self.aslr {
            let layout = AddressLayout::new(n, keys.get(KeyId::AslrLayout)?, keys.get(KeyId::AslrSlide)?)?;
            self.prog.is_valid(layout.inverse(ra)?)
        } else {
            self.prog.is_valid(ra)
        };
        if !member {
            return Ok(Observation::Crash);
        }

        if self.isr {
            let Some(code) = o.code else {
                return Ok(Observation::Crash);
            };
            let code = Self::check_word(code, self.prog.instr_width())?;
            if !self.prog.is_instruction(code ^ keys.get(KeyId::Isr)?) {
                return Ok(Observation::Crash);
            }
        } else if let Some(code) = o.code {
            Self::check_word(code, self.prog.instr_width())?;
        }

        Ok(Observation::Exploited(written))
    }
}

fn single(prog: &ProgramModel, kind: StageKind, width: u32) -> Result<ProtectedGame, GameError> {
    ProtectedGame::new(prog.clone(), CountermeasureSpec::new(vec![crate::countermeasures::Stage { kind, width }])?)
}

/// Canary of `width` bits in front of the return address.
pub fn canary_game(input: &AttackInput, prog: &ProgramModel, width: u32, keys: &KeyMaterial) -> Result<Observation, GameError> {
    single(prog, StageKind::Canary, width)?.evaluate(input, keys)
}

pub fn aslr_game(input: &AttackInput, prog: &ProgramModel, keys: &KeyMaterial) -> Result<Observation, GameError> {
    single(prog, StageKind::Aslr, prog.addr_width())?.evaluate(input, keys)
}

pub fn pointguard_game(input: &AttackInput, prog: &ProgramModel, keys: &KeyMaterial) -> Result<Observation, GameError> {
    single(prog, StageKind::PointGuard, prog.addr_width())?.evaluate(input, keys)
}

pub fn isr_game(input: &AttackInput, prog: &ProgramModel, keys: &KeyMaterial) -> Result<Observation, GameError> {
    single(prog, StageKind::Isr, prog.instr_width())?.evaluate(input, keys)
}
