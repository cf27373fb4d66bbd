//! Stacking countermeasures: one game evaluation per query, in process.
use std::sync::Arc;

use mitigation_games::game::{AttackInput, KeyId, KeyPolicy, Overflow};
use mitigation_games::session::{GameSession, Oracle};
use mitigation_games::{compose, ProgramModel};

fn main() {
    let prog = ProgramModel::with_sizes(16, 16, 1 << 8, 1 << 8).unwrap();
    let target = prog.known_valid();
    let shell = prog.isa_set().min().unwrap();
    let game = Arc::new(compose(prog, "canary:16+pointguard:16+isr:16".parse().unwrap()).unwrap());
    let mut s = GameSession::new(game, KeyPolicy::Fixed, 7);
    let (c, pg, isr) =
        (s.keys().get(KeyId::Canary).unwrap(), s.keys().get(KeyId::PointGuard).unwrap(), s.keys().get(KeyId::Isr).unwrap());
    let overflow = |canary: u64, ra: u64, code: u64| {
        AttackInput::Overflow(Overflow {
            fill: vec![],
            canary: Some(canary.to_le_bytes()[..2].to_vec()),
            ra: Some(ra),
            code: Some(code),
        })
    };
    println!("legal input      -> {:?}", s.query(&AttackInput::Legal(b"hi".to_vec())).unwrap());
    println!("blind overflow   -> {:?}", s.query(&overflow(0, target, shell)).unwrap());
    println!("all keys known   -> {:?}", s.query(&overflow(c, target ^ pg, shell ^ isr)).unwrap());
}
