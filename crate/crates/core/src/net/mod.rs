//! Remote oracle: a TCP server that exposes a protected program one
//! request at a time, and a blocking client that attackers can use in place
//! of an in-process session.

mod client;
mod server;
pub mod wire;

pub use client::RemoteOracle;
pub use server::{serve, serve_until, spawn_server, ServerHandle, SessionPolicy, DEFAULT_BUDGET};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::OracleError;
    use crate::game::{AttackInput, KeyPolicy, Observation, Overflow};
    use crate::session::Oracle;

    fn policy(spec: &str) -> SessionPolicy {
        SessionPolicy::new(spec.parse().unwrap(), KeyPolicy::Fixed, 7)
    }

    #[test]
    fn legal_round_trip_and_stats() {
        let server = spawn_server("127.0.0.1:0", policy("canary:32")).unwrap();
        let mut c = RemoteOracle::connect(server.addr).unwrap();
        assert_eq!(c.query(&AttackInput::Legal(b"echo".to_vec())).unwrap(), Observation::Normal(b"echo".to_vec()));
        let invalid =
            AttackInput::Overflow(Overflow { fill: vec![], canary: Some(vec![0; 4]), ra: Some(u64::from(u32::MAX)), code: None });
        assert_eq!(c.query(&invalid).unwrap(), Observation::Crash);
        assert_eq!(c.stats().unwrap(), (2, 2, DEFAULT_BUDGET - 2));
        // Stats requests are not queries.
        assert_eq!(c.stats().unwrap().0, 2);
    }

    #[test]
    fn malformed_frames_keep_the_connection() {
        let server = spawn_server("127.0.0.1:0", policy("canary:8")).unwrap();
        let mut c = RemoteOracle::connect(server.addr).unwrap();
        let r = c.send_raw("{not json").unwrap();
        assert!(matches!(r, wire::Response::Error { ref reason, .. } if reason == "malformed_frame"));
        let r = c.send_raw(r#"{"type":"query","input":{"kind":"legal","data":{"len":3,"hex":"00"}}}"#).unwrap();
        assert!(matches!(r, wire::Response::Error { ref reason, .. } if reason == "invalid_input"));
        assert!(c.query(&AttackInput::Legal(vec![])).is_ok());
    }

    #[test]
    fn budget_exhaustion_closes_the_session() {
        let server = spawn_server("127.0.0.1:0", policy("canary:8").with_budget(3)).unwrap();
        let mut c = RemoteOracle::connect(server.addr).unwrap();
        for _ in 0..3 {
            c.query(&AttackInput::Legal(vec![])).unwrap();
        }
        assert!(matches!(c.query(&AttackInput::Legal(vec![])), Err(OracleError::BudgetExhausted)));
        assert!(matches!(c.query(&AttackInput::Legal(vec![])), Err(OracleError::Transport(_))));
    }

    #[test]
    fn connection_loss_is_a_transport_error() {
        let server = spawn_server("127.0.0.1:0", policy("canary:8")).unwrap();
        let mut c = RemoteOracle::connect(server.addr).unwrap();
        server.shutdown().unwrap();
        // The handler task dies with the runtime; the next exchange fails.
        let r = c.query(&AttackInput::Legal(vec![]));
        assert!(matches!(r, Err(OracleError::Transport(_))), "{r:?}");
    }
}
