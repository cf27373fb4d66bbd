use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};

use super::wire::{reason, Request, Response};
use crate::error::OracleError;
use crate::game::{AttackInput, Observation};
use crate::session::Oracle;

/// Blocking client that makes a remote server look like any other oracle.
#[derive(Debug)]
pub struct RemoteOracle {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    session: Option<u64>,
    last_queries_used: u64,
    last_budget_remaining: Option<u64>,
}

impl RemoteOracle {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, OracleError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            session: None,
            last_queries_used: 0,
            last_budget_remaining: None,
        })
    }

    fn round_trip(&mut self, req: &Request) -> Result<Response, OracleError> {
        let mut frame = serde_json::to_string(req).map_err(|e| OracleError::Protocol(e.to_string()))?;
        frame.push('\n');
        self.writer.write_all(frame.as_bytes())?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(OracleError::Transport(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "server closed the connection",
            )));
        }
        let resp: Response = serde_json::from_str(&line).map_err(|e| OracleError::Protocol(format!("{e}: {line}")))?;
        if let Response::Error { reason, detail } = resp {
            return Err(if reason == reason::BUDGET_EXHAUSTED {
                OracleError::BudgetExhausted
            } else {
                OracleError::Remote { reason, detail }
            });
        }
        Ok(resp)
    }

    /// Sends a raw line; for exercising the server's frame handling.
    pub fn send_raw(&mut self, line: &str) -> Result<Response, OracleError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        let mut buf = String::new();
        if self.reader.read_line(&mut buf)? == 0 {
            return Err(OracleError::Transport(std::io::ErrorKind::UnexpectedEof.into()));
        }
        serde_json::from_str(&buf).map_err(|e| OracleError::Protocol(e.to_string()))
    }

    /// `(queries_used, simulated_elapsed_ms, budget_remaining)`.
    pub fn stats(&mut self) -> Result<(u64, u64, u64), OracleError> {
        match self.round_trip(&Request::Stats { session: self.session })? {
            Response::Stats { queries_used, simulated_elapsed_ms, budget_remaining, session } => {
                self.session = Some(session);
                Ok((queries_used, simulated_elapsed_ms, budget_remaining))
            }
            other => Err(OracleError::Protocol(format!("expected stats, got {other:?}"))),
        }
    }

    pub fn session(&self) -> Option<u64> {
        self.session
    }

    pub fn queries_used(&self) -> u64 {
        self.last_queries_used
    }

    pub fn budget_remaining(&self) -> Option<u64> {
        self.last_budget_remaining
    }
}

impl Oracle for RemoteOracle {
    fn query(&mut self, input: &AttackInput) -> Result<Observation, OracleError> {
        let resp = self.round_trip(&Request::Query { session: self.session, input: input.into() })?;
        if let Response::Response { session, queries_used, budget_remaining, .. } = &resp {
            self.session = Some(*session);
            self.last_queries_used = *queries_used;
            self.last_budget_remaining = Some(*budget_remaining);
        }
        resp.to_observation().map_err(OracleError::Protocol)
    }
}
