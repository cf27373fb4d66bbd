//! Newline-delimited JSON frames. Byte strings travel as `{len, hex}` so
//! partial canary writes keep their exact length; words are 8 little-endian
//! bytes.

use serde::{Deserialize, Serialize};

use crate::game::{AttackInput, Observation, Overflow};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bytes {
    pub len: usize,
    pub hex: String,
}

impl Bytes {
    pub fn encode(data: &[u8]) -> Self {
        Self { len: data.len(), hex: hex::encode(data) }
    }

    pub fn word(v: u64) -> Self {
        Self::encode(&v.to_le_bytes())
    }

    pub fn decode(&self) -> Result<Vec<u8>, String> {
        let data = hex::decode(&self.hex).map_err(|e| format!("bad hex: {e}"))?;
        if data.len() != self.len {
            return Err(format!("declared length {} but {} bytes of hex", self.len, data.len()));
        }
        Ok(data)
    }

    pub fn decode_word(&self) -> Result<u64, String> {
        let data = self.decode()?;
        if data.len() > 8 {
            return Err(format!("word of {} bytes exceeds 8", data.len()));
        }
        let mut buf = [0u8; 8];
        buf[..data.len()].copy_from_slice(&data);
        Ok(u64::from_le_bytes(buf))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WireInput {
    Legal {
        data: Bytes,
    },
    Overflow {
        fill: Bytes,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        canary: Option<Bytes>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ra: Option<Bytes>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        code: Option<Bytes>,
    },
}

impl From<&AttackInput> for WireInput {
    fn from(input: &AttackInput) -> Self {
        match input {
            AttackInput::Legal(d) => WireInput::Legal { data: Bytes::encode(d) },
            AttackInput::Overflow(o) => WireInput::Overflow {
                fill: Bytes::encode(&o.fill),
                canary: o.canary.as_deref().map(Bytes::encode),
                ra: o.ra.map(Bytes::word),
                code: o.code.map(Bytes::word),
            },
        }
    }
}

impl TryFrom<&WireInput> for AttackInput {
    type Error = String;
    fn try_from(w: &WireInput) -> Result<Self, String> {
        Ok(match w {
            WireInput::Legal { data } => AttackInput::Legal(data.decode()?),
            WireInput::Overflow { fill, canary, ra, code } => AttackInput::Overflow(Overflow {
                fill: fill.decode()?,
                canary: canary.as_ref().map(Bytes::decode).transpose()?,
                ra: ra.as_ref().map(Bytes::decode_word).transpose()?,
                code: code.as_ref().map(Bytes::decode_word).transpose()?,
            }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Query {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<u64>,
        input: WireInput,
    },
    Stats {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<u64>,
    },
}

pub mod reason {
    pub const BUDGET_EXHAUSTED: &str = "budget_exhausted";
    pub const MALFORMED_FRAME: &str = "malformed_frame";
    pub const INVALID_INPUT: &str = "invalid_input";
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Response {
        session: u64,
        observation: String,
        output: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        address: Option<Bytes>,
        queries_used: u64,
        budget_remaining: u64,
    },
    Stats {
        session: u64,
        queries_used: u64,
        simulated_elapsed_ms: u64,
        budget_remaining: u64,
    },
    Error {
        reason: String,
        detail: String,
    },
}

impl Response {
    pub fn observation(session: u64, obs: &Observation, queries_used: u64, budget_remaining: u64) -> Self {
        let (output, address) = match obs {
            Observation::Crash => (String::new(), None),
            Observation::Normal(d) => (hex::encode(d), None),
            Observation::Exploited(a) => (String::new(), Some(Bytes::word(*a))),
        };
        Response::Response { session, observation: obs.tag().to_string(), output, address, queries_used, budget_remaining }
    }

    pub fn error(reason: &str, detail: impl Into<String>) -> Self {
        Response::Error { reason: reason.to_string(), detail: detail.into() }
    }

    /// The observation carried by a `response` frame.
    pub fn to_observation(&self) -> Result<Observation, String> {
        let Response::Response { observation, output, address, .. } = self else {
            return Err("not an observation frame".into());
        };
        match observation.as_str() {
            "crash" => Ok(Observation::Crash),
            "normal" => Ok(Observation::Normal(hex::decode(output).map_err(|e| format!("bad output hex: {e}"))?)),
            "exploited" => {
                let a = address.as_ref().ok_or("exploited frame without address")?;
                Ok(Observation::Exploited(a.decode_word()?))
            }
            other => Err(format!("unknown observation `{other}`")),
        }
    }
}
