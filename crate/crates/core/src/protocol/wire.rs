use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{EpisodeEnd, EpisodeStart, ProtocolError};
use crate::acoustics::Spectrogram;
use crate::engine::{Decision, Observation};
use crate::gridmap::RangeScan;

pub const PROTOCOL_VERSION: u32 = 1;

/// Row-major little-endian `f32` tensor, base64 encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub dtype: String,
    pub data: String,
}

impl Tensor {
    pub fn from_f32(dims: Vec<usize>, values: &[f32]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            dims,
            dtype: "f32le".into(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn to_f32(&self) -> Result<Vec<f32>, ProtocolError> {
        if self.dtype != "f32le" {
            return Err(ProtocolError::Malformed(format!("unsupported dtype {:?}", self.dtype)));
        }
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| ProtocolError::Malformed(format!("tensor payload: {e}")))?;
        let n: usize = self.dims.iter().product();
        if bytes.len() != n * 4 {
            return Err(ProtocolError::TensorSize {
                dims: self.dims.clone(),
                bytes: bytes.len(),
            });
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireObservation {
    pub spectrogram: Tensor,
    pub sample_rate: u32,
    pub scan: RangeScan,
    pub collided: bool,
    pub step_index: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intermediate: Vec<WireObservation>,
}

pub fn encode_observation(obs: &Observation, intermediate: &[Observation]) -> WireObservation {
    let s = &obs.spectrogram;
    let (f, t, c) = s.shape();
    WireObservation {
        spectrogram: Tensor::from_f32(vec![f, t, c], &s.values),
        sample_rate: s.sample_rate,
        scan: obs.scan.clone(),
        collided: obs.collided,
        step_index: obs.step_index,
        intermediate: intermediate.iter().map(|o| encode_observation(o, &[])).collect(),
    }
}

/// Inverse of [`encode_observation`]: the observation and its intermediates.
pub fn decode_observation(wire: &WireObservation) -> Result<(Observation, Vec<Observation>), ProtocolError> {
    let values = wire.spectrogram.to_f32()?;
    let [f, t, c] = <[usize; 3]>::try_from(wire.spectrogram.dims.as_slice())
        .map_err(|_| ProtocolError::Malformed(format!("spectrogram dims {:?}", wire.spectrogram.dims)))?;
    if c != Spectrogram::CHANNELS {
        return Err(ProtocolError::Malformed(format!("{c} spectrogram channels")));
    }
    let mut spectrogram = Spectrogram::zeros(f, t, wire.sample_rate);
    spectrogram.values = values;
    let obs = Observation {
        spectrogram,
        scan: wire.scan.clone(),
        collided: wire.collided,
        step_index: wire.step_index,
    };
    let intermediate = wire
        .intermediate
        .iter()
        .map(|w| decode_observation(w).map(|(o, _)| o))
        .collect::<Result<_, _>>()?;
    Ok((obs, intermediate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Message {
    Hello { agent_name: String },
    EpisodeStart(EpisodeStart),
    Observation(WireObservation),
    Action { action: Decision },
    EpisodeEnd(EpisodeEnd),
    Shutdown,
    Error { message: String },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::EpisodeStart(_) => "episode_start",
            Message::Observation(_) => "observation",
            Message::Action { .. } => "action",
            Message::EpisodeEnd(_) => "episode_end",
            Message::Shutdown => "shutdown",
            Message::Error { .. } => "error",
        }
    }
}

/// One line on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub protocol_version: u32,
    #[serde(flatten)]
    pub message: Message,
}

impl Envelope {
    pub fn new(message: Message) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            message,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }

    /// Parses one line, checking the protocol version before the payload.
    pub fn parse(line: &str) -> Result<Message, ProtocolError> {
        #[derive(Deserialize)]
        struct Version {
            protocol_version: Option<u32>,
        }
        let v: Version = serde_json::from_str(line).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        match v.protocol_version {
            Some(PROTOCOL_VERSION) => {}
            Some(found) => {
                return Err(ProtocolError::VersionMismatch {
                    expected: PROTOCOL_VERSION,
                    found,
                })
            }
            None => return Err(ProtocolError::Malformed("missing protocol_version".into())),
        }
        let env: Envelope = serde_json::from_str(line).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        Ok(env.message)
    }
}
