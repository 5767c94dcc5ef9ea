//! Service wire format.
//!
//! Every message is a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON. Each message carries `"v"` (the protocol version).
//!
//! Client to server, `{"v":1,"id":N,"cmd":...}` with `cmd` one of
//! `place_food {at}`, `move_food {from,to}`, `remove_food {at}`, `pause`,
//! `resume`, `step_once {k}`, `set_speed {steps_per_sec}`,
//! `set_param {name,value}`, `get_log`, `shutdown`.
//!
//! Server to client, tagged by `"type"`:
//! - `snapshot`: full state, sent once when a client connects;
//! - `delta`: cells changed since the previous frame, `state` null for a
//!   vacated cell and `"F"` for food;
//! - `ack {id, step}` once a command has been applied;
//! - `error {id, message}` for a rejected command (state unchanged);
//! - `log {id, events}` with the session event log so far.

use crate::analysis::MetricsFrame;
use crate::engine::Snapshot;
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    PlaceFood { at: [i32; 2] },
    MoveFood { from: [i32; 2], to: [i32; 2] },
    RemoveFood { at: [i32; 2] },
    Pause,
    Resume,
    StepOnce { k: u64 },
    SetSpeed { steps_per_sec: f64 },
    SetParam { name: String, value: f64 },
    GetLog,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub v: u32,
    pub id: u64,
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellChange {
    pub at: [i32; 2],
    pub state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub step: u64,
    pub changes: Vec<CellChange>,
    pub metrics: MetricsFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Snapshot { v: u32, snapshot: Snapshot },
    Delta { v: u32, delta: Delta },
    Ack { v: u32, id: u64, step: u64 },
    Error { v: u32, id: u64, message: String },
    Log { v: u32, id: u64, events: String },
}

impl Message {
    pub fn step(&self) -> Option<u64> {
        match self {
            Message::Snapshot { snapshot, .. } => Some(snapshot.step),
            Message::Delta { delta, .. } => Some(delta.step),
            _ => None,
        }
    }
}

pub fn write_frame<W: Write>(w: &mut W, json: &[u8]) -> io::Result<()> {
    let len = u32::try_from(json.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(json)?;
    w.flush()
}

/// `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn send<W: Write, T: Serialize>(w: &mut W, msg: &T) -> io::Result<()> {
    write_frame(w, &serde_json::to_vec(msg).map_err(io::Error::other)?)
}

pub fn recv<R: Read, T: for<'de> Deserialize<'de>>(r: &mut R) -> io::Result<Option<T>> {
    match read_frame(r)? {
        None => Ok(None),
        Some(buf) => serde_json::from_slice(&buf)
            .map(Some)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
    }
}
