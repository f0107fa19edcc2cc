//! Length-prefixed JSON framing: a 4-byte big-endian length followed by the
//! UTF-8 JSON encoding of one [`Envelope`].

use std::io::{self, Read, Write};

use super::{CommError, Envelope};

pub const MAX_FRAME: usize = 16 * 1024 * 1024;

pub fn encode(env: &Envelope) -> Vec<u8> {
    let body = serde_json::to_vec(env).expect("envelope serializes");
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Decodes one frame from the front of `buf`, returning the envelope and
/// the number of bytes consumed. `Ok(None)` means more bytes are needed.
pub fn decode(buf: &[u8]) -> Result<Option<(Envelope, usize)>, CommError> {
    if buf.len() < 4 {
        return Ok(None);
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if len > MAX_FRAME {
        return Err(CommError::FrameTooLarge(len));
    }
    if buf.len() < 4 + len {
        return Ok(None);
    }
    let env = serde_json::from_slice(&buf[4..4 + len]).map_err(|e| CommError::MalformedPayload(e.to_string()))?;
    Ok(Some((env, 4 + len)))
}

pub fn write_frame<W: Write>(w: &mut W, env: &Envelope) -> io::Result<()> {
    w.write_all(&encode(env))?;
    w.flush()
}

/// Reads one frame. Returns `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Envelope>, CommError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(CommError::Transport(e.to_string())),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(CommError::FrameTooLarge(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| CommError::Transport(e.to_string()))?;
    serde_json::from_slice(&body).map(Some).map_err(|e| CommError::MalformedPayload(e.to_string()))
}
