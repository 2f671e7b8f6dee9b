//! Server side of the websocket framing, enough for browser clients: text
//! and binary data frames, fragmentation, ping/pong and close.

use std::io::{self, Read, Write};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use sha1::{Digest, Sha1};

const ACCEPT_GUID: &str = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
/// Largest accepted message, bytes.
pub const MAX_MESSAGE: usize = 1 << 20;

pub fn accept_key(client_key: &str) -> String {
    let mut hasher = Sha1::new();
    hasher.update(client_key.trim().as_bytes());
    hasher.update(ACCEPT_GUID.as_bytes());
    STANDARD.encode(hasher.finalize())
}

pub fn handshake_response(client_key: &str) -> String {
    format!(
        "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: {}\r\n\r\n",
        accept_key(client_key)
    )
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Incoming {
    /// A complete data message; binary payloads are passed through as bytes.
    Data(Vec<u8>),
    Ping(Vec<u8>),
    Pong,
    Close,
}

const OP_CONTINUATION: u8 = 0x0;
const OP_TEXT: u8 = 0x1;
const OP_BINARY: u8 = 0x2;
const OP_CLOSE: u8 = 0x8;
const OP_PING: u8 = 0x9;
const OP_PONG: u8 = 0xA;

fn invalid(message: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, message.to_string())
}

struct Frame {
    fin: bool,
    opcode: u8,
    payload: Vec<u8>,
}

fn read_frame(reader: &mut impl Read) -> io::Result<Frame> {
    let mut head = [0u8; 2];
    reader.read_exact(&mut head)?;
    let fin = head[0] & 0x80 != 0;
    let opcode = head[0] & 0x0F;
    if head[0] & 0x70 != 0 {
        return Err(invalid("reserved bits set"));
    }
    if head[1] & 0x80 == 0 {
        return Err(invalid("client frames must be masked"));
    }
    let len = match head[1] & 0x7F {
        126 => {
            let mut b = [0u8; 2];
            reader.read_exact(&mut b)?;
            u16::from_be_bytes(b) as u64
        }
        127 => {
            let mut b = [0u8; 8];
            reader.read_exact(&mut b)?;
            u64::from_be_bytes(b)
        }
        n => n as u64,
    };
    if len > MAX_MESSAGE as u64 {
        return Err(invalid("frame too large"));
    }
    let mut mask = [0u8; 4];
    reader.read_exact(&mut mask)?;
    let mut payload = vec![0u8; len as usize];
    reader.read_exact(&mut payload)?;
    for (i, b) in payload.iter_mut().enumerate() {
        *b ^= mask[i % 4];
    }
    Ok(Frame { fin, opcode, payload })
}

/// Reads frames until one complete message or control frame is available.
pub fn read_message(reader: &mut impl Read) -> io::Result<Incoming> {
    let mut message: Option<Vec<u8>> = None;
    loop {
        let frame = read_frame(reader)?;
        match frame.opcode {
            OP_PING => return Ok(Incoming::Ping(frame.payload)),
            OP_PONG => return Ok(Incoming::Pong),
            OP_CLOSE => return Ok(Incoming::Close),
            OP_TEXT | OP_BINARY if message.is_none() => message = Some(frame.payload),
            OP_CONTINUATION if message.is_some() => {
                let buf = message.as_mut().expect("fragment in progress");
                if buf.len() + frame.payload.len() > MAX_MESSAGE {
                    return Err(invalid("message too large"));
                }
                buf.extend_from_slice(&frame.payload);
            }
            _ => return Err(invalid("unexpected opcode")),
        }
        if frame.fin {
            return Ok(Incoming::Data(message.take().expect("data frame seen")));
        }
    }
}

fn write_frame(writer: &mut impl Write, opcode: u8, payload: &[u8]) -> io::Result<()> {
    let mut head = Vec::with_capacity(10);
    head.push(0x80 | opcode);
    match payload.len() {
        n if n < 126 => head.push(n as u8),
        n if n <= u16::MAX as usize => {
            head.push(126);
            head.extend_from_slice(&(n as u16).to_be_bytes());
        }
        n => {
            head.push(127);
            head.extend_from_slice(&(n as u64).to_be_bytes());
        }
    }
    writer.write_all(&head)?;
    writer.write_all(payload)?;
    writer.flush()
}

pub fn write_text(writer: &mut impl Write, text: &str) -> io::Result<()> {
    write_frame(writer, OP_TEXT, text.as_bytes())
}

pub fn write_pong(writer: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    write_frame(writer, OP_PONG, payload)
}

pub fn write_close(writer: &mut impl Write) -> io::Result<()> {
    write_frame(writer, OP_CLOSE, &[])
}

/// Client-side text frame (masked), for tests and tools.
pub fn encode_client_text(text: &str, mask: [u8; 4]) -> Vec<u8> {
    let payload = text.as_bytes();
    let mut out = vec![0x80 | OP_TEXT];
    match payload.len() {
        n if n < 126 => out.push(0x80 | n as u8),
        n if n <= u16::MAX as usize => {
            out.push(0x80 | 126);
            out.extend_from_slice(&(n as u16).to_be_bytes());
        }
        n => {
            out.push(0x80 | 127);
            out.extend_from_slice(&(n as u64).to_be_bytes());
        }
    }
    out.extend_from_slice(&mask);
    out.extend(payload.iter().enumerate().map(|(i, b)| b ^ mask[i % 4]));
    out
}

/// Reads one unmasked server frame: `(opcode, payload)`.
pub fn read_server_frame(reader: &mut impl Read) -> io::Result<(u8, Vec<u8>)> {
    let mut head = [0u8; 2];
    reader.read_exact(&mut head)?;
    let len = match head[1] & 0x7F {
        126 => {
            let mut b = [0u8; 2];
            reader.read_exact(&mut b)?;
            u16::from_be_bytes(b) as usize
        }
        127 => {
            let mut b = [0u8; 8];
            reader.read_exact(&mut b)?;
            u64::from_be_bytes(b) as usize
        }
        n => n as usize,
    };
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload)?;
    Ok((head[0] & 0x0F, payload))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accept_key_matches_the_protocol_example() {
        assert_eq!(accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
    }

    #[test]
    fn masked_text_round_trips() {
        for len in [0, 5, 125, 126, 300, 70_000] {
            let text = "x".repeat(len);
            let bytes = encode_client_text(&text, [1, 2, 3, 4]);
            assert_eq!(read_message(&mut bytes.as_slice()).unwrap(), Incoming::Data(text.into_bytes()));
        }
    }

    #[test]
    fn fragments_are_joined() {
        let mut first = encode_client_text("ab", [9, 9, 9, 9]);
        first[0] &= 0x7F;
        let mut second = encode_client_text("cd", [7, 7, 7, 7]);
        second[0] = 0x80 | OP_CONTINUATION;
        first.extend(second);
        assert_eq!(read_message(&mut first.as_slice()).unwrap(), Incoming::Data(b"abcd".to_vec()));
    }

    #[test]
    fn unmasked_client_frame_is_rejected() {
        let mut bytes = encode_client_text("a", [0; 4]);
        bytes[1] &= 0x7F;
        assert!(read_message(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn server_frames_parse() {
        let mut buf = Vec::new();
        write_text(&mut buf, "hello").unwrap();
        assert_eq!(read_server_frame(&mut buf.as_slice()).unwrap(), (OP_TEXT, b"hello".to_vec()));
    }
}
