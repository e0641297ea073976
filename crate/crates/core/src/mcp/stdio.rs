//! Newline-delimited framing for the stdio transport.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::protocol::{failure, RpcError, PARSE_ERROR};
use super::server::McpServer;

/// Largest accepted frame, excluding the newline.
pub const MAX_FRAME_BYTES: usize = 4 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame exceeds {limit} bytes")]
    TooLarge { limit: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct FrameReader<R> {
    inner: R,
    limit: usize,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self::with_limit(inner, MAX_FRAME_BYTES)
    }

    pub fn with_limit(inner: R, limit: usize) -> Self {
        Self { inner, limit }
    }

    /// Next non-empty line without its terminator, or `None` at end of
    /// stream. An oversize line is consumed entirely before the error is
    /// returned so the next call starts at a frame boundary.
    pub fn read_frame(&mut self) -> Result<Option<Vec<u8>>, FrameError> {
        loop {
            let mut frame = Vec::new();
            let mut oversize = false;
            let mut saw_any = false;
            loop {
                let buf = self.inner.fill_buf()?;
                if buf.is_empty() {
                    break;
                }
                saw_any = true;
                let (chunk, done) = match buf.iter().position(|&b| b == b'\n') {
                    Some(i) => (&buf[..i], Some(i + 1)),
                    None => (buf, None),
                };
                if !oversize {
                    if frame.len() + chunk.len() > self.limit {
                        oversize = true;
                        frame = Vec::new();
                    } else {
                        frame.extend_from_slice(chunk);
                    }
                }
                let used = done.unwrap_or(buf.len());
                self.inner.consume(used);
                if done.is_some() {
                    break;
                }
            }
            if oversize {
                return Err(FrameError::TooLarge { limit: self.limit });
            }
            if !saw_any {
                return Ok(None);
            }
            if frame.last() == Some(&b'\r') {
                frame.pop();
            }
            if frame.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            return Ok(Some(frame));
        }
    }
}

/// Writes one message followed by a newline and flushes.
pub fn write_frame<W: Write>(out: &mut W, message: &[u8]) -> std::io::Result<()> {
    out.write_all(message)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Serves requests from `input` until end of stream. Oversize frames are
/// answered with a parse error and skipped.
pub fn serve<R: BufRead, W: Write>(
    server: &McpServer,
    input: R,
    mut output: W,
) -> std::io::Result<()> {
    let mut reader = FrameReader::new(input);
    loop {
        match reader.read_frame() {
            Ok(None) => return Ok(()),
            Ok(Some(frame)) => {
                if let Some(reply) = server.handle_message(&frame) {
                    write_frame(&mut output, &reply)?;
                }
            }
            Err(FrameError::TooLarge { limit }) => {
                let err = failure(
                    serde_json::Value::Null,
                    RpcError::new(PARSE_ERROR, format!("frame exceeds {limit} bytes")),
                );
                write_frame(&mut output, err.to_string().as_bytes())?;
            }
            Err(FrameError::Io(e)) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufReader, Cursor};

    #[test]
    fn two_messages_in_one_buffer() {
        let mut r = FrameReader::new(Cursor::new(b"{\"a\":1}\n{\"b\":2}\n".to_vec()));
        assert_eq!(r.read_frame().unwrap().unwrap(), b"{\"a\":1}");
        assert_eq!(r.read_frame().unwrap().unwrap(), b"{\"b\":2}");
        assert!(r.read_frame().unwrap().is_none());
    }

    #[test]
    fn last_frame_without_newline_and_blank_lines() {
        let mut r = FrameReader::new(Cursor::new(b"\n\r\n{}\r\n[]".to_vec()));
        assert_eq!(r.read_frame().unwrap().unwrap(), b"{}");
        assert_eq!(r.read_frame().unwrap().unwrap(), b"[]");
        assert!(r.read_frame().unwrap().is_none());
    }

    #[test]
    fn oversize_then_recovers() {
        let mut data = vec![b'x'; 5 * 1024 * 1024];
        data.extend_from_slice(b"\n{}\n");
        // Small internal buffer to exercise chunked reads.
        let mut r = FrameReader::new(BufReader::with_capacity(4096, Cursor::new(data)));
        assert!(matches!(r.read_frame(), Err(FrameError::TooLarge { .. })));
        assert_eq!(r.read_frame().unwrap().unwrap(), b"{}");
    }

    #[test]
    fn frame_at_limit_is_accepted() {
        let mut data = vec![b'x'; 16];
        data.push(b'\n');
        let mut r = FrameReader::with_limit(Cursor::new(data), 16);
        assert_eq!(r.read_frame().unwrap().unwrap().len(), 16);
    }
}
