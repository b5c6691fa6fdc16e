//! Byte stuffing. Any `FF FF FD` inside a packet body is followed by an
//! extra `FD` so that the body never contains the frame header.

use crate::error::FrameError;

const ESCAPE: u8 = 0xFD;

/// Tracks progress through the `FF FF FD` pattern.
#[derive(Default, Clone, Copy)]
struct Matcher(u8);

impl Matcher {
    /// Feeds one byte, returning true when it completes the pattern.
    #[inline]
    fn feed(&mut self, b: u8) -> bool {
        match (self.0, b) {
            (2, 0xFD) => {
                self.0 = 0;
                true
            }
            (n, 0xFF) => {
                self.0 = (n + 1).min(2);
                false
            }
            _ => {
                self.0 = 0;
                false
            }
        }
    }
}

pub fn stuff(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + payload.len() / 3 + 1);
    let mut m = Matcher::default();
    for &b in payload {
        out.push(b);
        if m.feed(b) {
            out.push(ESCAPE);
        }
    }
    out
}

/// Number of escape bytes `stuff` would insert.
pub fn stuffed_len(payload: &[u8]) -> usize {
    let mut m = Matcher::default();
    payload.len() + payload.iter().filter(|&&b| m.feed(b)).count()
}

pub fn unstuff(stuffed: &[u8]) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::with_capacity(stuffed.len());
    let mut m = Matcher::default();
    let mut iter = stuffed.iter().copied();
    while let Some(b) = iter.next() {
        out.push(b);
        if m.feed(b) {
            match iter.next() {
                Some(ESCAPE) => {}
                _ => return Err(FrameError::BadStuffing),
            }
        }
    }
    Ok(out)
}
