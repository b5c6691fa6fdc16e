//! Streaming frame decoder.
//!
//! Bytes arrive in arbitrary fragments. The decoder buffers them, hunts for
//! the header, validates length and CRC and hands out whole packets. On any
//! error the first header byte of the bad candidate is dropped and the scan
//! restarts, so a valid frame following garbage is always recovered.

use crate::crc::crc16;
use crate::error::FrameError;
use crate::packet::{
    valid_instruction_id, Instruction, InstructionPacket, Packet, StatusPacket, HEADER, MAX_ID,
    PREFIX_LEN, STATUS_INSTRUCTION,
};
use crate::stuffing::unstuff;

/// Largest length field accepted by default.
pub const DEFAULT_MAX_LENGTH: u16 = 4096;

#[derive(Debug, Clone)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    max_length: u16,
    discarded: usize,
}

impl Default for FrameDecoder {
    fn default() -> Self {
        Self::new()
    }
}

fn find_header(buf: &[u8], from: usize) -> Option<usize> {
    if buf.len() < from + HEADER.len() {
        return None;
    }
    buf[from..]
        .windows(HEADER.len())
        .position(|w| w == HEADER)
        .map(|p| p + from)
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::with_max_length(DEFAULT_MAX_LENGTH)
    }

    pub fn with_max_length(max_length: u16) -> Self {
        FrameDecoder { buf: Vec::new(), max_length, discarded: 0 }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes currently buffered and not yet consumed.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Total bytes thrown away while resynchronizing.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    pub fn clear(&mut self) {
        self.discarded += self.buf.len();
        self.buf.clear();
    }

    fn drop_front(&mut self, n: usize) {
        self.discarded += n;
        self.buf.drain(..n);
    }

    fn complete_frame_at(&self, at: usize) -> bool {
        let buf = &self.buf[at..];
        if buf.len() < PREFIX_LEN {
            return false;
        }
        let length = u16::from_le_bytes([buf[5], buf[6]]);
        let total = PREFIX_LEN + length as usize;
        if length < 3 || length > self.max_length || buf.len() < total {
            return false;
        }
        u16::from_le_bytes([buf[total - 2], buf[total - 1]]) == crc16(&buf[..total - 2])
    }

    /// Returns the next complete packet, `Ok(None)` when more bytes are
    /// needed, or the error that caused a candidate frame to be dropped.
    pub fn next_packet(&mut self) -> Result<Option<Packet>, FrameError> {
        let Some(start) = find_header(&self.buf, 0) else {
            // Keep a possible partial header at the tail.
            let keep = self.buf.len().min(HEADER.len() - 1);
            let cut = self.buf.len() - keep;
            if cut > 0 {
                self.drop_front(cut);
            }
            return Ok(None);
        };
        if start > 0 {
            self.drop_front(start);
        }
        if self.buf.len() < PREFIX_LEN {
            return Ok(None);
        }
        let length = u16::from_le_bytes([self.buf[5], self.buf[6]]);
        if length < 3 || length > self.max_length {
            self.drop_front(1);
            return Err(FrameError::BadLength(length));
        }
        let total = PREFIX_LEN + length as usize;
        if self.buf.len() < total {
            // Header bytes can occur inside a frame (only params are
            // stuffed), so give up on this candidate only once a later
            // header starts a whole frame with a good CRC.
            let mut from = 1;
            while let Some(next) = find_header(&self.buf, from) {
                if self.complete_frame_at(next) {
                    self.drop_front(next);
                    return Err(FrameError::Truncated);
                }
                from = next + 1;
            }
            return Ok(None);
        }
        let received = u16::from_le_bytes([self.buf[total - 2], self.buf[total - 1]]);
        let computed = crc16(&self.buf[..total - 2]);
        if received != computed {
            self.drop_front(1);
            return Err(FrameError::Checksum { received, computed });
        }
        let frame: Vec<u8> = self.buf.drain(..total).collect();
        match parse_frame(&frame) {
            Ok(p) => Ok(Some(p)),
            Err(e) => Err(e),
        }
    }

    /// Drains every packet currently decodable, collecting errors alongside.
    pub fn drain(&mut self) -> (Vec<Packet>, Vec<FrameError>) {
        let mut packets = Vec::new();
        let mut errors = Vec::new();
        loop {
            match self.next_packet() {
                Ok(Some(p)) => packets.push(p),
                Ok(None) => break,
                Err(e) => errors.push(e),
            }
        }
        (packets, errors)
    }
}

/// Parses one complete, CRC-checked frame.
fn parse_frame(frame: &[u8]) -> Result<Packet, FrameError> {
    let id = frame[4];
    let body = &frame[PREFIX_LEN..frame.len() - 2];
    let inst = body[0];
    if inst == STATUS_INSTRUCTION {
        if body.len() < 2 {
            return Err(FrameError::BadLength((body.len() + 2) as u16));
        }
        if id > MAX_ID {
            return Err(FrameError::InvalidId(id));
        }
        let params = unstuff(&body[2..])?;
        Ok(Packet::Status(StatusPacket { id, error: body[1], params }))
    } else {
        if !valid_instruction_id(id) {
            return Err(FrameError::InvalidId(id));
        }
        let instruction = Instruction::try_from(inst)?;
        let params = unstuff(&body[1..])?;
        Ok(Packet::Instruction(InstructionPacket { id, instruction, params }))
    }
}

/// Whole-buffer convenience: decodes exactly one frame.
pub fn decode(frame: &[u8]) -> Result<Option<Packet>, FrameError> {
    let mut d = FrameDecoder::new();
    d.push(frame);
    d.next_packet()
}
