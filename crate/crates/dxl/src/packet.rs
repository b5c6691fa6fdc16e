//! Instruction and status packets and their wire encoding.
//!
//! Frame layout:
//!
//! ```text
//! FF FF FD 00 | id | len_lo len_hi | instruction | [error] | stuffed params | crc_lo crc_hi
//! ```
//!
//! The length field counts every byte after itself: instruction, error
//! (status packets only), stuffed parameters and the two CRC bytes.

use crate::crc::crc16;
use crate::error::FrameError;
use crate::stuffing::stuff;

pub const HEADER: [u8; 4] = [0xFF, 0xFF, 0xFD, 0x00];
pub const BROADCAST_ID: u8 = 0xFE;
pub const MAX_ID: u8 = 0xFC;
/// Instruction byte that marks a status packet.
pub const STATUS_INSTRUCTION: u8 = 0x55;

/// Header, id and length field.
pub(crate) const PREFIX_LEN: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Instruction {
    Ping = 0x01,
    Read = 0x02,
    Write = 0x03,
    RegWrite = 0x04,
    Action = 0x05,
    FactoryReset = 0x06,
    Reboot = 0x08,
    Clear = 0x10,
    SyncRead = 0x82,
    SyncWrite = 0x83,
    BulkRead = 0x92,
    BulkWrite = 0x93,
}

impl Instruction {
    pub const ALL: [Instruction; 12] = [
        Instruction::Ping,
        Instruction::Read,
        Instruction::Write,
        Instruction::RegWrite,
        Instruction::Action,
        Instruction::FactoryReset,
        Instruction::Reboot,
        Instruction::Clear,
        Instruction::SyncRead,
        Instruction::SyncWrite,
        Instruction::BulkRead,
        Instruction::BulkWrite,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Instruction {
    type Error = FrameError;

    fn try_from(code: u8) -> Result<Self, FrameError> {
        Instruction::ALL
            .iter()
            .copied()
            .find(|i| i.code() == code)
            .ok_or(FrameError::UnknownInstruction(code))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionPacket {
    pub id: u8,
    pub instruction: Instruction,
    pub params: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusPacket {
    pub id: u8,
    pub error: u8,
    pub params: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Instruction(InstructionPacket),
    Status(StatusPacket),
}

pub fn valid_instruction_id(id: u8) -> bool {
    id <= MAX_ID || id == BROADCAST_ID
}

impl InstructionPacket {
    pub fn new(id: u8, instruction: Instruction, params: Vec<u8>) -> Self {
        InstructionPacket { id, instruction, params }
    }

    pub fn ping(id: u8) -> Self {
        Self::new(id, Instruction::Ping, Vec::new())
    }

    pub fn read(id: u8, address: u16, len: u16) -> Self {
        let mut params = address.to_le_bytes().to_vec();
        params.extend_from_slice(&len.to_le_bytes());
        Self::new(id, Instruction::Read, params)
    }

    pub fn write(id: u8, address: u16, data: &[u8]) -> Self {
        let mut params = address.to_le_bytes().to_vec();
        params.extend_from_slice(data);
        Self::new(id, Instruction::Write, params)
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        if !valid_instruction_id(self.id) {
            return Err(FrameError::InvalidId(self.id));
        }
        encode_frame(self.id, &[self.instruction.code()], &self.params)
    }
}

impl StatusPacket {
    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        if self.id > MAX_ID {
            return Err(FrameError::InvalidId(self.id));
        }
        encode_frame(self.id, &[STATUS_INSTRUCTION, self.error], &self.params)
    }
}

impl Packet {
    pub fn id(&self) -> u8 {
        match self {
            Packet::Instruction(p) => p.id,
            Packet::Status(p) => p.id,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, FrameError> {
        match self {
            Packet::Instruction(p) => p.encode(),
            Packet::Status(p) => p.encode(),
        }
    }
}

fn encode_frame(id: u8, lead: &[u8], params: &[u8]) -> Result<Vec<u8>, FrameError> {
    let body = stuff(params);
    let len = lead.len() + body.len() + 2;
    let len16 = u16::try_from(len).map_err(|_| FrameError::TooLong(len))?;
    let mut frame = Vec::with_capacity(PREFIX_LEN + len);
    frame.extend_from_slice(&HEADER);
    frame.push(id);
    frame.extend_from_slice(&len16.to_le_bytes());
    frame.extend_from_slice(lead);
    frame.extend_from_slice(&body);
    let crc = crc16(&frame);
    frame.extend_from_slice(&crc.to_le_bytes());
    Ok(frame)
}
