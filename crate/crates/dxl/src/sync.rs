//! Group transactions over a daisy chain: one broadcast frame addresses
//! every listed servo.

use std::collections::BTreeSet;

use crate::error::UsageError;
use crate::packet::{Instruction, InstructionPacket, Packet, StatusPacket, BROADCAST_ID};

fn check_ids(ids: impl IntoIterator<Item = u8>) -> Result<(), UsageError> {
    let mut seen = BTreeSet::new();
    let mut any = false;
    for id in ids {
        any = true;
        if !seen.insert(id) {
            return Err(UsageError::DuplicateId(id));
        }
    }
    if any {
        Ok(())
    } else {
        Err(UsageError::NoIds)
    }
}

fn address_block(address: u16, len: u16) -> Vec<u8> {
    let mut params = address.to_le_bytes().to_vec();
    params.extend_from_slice(&len.to_le_bytes());
    params
}

/// Sync write: `addr(2) len(2)` then `id data[len]` per servo.
pub fn sync_write(
    address: u16,
    len: u16,
    entries: &[(u8, Vec<u8>)],
) -> Result<InstructionPacket, UsageError> {
    check_ids(entries.iter().map(|(id, _)| *id))?;
    let mut params = address_block(address, len);
    params.reserve(entries.len() * (1 + len as usize));
    for (id, data) in entries {
        if data.len() != len as usize {
            return Err(UsageError::DataWidth { id: *id, got: data.len(), expected: len as usize });
        }
        params.push(*id);
        params.extend_from_slice(data);
    }
    Ok(InstructionPacket::new(BROADCAST_ID, Instruction::SyncWrite, params))
}

/// Sync read: `addr(2) len(2)` then the ids, one byte each.
pub fn sync_read(address: u16, len: u16, ids: &[u8]) -> Result<InstructionPacket, UsageError> {
    check_ids(ids.iter().copied())?;
    let mut params = address_block(address, len);
    params.extend_from_slice(ids);
    Ok(InstructionPacket::new(BROADCAST_ID, Instruction::SyncRead, params))
}

/// Outcome of a sync read, in chain order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyncReadResult {
    pub values: Vec<(u8, Vec<u8>)>,
    pub missing: Vec<u8>,
    /// Replies that carried a nonzero error byte: (id, error).
    pub servo_errors: Vec<(u8, u8)>,
}

impl SyncReadResult {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn get(&self, id: u8) -> Option<&[u8]> {
        self.values.iter().find(|(i, _)| *i == id).map(|(_, v)| v.as_slice())
    }
}

/// Collects status replies to a sync read request.
///
/// Servos answer in the order of the request. A reply from an id that was
/// not asked for, a duplicate, or one of the wrong width is ignored.
#[derive(Debug, Clone)]
pub struct SyncReadCollector {
    ids: Vec<u8>,
    len: usize,
    received: Vec<Option<StatusPacket>>,
}

impl SyncReadCollector {
    pub fn new(ids: &[u8], len: u16) -> Self {
        SyncReadCollector { ids: ids.to_vec(), len: len as usize, received: vec![None; ids.len()] }
    }

    /// Offers a decoded packet; returns true if it was accepted.
    pub fn offer(&mut self, packet: &Packet) -> bool {
        let Packet::Status(status) = packet else {
            return false;
        };
        let Some(slot) = self.ids.iter().position(|&id| id == status.id) else {
            return false;
        };
        if self.received[slot].is_some() || status.params.len() != self.len {
            return false;
        }
        self.received[slot] = Some(status.clone());
        true
    }

    pub fn is_complete(&self) -> bool {
        self.received.iter().all(Option::is_some)
    }

    pub fn finish(self) -> SyncReadResult {
        let mut out = SyncReadResult::default();
        for (id, got) in self.ids.into_iter().zip(self.received) {
            match got {
                Some(status) => {
                    if status.error != 0 {
                        out.servo_errors.push((id, status.error));
                    }
                    out.values.push((id, status.params));
                }
                None => out.missing.push(id),
            }
        }
        out
    }
}

/// Demultiplexes a batch of decoded replies.
pub fn parse_sync_read(ids: &[u8], len: u16, replies: &[Packet]) -> SyncReadResult {
    let mut c = SyncReadCollector::new(ids, len);
    for p in replies {
        c.offer(p);
    }
    c.finish()
}
