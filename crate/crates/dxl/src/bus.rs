//! Request/response transactions over a [`Transport`].

use std::time::{Duration, Instant};

use crate::decoder::FrameDecoder;
use crate::error::{BusError, TransportError};
use crate::packet::{InstructionPacket, Packet, StatusPacket, BROADCAST_ID};
use crate::sync::{self, SyncReadCollector, SyncReadResult};
use crate::transport::Transport;

#[derive(Debug, Clone, Copy)]
pub struct BusOptions {
    /// How long to wait for replies to one request.
    pub timeout: Duration,
    /// Extra attempts after the first.
    pub retries: u32,
}

impl Default for BusOptions {
    fn default() -> Self {
        BusOptions { timeout: Duration::from_millis(20), retries: 2 }
    }
}

pub struct DynamixelBus<T> {
    transport: T,
    decoder: FrameDecoder,
    options: BusOptions,
    frame_errors: u64,
}

impl<T: Transport> DynamixelBus<T> {
    pub fn new(transport: T, options: BusOptions) -> Self {
        DynamixelBus { transport, decoder: FrameDecoder::new(), options, frame_errors: 0 }
    }

    pub fn options(&self) -> BusOptions {
        self.options
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    /// Corrupt frames dropped so far.
    pub fn frame_errors(&self) -> u64 {
        self.frame_errors
    }

    fn send(&mut self, packet: &InstructionPacket) -> Result<(), BusError> {
        let frame = packet.encode()?;
        self.transport.clear_input()?;
        self.decoder.clear();
        self.transport.write_all(&frame)?;
        Ok(())
    }

    /// Feeds received packets to `accept` until it reports completion or
    /// the timeout elapses. Returns whether it completed.
    fn collect(&mut self, mut accept: impl FnMut(&Packet) -> bool) -> Result<bool, BusError> {
        let deadline = Instant::now() + self.options.timeout;
        let mut buf = [0u8; 512];
        loop {
            loop {
                match self.decoder.next_packet() {
                    Ok(Some(p)) => {
                        if accept(&p) {
                            return Ok(true);
                        }
                    }
                    Ok(None) => break,
                    Err(_) => self.frame_errors += 1,
                }
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(false);
            }
            let n = self.transport.read(&mut buf, deadline - now)?;
            if n == 0 {
                return Ok(false);
            }
            self.decoder.push(&buf[..n]);
        }
    }

    fn transact_one(&mut self, packet: &InstructionPacket) -> Result<StatusPacket, BusError> {
        let id = packet.id;
        for _ in 0..=self.options.retries {
            self.send(packet)?;
            let mut reply = None;
            let done = self.collect(|p| match p {
                Packet::Status(s) if s.id == id => {
                    reply = Some(s.clone());
                    true
                }
                _ => false,
            })?;
            if done {
                let s = reply.expect("completed with a reply");
                if s.error & 0x7F != 0 {
                    return Err(BusError::Servo { id, code: s.error });
                }
                return Ok(s);
            }
        }
        Err(TransportError::Timeout { retries: self.options.retries }.into())
    }

    pub fn ping(&mut self, id: u8) -> Result<StatusPacket, BusError> {
        self.transact_one(&InstructionPacket::ping(id))
    }

    pub fn read(&mut self, id: u8, address: u16, len: u16) -> Result<Vec<u8>, BusError> {
        let s = self.transact_one(&InstructionPacket::read(id, address, len))?;
        if s.params.len() != len as usize {
            return Err(BusError::UnexpectedReply(id));
        }
        Ok(s.params)
    }

    pub fn write(&mut self, id: u8, address: u16, data: &[u8]) -> Result<(), BusError> {
        let p = InstructionPacket::write(id, address, data);
        if id == BROADCAST_ID {
            return self.send(&p);
        }
        self.transact_one(&p).map(|_| ())
    }

    /// One broadcast frame, no replies.
    pub fn sync_write(
        &mut self,
        address: u16,
        len: u16,
        entries: &[(u8, Vec<u8>)],
    ) -> Result<(), BusError> {
        let p = sync::sync_write(address, len, entries)?;
        self.send(&p)
    }

    /// Reads one register block from every id. Ids still silent after all
    /// retries are reported in `missing`; if nobody answers at all the bus is
    /// considered down.
    pub fn sync_read(
        &mut self,
        address: u16,
        len: u16,
        ids: &[u8],
    ) -> Result<SyncReadResult, BusError> {
        let p = sync::sync_read(address, len, ids)?;
        let mut last = None;
        for _ in 0..=self.options.retries {
            self.send(&p)?;
            let mut collector = SyncReadCollector::new(ids, len);
            self.collect(|packet| {
                collector.offer(packet);
                collector.is_complete()
            })?;
            let result = collector.finish();
            if result.is_complete() {
                return Ok(result);
            }
            last = Some(result);
        }
        let result = last.expect("at least one attempt");
        if result.values.is_empty() {
            return Err(TransportError::Timeout { retries: self.options.retries }.into());
        }
        Ok(result)
    }
}
