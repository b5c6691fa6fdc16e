//! Codec and transactions for the daisy-chained smart-servo bus
//! (protocol 2.0 framing).
//!
//! The codec layers ([`crc`], [`stuffing`], [`packet`], [`decoder`],
//! [`sync`]) are pure. [`bus::DynamixelBus`] drives them over any
//! [`transport::Transport`], one outstanding instruction at a time.

pub mod bus;
pub mod control_table;
pub mod crc;
pub mod decoder;
pub mod error;
pub mod mock;
pub mod packet;
pub mod stuffing;
pub mod sync;
pub mod transport;

pub use bus::{BusOptions, DynamixelBus};
pub use control_table::{ControlTable, OperatingMode, Register, RegisterSpec};
pub use crc::crc16;
pub use decoder::{decode, FrameDecoder};
pub use error::{BusError, FrameError, TransportError, UsageError};
pub use packet::{Instruction, InstructionPacket, Packet, StatusPacket, BROADCAST_ID};
pub use stuffing::{stuff, unstuff};
pub use sync::{SyncReadResult, SyncReadCollector};
pub use transport::Transport;
