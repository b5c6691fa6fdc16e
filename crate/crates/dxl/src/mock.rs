//! In-memory servo chain for testing without hardware.
//!
//! [`MockServoBus`] is a [`Transport`] that parses instruction frames,
//! applies them to virtual register files and queues status replies. An
//! optional motion hook runs after every sync write so tests can give the
//! servos simple dynamics.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use crate::control_table::{ControlTable, Register};
use crate::decoder::FrameDecoder;
use crate::error::TransportError;
use crate::packet::{Instruction, InstructionPacket, Packet, StatusPacket, BROADCAST_ID};
use crate::transport::Transport;

const REGISTER_SPACE: usize = 256;
const ERR_INSTRUCTION: u8 = 0x02;
const ERR_ACCESS: u8 = 0x07;

#[derive(Debug, Clone)]
pub struct VirtualServo {
    pub registers: Vec<u8>,
}

impl VirtualServo {
    fn new(table: &ControlTable) -> Self {
        let mut s = VirtualServo { registers: vec![0; REGISTER_SPACE] };
        for reg in [Register::PresentPosition, Register::GoalPosition] {
            if let Ok(spec) = table.register(reg) {
                let bytes = spec.encode(0.0);
                s.write(spec.address, &bytes);
            }
        }
        s
    }

    pub fn read(&self, address: u16, len: u16) -> Option<&[u8]> {
        let a = address as usize;
        self.registers.get(a..a + len as usize)
    }

    pub fn write(&mut self, address: u16, data: &[u8]) -> bool {
        let a = address as usize;
        match self.registers.get_mut(a..a + data.len()) {
            Some(slot) => {
                slot.copy_from_slice(data);
                true
            }
            None => false,
        }
    }

    pub fn get(&self, table: &ControlTable, reg: Register) -> f64 {
        let spec = table.register(reg).expect("register in table");
        spec.decode(self.read(spec.address, u16::from(spec.width)).expect("in range"))
    }

    pub fn get_raw(&self, table: &ControlTable, reg: Register) -> i64 {
        let spec = table.register(reg).expect("register in table");
        spec.decode_raw(self.read(spec.address, u16::from(spec.width)).expect("in range"))
    }

    pub fn set(&mut self, table: &ControlTable, reg: Register, value: f64) {
        let spec = table.register(reg).expect("register in table");
        self.write(spec.address, &spec.encode(value));
    }
}

pub type MotionHook = Box<dyn FnMut(&ControlTable, &mut BTreeMap<u8, VirtualServo>) + Send>;

pub struct MockState {
    pub table: ControlTable,
    pub servos: BTreeMap<u8, VirtualServo>,
    /// Ids that never answer.
    pub silent: BTreeSet<u8>,
    pub connected: bool,
    /// Largest chunk handed out per `read` call.
    pub max_chunk: usize,
    pub instructions_seen: Vec<Instruction>,
    motion: Option<MotionHook>,
    outbox: VecDeque<u8>,
    decoder: FrameDecoder,
}

#[derive(Clone)]
pub struct MockServoBus {
    state: Arc<Mutex<MockState>>,
}

impl MockServoBus {
    pub fn new(ids: &[u8]) -> Self {
        Self::with_table(ids, ControlTable::default_profile())
    }

    pub fn with_table(ids: &[u8], table: ControlTable) -> Self {
        let servos = ids.iter().map(|&id| (id, VirtualServo::new(&table))).collect();
        let state = MockState {
            table,
            servos,
            silent: BTreeSet::new(),
            connected: true,
            max_chunk: usize::MAX,
            instructions_seen: Vec::new(),
            motion: None,
            outbox: VecDeque::new(),
            decoder: FrameDecoder::new(),
        };
        MockServoBus { state: Arc::new(Mutex::new(state)) }
    }

    pub fn set_motion(&self, hook: MotionHook) {
        self.lock().motion = Some(hook);
    }

    pub fn lock(&self) -> MutexGuard<'_, MockState> {
        self.state.lock().expect("mock bus poisoned")
    }
}

impl MockState {
    fn reply(&mut self, id: u8, error: u8, params: Vec<u8>) {
        if self.silent.contains(&id) {
            return;
        }
        let frame = StatusPacket { id, error, params }.encode().expect("valid status");
        self.outbox.extend(frame);
    }

    fn handle(&mut self, p: InstructionPacket) {
        self.instructions_seen.push(p.instruction);
        let addr_len = |params: &[u8]| -> Option<(u16, u16)> {
            Some((
                u16::from_le_bytes([*params.first()?, *params.get(1)?]),
                u16::from_le_bytes([*params.get(2)?, *params.get(3)?]),
            ))
        };
        match p.instruction {
            Instruction::Ping => {
                let model = self.table.model_number.to_le_bytes();
                let ids: Vec<u8> = if p.id == BROADCAST_ID {
                    self.servos.keys().copied().collect()
                } else {
                    self.servos.keys().copied().filter(|&i| i == p.id).collect()
                };
                for id in ids {
                    self.reply(id, 0, vec![model[0], model[1], 0x26]);
                }
            }
            Instruction::Read => {
                let Some((address, len)) = addr_len(&p.params) else { return };
                if let Some(s) = self.servos.get(&p.id) {
                    match s.read(address, len).map(<[u8]>::to_vec) {
                        Some(data) => self.reply(p.id, 0, data),
                        None => self.reply(p.id, ERR_ACCESS, vec![]),
                    }
                }
            }
            Instruction::Write => {
                if p.params.len() < 2 {
                    return;
                }
                let address = u16::from_le_bytes([p.params[0], p.params[1]]);
                let data = p.params[2..].to_vec();
                if let Some(s) = self.servos.get_mut(&p.id) {
                    let ok = s.write(address, &data);
                    self.reply(p.id, if ok { 0 } else { ERR_ACCESS }, vec![]);
                }
            }
            Instruction::SyncWrite => {
                let Some((address, len)) = addr_len(&p.params) else { return };
                for chunk in p.params[4..].chunks(1 + len as usize) {
                    if chunk.len() != 1 + len as usize {
                        break;
                    }
                    if self.silent.contains(&chunk[0]) {
                        continue;
                    }
                    if let Some(s) = self.servos.get_mut(&chunk[0]) {
                        s.write(address, &chunk[1..]);
                    }
                }
                if let Some(mut hook) = self.motion.take() {
                    hook(&self.table, &mut self.servos);
                    self.motion = Some(hook);
                }
            }
            Instruction::SyncRead => {
                let Some((address, len)) = addr_len(&p.params) else { return };
                for &id in &p.params[4..] {
                    let data = self.servos.get(&id).and_then(|s| s.read(address, len)).map(<[u8]>::to_vec);
                    if let Some(data) = data {
                        self.reply(id, 0, data);
                    }
                }
            }
            _ => {
                if p.id != BROADCAST_ID && self.servos.contains_key(&p.id) {
                    self.reply(p.id, ERR_INSTRUCTION, vec![]);
                }
            }
        }
    }
}

impl Transport for MockServoBus {
    fn write_all(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        let mut st = self.lock();
        if !st.connected {
            return Ok(());
        }
        st.decoder.push(bytes);
        loop {
            match st.decoder.next_packet() {
                Ok(Some(Packet::Instruction(p))) => st.handle(p),
                Ok(Some(Packet::Status(_))) | Err(_) => {}
                Ok(None) => break,
            }
        }
        Ok(())
    }

    fn read(&mut self, buf: &mut [u8], _timeout: Duration) -> Result<usize, TransportError> {
        let mut st = self.lock();
        let n = buf.len().min(st.outbox.len()).min(st.max_chunk);
        for slot in buf.iter_mut().take(n) {
            *slot = st.outbox.pop_front().expect("counted");
        }
        Ok(n)
    }

    fn clear_input(&mut self) -> Result<(), TransportError> {
        self.lock().outbox.clear();
        Ok(())
    }
}
