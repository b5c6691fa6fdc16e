//! CRC-16 used by the bus protocol: polynomial 0x8005, initial value 0,
//! MSB-first, no reflection and no final xor.

const POLY: u16 = 0x8005;

const TABLE: [u16; 256] = build_table();

const fn build_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// Continues a running checksum over `bytes`.
#[inline]
pub fn crc16_update(mut crc: u16, bytes: &[u8]) -> u16 {
    for &b in bytes {
        let idx = ((crc >> 8) ^ u16::from(b)) & 0xFF;
        crc = (crc << 8) ^ TABLE[idx as usize];
    }
    crc
}

/// Checksum of a complete byte run.
#[inline]
pub fn crc16(bytes: &[u8]) -> u16 {
    crc16_update(0, bytes)
}
