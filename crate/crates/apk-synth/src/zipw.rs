//! Minimal ZIP writer producing archives with local headers, a central
//! directory, and an end-of-central-directory record.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;

const LOCAL_HEADER_SIG: u32 = 0x0403_4b50;
const CENTRAL_HEADER_SIG: u32 = 0x0201_4b50;
const EOCD_SIG: u32 = 0x0605_4b50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZipMethod {
    Stored,
    Deflated,
}

impl ZipMethod {
    fn code(self) -> u16 {
        match self {
            ZipMethod::Stored => 0,
            ZipMethod::Deflated => 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ZipEntrySpec {
    pub name: String,
    pub data: Vec<u8>,
    pub method: ZipMethod,
}

impl ZipEntrySpec {
    pub fn stored(name: &str, data: Vec<u8>) -> Self {
        ZipEntrySpec {
            name: name.to_string(),
            data,
            method: ZipMethod::Stored,
        }
    }

    pub fn deflated(name: &str, data: Vec<u8>) -> Self {
        ZipEntrySpec {
            name: name.to_string(),
            data,
            method: ZipMethod::Deflated,
        }
    }
}

#[derive(Default)]
pub struct ZipWriter {
    entries: Vec<ZipEntrySpec>,
    /// Overrides the CRC stored for the entry at this index, to fabricate
    /// corrupt archives in tests.
    bad_crc_at: Option<usize>,
}

struct CentralRecord {
    name: String,
    method: u16,
    crc: u32,
    compressed_size: u32,
    uncompressed_size: u32,
    local_offset: u32,
}

impl ZipWriter {
    pub fn new() -> Self {
        ZipWriter::default()
    }

    pub fn entry(mut self, spec: ZipEntrySpec) -> Self {
        self.entries.push(spec);
        self
    }

    pub fn corrupt_crc_of(mut self, index: usize) -> Self {
        self.bad_crc_at = Some(index);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut records = Vec::new();

        for (i, e) in self.entries.iter().enumerate() {
            let mut crc = crc32fast::hash(&e.data);
            if self.bad_crc_at == Some(i) {
                crc ^= 0xdead_beef;
            }
            let compressed = match e.method {
                ZipMethod::Stored => e.data.clone(),
                ZipMethod::Deflated => {
                    let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
                    enc.write_all(&e.data).unwrap();
                    enc.finish().unwrap()
                }
            };
            let local_offset = out.len() as u32;
            put_u32(&mut out, LOCAL_HEADER_SIG);
            put_u16(&mut out, 20); // version needed
            put_u16(&mut out, 0); // flags
            put_u16(&mut out, e.method.code());
            put_u16(&mut out, 0); // mod time
            put_u16(&mut out, 0x21); // mod date
            put_u32(&mut out, crc);
            put_u32(&mut out, compressed.len() as u32);
            put_u32(&mut out, e.data.len() as u32);
            put_u16(&mut out, e.name.len() as u16);
            put_u16(&mut out, 0); // extra len
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&compressed);

            records.push(CentralRecord {
                name: e.name.clone(),
                method: e.method.code(),
                crc,
                compressed_size: compressed.len() as u32,
                uncompressed_size: e.data.len() as u32,
                local_offset,
            });
        }

        let cd_offset = out.len() as u32;
        for r in &records {
            put_u32(&mut out, CENTRAL_HEADER_SIG);
            put_u16(&mut out, 20); // version made by
            put_u16(&mut out, 20); // version needed
            put_u16(&mut out, 0); // flags
            put_u16(&mut out, r.method);
            put_u16(&mut out, 0); // mod time
            put_u16(&mut out, 0x21); // mod date
            put_u32(&mut out, r.crc);
            put_u32(&mut out, r.compressed_size);
            put_u32(&mut out, r.uncompressed_size);
            put_u16(&mut out, r.name.len() as u16);
            put_u16(&mut out, 0); // extra len
            put_u16(&mut out, 0); // comment len
            put_u16(&mut out, 0); // disk number
            put_u16(&mut out, 0); // internal attrs
            put_u32(&mut out, 0); // external attrs
            put_u32(&mut out, r.local_offset);
            out.extend_from_slice(r.name.as_bytes());
        }
        let cd_size = out.len() as u32 - cd_offset;

        put_u32(&mut out, EOCD_SIG);
        put_u16(&mut out, 0); // disk number
        put_u16(&mut out, 0); // cd start disk
        put_u16(&mut out, records.len() as u16);
        put_u16(&mut out, records.len() as u16);
        put_u32(&mut out, cd_size);
        put_u32(&mut out, cd_offset);
        put_u16(&mut out, 0); // comment len

        out
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}
