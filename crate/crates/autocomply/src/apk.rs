//! APK container access: ZIP central-directory parsing and extraction of
//! the manifest and DEX entries.
//!
//! Entries are resolved through the central directory (last record wins on
//! duplicate names, matching the Android runtime). Only the STORED and
//! DEFLATE compression methods are accepted; ZIP64 archives are rejected.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::DeflateDecoder;
use thiserror::Error;

const LOCAL_HEADER_SIG: u32 = 0x0403_4b50;
const CENTRAL_HEADER_SIG: u32 = 0x0201_4b50;
const EOCD_SIG: u32 = 0x0605_4b50;
const EOCD_MIN_LEN: usize = 22;
const LOCAL_HEADER_LEN: usize = 30;

#[derive(Debug, Error)]
pub enum ApkError {
    #[error("not a ZIP archive: {0}")]
    NotAZipArchive(String),
    #[error("archive has no AndroidManifest.xml entry")]
    MissingManifest,
    #[error("corrupt entry {name}: {reason}")]
    CorruptEntry { name: String, reason: String },
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Central-directory view of one archive member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApkEntry {
    pub path: String,
    /// Uncompressed size.
    pub size: u64,
}

/// Extracted analysis inputs of one APK.
#[derive(Clone, Debug)]
pub struct ApkContents {
    pub manifest_bytes: Vec<u8>,
    /// classes.dex, classes2.dex, ... in suffix order.
    pub dex_entries: Vec<Vec<u8>>,
    /// All members, in central-directory order (duplicates collapsed to the
    /// last record).
    pub entry_index: Vec<ApkEntry>,
}

struct CentralRecord {
    name: String,
    method: u16,
    crc: u32,
    compressed_size: u32,
    uncompressed_size: u32,
    local_offset: u32,
}

/// Opens an APK and extracts the manifest plus every DEX entry. Other
/// members are listed in the index but their bytes are not loaded.
pub fn open_apk(path: &Path) -> Result<ApkContents, ApkError> {
    let bytes = fs::read(path)?;
    open_apk_bytes(&bytes)
}

pub fn open_apk_bytes(bytes: &[u8]) -> Result<ApkContents, ApkError> {
    let records = read_central_directory(bytes)?;

    // Last central record wins for a repeated name.
    let mut dedup: Vec<&CentralRecord> = Vec::new();
    for r in &records {
        if let Some(at) = dedup.iter().position(|d| d.name == r.name) {
            dedup.remove(at);
        }
        dedup.push(r);
    }

    let entry_index: Vec<ApkEntry> = dedup
        .iter()
        .map(|r| ApkEntry {
            path: r.name.clone(),
            size: r.uncompressed_size as u64,
        })
        .collect();

    let manifest_rec = dedup
        .iter()
        .find(|r| r.name == "AndroidManifest.xml")
        .ok_or(ApkError::MissingManifest)?;
    let manifest_bytes = extract(bytes, manifest_rec)?;

    let mut dex_recs: Vec<(u32, &CentralRecord)> = dedup
        .iter()
        .filter_map(|r| dex_ordinal(&r.name).map(|n| (n, *r)))
        .collect();
    dex_recs.sort_by_key(|(n, _)| *n);
    let mut dex_entries = Vec::with_capacity(dex_recs.len());
    for (_, r) in dex_recs {
        dex_entries.push(extract(bytes, r)?);
    }

    Ok(ApkContents {
        manifest_bytes,
        dex_entries,
        entry_index,
    })
}

/// classes.dex -> 1, classesN.dex -> N; anything else is not code.
fn dex_ordinal(name: &str) -> Option<u32> {
    let rest = name.strip_prefix("classes")?.strip_suffix(".dex")?;
    if rest.is_empty() {
        Some(1)
    } else if rest.starts_with('0') || rest == "1" {
        None
    } else {
        rest.parse().ok().filter(|&n| n >= 2)
    }
}

fn read_central_directory(bytes: &[u8]) -> Result<Vec<CentralRecord>, ApkError> {
    if bytes.len() < EOCD_MIN_LEN {
        return Err(ApkError::NotAZipArchive("file shorter than an EOCD record".into()));
    }
    let eocd_at = find_eocd(bytes)
        .ok_or_else(|| ApkError::NotAZipArchive("no end-of-central-directory record".into()))?;
    let eocd = &bytes[eocd_at..];

    let entries_total = u16_at(eocd, 10) as usize;
    let cd_size = u32_at(eocd, 12) as usize;
    let cd_offset = u32_at(eocd, 16) as usize;
    let disk_number = u16_at(eocd, 4);

    if disk_number == 0xFFFF
        || entries_total == 0xFFFF
        || cd_size == 0xFFFF_FFFF
        || cd_offset == 0xFFFF_FFFF
    {
        return Err(ApkError::NotAZipArchive("ZIP64 archives are not supported".into()));
    }
    if cd_offset
        .checked_add(cd_size)
        .map(|end| end > bytes.len())
        .unwrap_or(true)
    {
        return Err(ApkError::NotAZipArchive("central directory out of bounds".into()));
    }

    let mut records = Vec::with_capacity(entries_total);
    let mut pos = cd_offset;
    for _ in 0..entries_total {
        if pos + 46 > bytes.len() || u32_at(bytes, pos) != CENTRAL_HEADER_SIG {
            return Err(ApkError::NotAZipArchive("bad central directory record".into()));
        }
        let method = u16_at(bytes, pos + 10);
        let crc = u32_at(bytes, pos + 16);
        let compressed_size = u32_at(bytes, pos + 20);
        let uncompressed_size = u32_at(bytes, pos + 24);
        let name_len = u16_at(bytes, pos + 28) as usize;
        let extra_len = u16_at(bytes, pos + 30) as usize;
        let comment_len = u16_at(bytes, pos + 32) as usize;
        let local_offset = u32_at(bytes, pos + 42);
        if compressed_size == 0xFFFF_FFFF || uncompressed_size == 0xFFFF_FFFF {
            return Err(ApkError::NotAZipArchive("ZIP64 entry sizes are not supported".into()));
        }
        let name_end = pos + 46 + name_len;
        if name_end > bytes.len() {
            return Err(ApkError::NotAZipArchive("entry name out of bounds".into()));
        }
        let name = String::from_utf8_lossy(&bytes[pos + 46..name_end]).into_owned();
        if name.is_empty() {
            return Err(ApkError::NotAZipArchive("empty entry name".into()));
        }
        records.push(CentralRecord {
            name,
            method,
            crc,
            compressed_size,
            uncompressed_size,
            local_offset,
        });
        pos = name_end + extra_len + comment_len;
    }
    Ok(records)
}

/// Scans backwards for the EOCD signature, tolerating a trailing comment.
fn find_eocd(bytes: &[u8]) -> Option<usize> {
    let earliest = bytes.len().saturating_sub(EOCD_MIN_LEN + u16::MAX as usize);
    let mut pos = bytes.len() - EOCD_MIN_LEN;
    loop {
        if u32_at(bytes, pos) == EOCD_SIG {
            let comment_len = u16_at(bytes, pos + 20) as usize;
            if pos + EOCD_MIN_LEN + comment_len == bytes.len() {
                return Some(pos);
            }
        }
        if pos == earliest {
            return None;
        }
        pos -= 1;
    }
}

fn extract(bytes: &[u8], rec: &CentralRecord) -> Result<Vec<u8>, ApkError> {
    let corrupt = |reason: &str| ApkError::CorruptEntry {
        name: rec.name.clone(),
        reason: reason.to_string(),
    };

    let lh = rec.local_offset as usize;
    if lh + LOCAL_HEADER_LEN > bytes.len() || u32_at(bytes, lh) != LOCAL_HEADER_SIG {
        return Err(corrupt("bad local header"));
    }
    let name_len = u16_at(bytes, lh + 26) as usize;
    let extra_len = u16_at(bytes, lh + 28) as usize;
    let data_start = lh + LOCAL_HEADER_LEN + name_len + extra_len;
    let data_end = data_start + rec.compressed_size as usize;
    if data_end > bytes.len() {
        return Err(corrupt("entry data out of bounds"));
    }
    let raw = &bytes[data_start..data_end];

    let data = match rec.method {
        0 => raw.to_vec(),
        8 => {
            let mut out = Vec::with_capacity(rec.uncompressed_size as usize);
            DeflateDecoder::new(raw)
                .read_to_end(&mut out)
                .map_err(|e| corrupt(&format!("inflate failed: {e}")))?;
            out
        }
        m => return Err(corrupt(&format!("unsupported compression method {m}"))),
    };

    if data.len() != rec.uncompressed_size as usize {
        return Err(corrupt("decompressed size mismatch"));
    }
    if crc32fast::hash(&data) != rec.crc {
        return Err(corrupt("CRC mismatch"));
    }
    Ok(data)
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use apk_synth::{ZipEntrySpec, ZipWriter};

    fn apk_with(entries: Vec<ZipEntrySpec>) -> Vec<u8> {
        let mut w = ZipWriter::new();
        for e in entries {
            w = w.entry(e);
        }
        w.finish()
    }

    #[test]
    fn manifest_and_single_dex() {
        let bytes = apk_with(vec![
            ZipEntrySpec::deflated("AndroidManifest.xml", vec![3, 0, 8, 0]),
            ZipEntrySpec::stored("classes.dex", b"dexdata".to_vec()),
            ZipEntrySpec::stored("res/raw/a.txt", b"x".to_vec()),
        ]);
        let contents = open_apk_bytes(&bytes).unwrap();
        assert_eq!(contents.manifest_bytes, vec![3, 0, 8, 0]);
        assert_eq!(contents.dex_entries.len(), 1);
        assert_eq!(contents.dex_entries[0], b"dexdata");
        assert_eq!(contents.entry_index.len(), 3);
    }

    #[test]
    fn manifest_only_archive_has_no_dex() {
        let bytes = apk_with(vec![ZipEntrySpec::stored(
            "AndroidManifest.xml",
            vec![1, 2, 3],
        )]);
        let contents = open_apk_bytes(&bytes).unwrap();
        assert!(contents.dex_entries.is_empty());
    }

    #[test]
    fn dex_entries_follow_suffix_order() {
        let bytes = apk_with(vec![
            ZipEntrySpec::stored("classes3.dex", b"three".to_vec()),
            ZipEntrySpec::stored("AndroidManifest.xml", vec![0]),
            ZipEntrySpec::stored("classes.dex", b"one".to_vec()),
            ZipEntrySpec::stored("classes2.dex", b"two".to_vec()),
        ]);
        let contents = open_apk_bytes(&bytes).unwrap();
        let dex: Vec<&[u8]> = contents.dex_entries.iter().map(|d| d.as_slice()).collect();
        assert_eq!(dex, vec![&b"one"[..], &b"two"[..], &b"three"[..]]);
    }

    #[test]
    fn missing_manifest_is_reported() {
        let bytes = apk_with(vec![ZipEntrySpec::stored("classes.dex", vec![0])]);
        assert!(matches!(
            open_apk_bytes(&bytes),
            Err(ApkError::MissingManifest)
        ));
    }

    #[test]
    fn garbage_is_not_a_zip() {
        assert!(matches!(
            open_apk_bytes(&[0u8; 64]),
            Err(ApkError::NotAZipArchive(_))
        ));
        assert!(matches!(
            open_apk_bytes(b"PK"),
            Err(ApkError::NotAZipArchive(_))
        ));
    }

    #[test]
    fn crc_mismatch_is_corrupt() {
        let bytes = ZipWriter::new()
            .entry(ZipEntrySpec::stored("AndroidManifest.xml", vec![1, 2, 3]))
            .corrupt_crc_of(0)
            .finish();
        assert!(matches!(
            open_apk_bytes(&bytes),
            Err(ApkError::CorruptEntry { .. })
        ));
    }

    #[test]
    fn duplicate_names_resolve_to_last_record() {
        let bytes = apk_with(vec![
            ZipEntrySpec::stored("AndroidManifest.xml", b"old".to_vec()),
            ZipEntrySpec::stored("AndroidManifest.xml", b"new".to_vec()),
        ]);
        let contents = open_apk_bytes(&bytes).unwrap();
        assert_eq!(contents.manifest_bytes, b"new");
        assert_eq!(contents.entry_index.len(), 1);
    }

    #[test]
    fn odd_dex_names_are_not_code() {
        for name in ["classes1.dex", "classes02.dex", "lib/classes.dex", "classesx.dex"] {
            let bytes = apk_with(vec![
                ZipEntrySpec::stored("AndroidManifest.xml", vec![0]),
                ZipEntrySpec::stored(name, vec![0]),
            ]);
            let contents = open_apk_bytes(&bytes).unwrap();
            assert!(contents.dex_entries.is_empty(), "{name} misclassified");
        }
    }

    #[test]
    fn open_is_deterministic() {
        let bytes = apk_with(vec![
            ZipEntrySpec::deflated("AndroidManifest.xml", vec![9; 100]),
            ZipEntrySpec::deflated("classes.dex", vec![7; 2048]),
        ]);
        let a = open_apk_bytes(&bytes).unwrap();
        let b = open_apk_bytes(&bytes).unwrap();
        assert_eq!(a.manifest_bytes, b.manifest_bytes);
        assert_eq!(a.dex_entries, b.dex_entries);
        assert_eq!(a.entry_index, b.entry_index);
    }
}
