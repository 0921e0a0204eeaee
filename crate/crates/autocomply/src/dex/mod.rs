//! DEX bytecode parsing.
//!
//! Decodes class definitions, method bodies, and the instruction facts
//! the analysis needs: invocations, returns, null constants, branches,
//! and throws. Everything else is carried as an opaque instruction with
//! its exact code-unit length so offset arithmetic stays faithful to the
//! file. Switch and array payloads are skipped as data.

mod opcodes;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use opcodes::{op_spec, Dest, Format};

pub const NO_INDEX: u32 = 0xffff_ffff;

#[derive(Debug, Error)]
pub enum DexError {
    #[error("bad DEX magic")]
    BadMagic,
    #[error("truncated section: {0}")]
    TruncatedSection(String),
    #[error("index out of range: {0}")]
    BadIndex(String),
    #[error("cyclic class hierarchy involving {0}")]
    CyclicHierarchy(String),
}

/// Reference to a method, owner rendered as a dotted class name.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MethodRef {
    pub owner: String,
    pub name: String,
    /// JVM-style descriptor, e.g. `(Ljava/lang/String;)V`.
    pub descriptor: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InvokeFlavor {
    Virtual,
    Super,
    Direct,
    Static,
    Interface,
}

/// The classified word of one decoded instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InsnKind {
    Invoke {
        target: MethodRef,
        flavor: InvokeFlavor,
        /// Argument registers; for range forms, first..first+count.
        args: Vec<u16>,
    },
    Return {
        reg: Option<u16>,
    },
    ConstNull {
        reg: u16,
    },
    /// Successor offsets; conditional forms include the fall-through.
    Branch {
        targets: Vec<u32>,
    },
    Throw,
    /// A register-class load; tracked so callback registrations can be
    /// resolved to the constructed class.
    NewInstance {
        reg: u16,
        class: String,
    },
    Other {
        units: u32,
        writes: Option<u16>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedInsn {
    /// Code-unit offset within the method.
    pub offset: u32,
    pub kind: InsnKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TryHandler {
    pub start: u32,
    pub count: u16,
    pub handler_offset: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeItem {
    pub registers: u16,
    pub ins: u16,
    /// Declared size of the instruction stream in code units.
    pub insns_size: u32,
    pub instructions: Vec<DecodedInsn>,
    /// Per-instruction lengths, parallel to `instructions`.
    pub insn_units: Vec<u32>,
    pub try_handlers: Vec<TryHandler>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DexMethod {
    pub owner: String,
    pub name: String,
    pub descriptor: String,
    pub code: Option<CodeItem>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DexClass {
    /// Dotted name.
    pub name: String,
    pub superclass: Option<String>,
    pub interfaces: Vec<String>,
    pub methods: Vec<DexMethod>,
}

/// Classes merged from every DEX entry of one app.
#[derive(Clone, Debug, Default)]
pub struct MergedClasses {
    pub classes: Vec<DexClass>,
    /// Names seen more than once; later definitions were dropped.
    pub duplicates: Vec<String>,
}

/// Parses one DEX file into class structures.
pub fn parse_dex(dex_bytes: &[u8]) -> Result<Vec<DexClass>, DexError> {
    Parser::new(dex_bytes)?.parse()
}

/// First-definition-wins concatenation across classesN.dex files.
pub fn merge_multidex(per_dex: Vec<Vec<DexClass>>) -> MergedClasses {
    let mut merged = MergedClasses::default();
    let mut seen = BTreeSet::new();
    for classes in per_dex {
        for class in classes {
            if seen.contains(&class.name) {
                merged.duplicates.push(class.name);
                continue;
            }
            seen.insert(class.name.clone());
            merged.classes.push(class);
        }
    }
    merged
}

/// Classes whose superclass chain reaches a name matching any suffix.
/// The walk stays inside the app; a framework superclass terminates it.
pub fn subclasses_of<'a>(
    classes: &'a [DexClass],
    base_name_suffixes: &BTreeSet<String>,
) -> Result<Vec<&'a DexClass>, DexError> {
    let by_name: BTreeMap<&str, &DexClass> =
        classes.iter().map(|c| (c.name.as_str(), c)).collect();
    let mut result = Vec::new();
    for class in classes {
        let mut visited = BTreeSet::new();
        visited.insert(class.name.as_str());
        let mut cursor = class.superclass.as_deref();
        let mut matched = false;
        while let Some(super_name) = cursor {
            if base_name_suffixes
                .iter()
                .any(|s| suffix_matches(super_name, s))
            {
                matched = true;
                break;
            }
            if !visited.insert(super_name) {
                return Err(DexError::CyclicHierarchy(class.name.clone()));
            }
            cursor = by_name.get(super_name).and_then(|c| c.superclass.as_deref());
        }
        if matched {
            result.push(class);
        }
    }
    Ok(result)
}

/// Name matches a suffix only on a package or inner-class boundary.
pub fn suffix_matches(name: &str, suffix: &str) -> bool {
    name == suffix
        || name
            .strip_suffix(suffix)
            .map(|rest| rest.ends_with('.') || rest.ends_with('$'))
            .unwrap_or(false)
}

/// `Lcom/foo/Bar;` -> `com.foo.Bar`; arrays keep a `[]` suffix.
fn friendly_type(descriptor: &str) -> String {
    if let Some(inner) = descriptor.strip_prefix('[') {
        return format!("{}[]", friendly_type(inner));
    }
    if let Some(body) = descriptor.strip_prefix('L').and_then(|d| d.strip_suffix(';')) {
        return body.replace('/', ".");
    }
    descriptor.to_string()
}

struct Parser<'a> {
    bytes: &'a [u8],
    strings: Vec<String>,
    type_descs: Vec<String>,
    protos: Vec<String>,
    method_refs: Vec<MethodRef>,
}

impl<'a> Parser<'a> {
    fn new(bytes: &'a [u8]) -> Result<Self, DexError> {
        if bytes.len() < 0x70 {
            return Err(DexError::BadMagic);
        }
        if &bytes[0..4] != b"dex\n" || bytes[7] != 0 {
            return Err(DexError::BadMagic);
        }
        let version = &bytes[4..7];
        if !version.iter().all(|b| b.is_ascii_digit()) || version < b"035" {
            return Err(DexError::BadMagic);
        }
        Ok(Parser {
            bytes,
            strings: Vec::new(),
            type_descs: Vec::new(),
            protos: Vec::new(),
            method_refs: Vec::new(),
        })
    }

    fn parse(mut self) -> Result<Vec<DexClass>, DexError> {
        let string_ids_size = self.u32(0x38)? as usize;
        let string_ids_off = self.u32(0x3c)? as usize;
        let type_ids_size = self.u32(0x40)? as usize;
        let type_ids_off = self.u32(0x44)? as usize;
        let proto_ids_size = self.u32(0x48)? as usize;
        let proto_ids_off = self.u32(0x4c)? as usize;
        let method_ids_size = self.u32(0x58)? as usize;
        let method_ids_off = self.u32(0x5c)? as usize;
        let class_defs_size = self.u32(0x60)? as usize;
        let class_defs_off = self.u32(0x64)? as usize;

        self.check_section("string_ids", string_ids_off, string_ids_size, 4)?;
        self.check_section("type_ids", type_ids_off, type_ids_size, 4)?;
        self.check_section("proto_ids", proto_ids_off, proto_ids_size, 12)?;
        self.check_section("method_ids", method_ids_off, method_ids_size, 8)?;
        self.check_section("class_defs", class_defs_off, class_defs_size, 32)?;

        // String table.
        for i in 0..string_ids_size {
            let data_off = self.u32(string_ids_off + 4 * i)? as usize;
            self.strings.push(self.read_string_data(data_off)?);
        }

        // Type table.
        for i in 0..type_ids_size {
            let idx = self.u32(type_ids_off + 4 * i)? as usize;
            let desc = self
                .strings
                .get(idx)
                .ok_or_else(|| DexError::BadIndex(format!("type {i} names string {idx}")))?;
            self.type_descs.push(desc.clone());
        }

        // Proto descriptors.
        for i in 0..proto_ids_size {
            let at = proto_ids_off + 12 * i;
            let return_idx = self.u32(at + 4)? as usize;
            let params_off = self.u32(at + 8)? as usize;
            let ret = self.type_desc(return_idx)?.to_string();
            let mut sig = String::from("(");
            if params_off != 0 {
                let count = self.u32(params_off)? as usize;
                for k in 0..count {
                    let t = self.u16(params_off + 4 + 2 * k)? as usize;
                    sig.push_str(self.type_desc(t)?);
                }
            }
            sig.push(')');
            sig.push_str(&ret);
            self.protos.push(sig);
        }

        // Method references.
        for i in 0..method_ids_size {
            let at = method_ids_off + 8 * i;
            let class_idx = self.u16(at)? as usize;
            let proto_idx = self.u16(at + 2)? as usize;
            let name_idx = self.u32(at + 4)? as usize;
            let owner = friendly_type(self.type_desc(class_idx)?);
            let name = self
                .strings
                .get(name_idx)
                .ok_or_else(|| DexError::BadIndex(format!("method {i} names string {name_idx}")))?
                .clone();
            let descriptor = self
                .protos
                .get(proto_idx)
                .ok_or_else(|| DexError::BadIndex(format!("method {i} names proto {proto_idx}")))?
                .clone();
            self.method_refs.push(MethodRef {
                owner,
                name,
                descriptor,
            });
        }

        // Class definitions.
        let mut classes = Vec::with_capacity(class_defs_size);
        for i in 0..class_defs_size {
            let at = class_defs_off + 32 * i;
            let class_idx = self.u32(at)? as usize;
            let superclass_idx = self.u32(at + 4)?;
            let interfaces_off = self.u32(at + 8)? as usize;
            let class_data_off = self.u32(at + 24)? as usize;

            let name = friendly_type(self.type_desc(class_idx)?);
            let superclass = if superclass_idx == NO_INDEX {
                None
            } else {
                Some(friendly_type(self.type_desc(superclass_idx as usize)?))
            };
            let mut interfaces = Vec::new();
            if interfaces_off != 0 {
                let count = self.u32(interfaces_off)? as usize;
                for k in 0..count {
                    let t = self.u16(interfaces_off + 4 + 2 * k)? as usize;
                    interfaces.push(friendly_type(self.type_desc(t)?));
                }
            }
            let methods = if class_data_off != 0 {
                self.parse_class_data(class_data_off, &name)?
            } else {
                Vec::new()
            };
            classes.push(DexClass {
                name,
                superclass,
                interfaces,
                methods,
            });
        }
        Ok(classes)
    }

    fn parse_class_data(&self, off: usize, owner: &str) -> Result<Vec<DexMethod>, DexError> {
        let mut pos = off;
        let static_fields = self.uleb(&mut pos)?;
        let instance_fields = self.uleb(&mut pos)?;
        let direct_methods = self.uleb(&mut pos)?;
        let virtual_methods = self.uleb(&mut pos)?;

        for _ in 0..static_fields + instance_fields {
            self.uleb(&mut pos)?; // field idx diff
            self.uleb(&mut pos)?; // access flags
        }

        let mut methods = Vec::new();
        for group_size in [direct_methods, virtual_methods] {
            let mut method_idx = 0u32;
            for _ in 0..group_size {
                method_idx = method_idx.wrapping_add(self.uleb(&mut pos)?);
                self.uleb(&mut pos)?; // access flags
                let code_off = self.uleb(&mut pos)? as usize;
                let mref = self
                    .method_refs
                    .get(method_idx as usize)
                    .ok_or_else(|| DexError::BadIndex(format!("encoded method {method_idx}")))?;
                let code = if code_off != 0 {
                    Some(self.parse_code_item(code_off)?)
                } else {
                    None
                };
                methods.push(DexMethod {
                    owner: owner.to_string(),
                    name: mref.name.clone(),
                    descriptor: mref.descriptor.clone(),
                    code,
                });
            }
        }
        Ok(methods)
    }

    fn parse_code_item(&self, off: usize) -> Result<CodeItem, DexError> {
        let registers = self.u16(off)?;
        let ins = self.u16(off + 2)?;
        let tries_size = self.u16(off + 6)? as usize;
        let insns_size = self.u32(off + 12)?;
        let insns_at = off + 16;
        if insns_at + 2 * insns_size as usize > self.bytes.len() {
            return Err(DexError::TruncatedSection("code item".into()));
        }

        let unit = |i: u32| -> Result<u16, DexError> { self.u16(insns_at + 2 * i as usize) };

        let mut instructions = Vec::new();
        let mut insn_units = Vec::new();
        let mut pos = 0u32;
        while pos < insns_size {
            let word = unit(pos)?;
            let opcode = (word & 0xff) as u8;
            let high = word >> 8;
            let (kind, len) = if opcode == 0x00 && high != 0 {
                self.decode_payload(high, pos, insns_size, &unit)?
            } else {
                self.decode_insn(opcode, word, pos, &unit)?
            };
            if pos + len > insns_size {
                return Err(DexError::TruncatedSection(format!(
                    "instruction at {pos} runs past code end"
                )));
            }
            instructions.push(DecodedInsn { offset: pos, kind });
            insn_units.push(len);
            pos += len;
        }

        // Branch targets must land on decoded instruction boundaries.
        let starts: BTreeSet<u32> = instructions.iter().map(|i| i.offset).collect();
        for insn in &instructions {
            if let InsnKind::Branch { targets } = &insn.kind {
                for t in targets {
                    if !starts.contains(t) {
                        return Err(DexError::BadIndex(format!(
                            "branch at {} targets non-instruction offset {t}",
                            insn.offset
                        )));
                    }
                }
            }
        }

        // Try blocks follow the instruction stream (2-unit padding if odd).
        let mut try_handlers = Vec::new();
        if tries_size > 0 {
            let mut at = insns_at + 2 * insns_size as usize;
            if insns_size % 2 == 1 {
                at += 2;
            }
            let handlers_base = at + 8 * tries_size;
            for k in 0..tries_size {
                let t = at + 8 * k;
                try_handlers.push(TryHandler {
                    start: self.u32(t)?,
                    count: self.u16(t + 4)?,
                    handler_offset: (handlers_base - off) as u32 + self.u16(t + 6)? as u32,
                });
            }
        }

        Ok(CodeItem {
            registers,
            ins,
            insns_size,
            instructions,
            insn_units,
            try_handlers,
        })
    }

    fn decode_payload(
        &self,
        ident: u16,
        pos: u32,
        insns_size: u32,
        unit: &dyn Fn(u32) -> Result<u16, DexError>,
    ) -> Result<(InsnKind, u32), DexError> {
        let len = match ident {
            0x01 => {
                let size = unit(pos + 1)? as u32;
                size * 2 + 4
            }
            0x02 => {
                let size = unit(pos + 1)? as u32;
                size * 4 + 2
            }
            0x03 => {
                let width = unit(pos + 1)? as u32;
                let count = unit(pos + 2)? as u32 | (unit(pos + 3)? as u32) << 16;
                (count * width + 1) / 2 + 4
            }
            other => {
                return Err(DexError::BadIndex(format!(
                    "unknown payload ident 0x{other:02x} at {pos}"
                )))
            }
        };
        if pos + len > insns_size {
            return Err(DexError::TruncatedSection(format!("payload at {pos}")));
        }
        Ok((InsnKind::Other { units: len, writes: None }, len))
    }

    fn decode_insn(
        &self,
        opcode: u8,
        word: u16,
        pos: u32,
        unit: &dyn Fn(u32) -> Result<u16, DexError>,
    ) -> Result<(InsnKind, u32), DexError> {
        let spec = op_spec(opcode);
        let len = spec.format.units();
        let a8 = (word >> 8) as u16;
        let a4 = (word >> 8) & 0x0f;

        let kind = match opcode {
            0x0e => InsnKind::Return { reg: None },
            0x0f..=0x11 => InsnKind::Return { reg: Some(a8) },
            0x27 => InsnKind::Throw,
            // Zero-valued narrow consts load null into a register.
            0x12 => {
                let value = ((word as i16) >> 12) as i32;
                if value == 0 {
                    InsnKind::ConstNull { reg: a4 }
                } else {
                    InsnKind::Other { units: len, writes: Some(a4) }
                }
            }
            0x13 | 0x14 => {
                let value = match spec.format {
                    Format::F21s => unit(pos + 1)? as i16 as i32,
                    _ => (unit(pos + 1)? as u32 | (unit(pos + 2)? as u32) << 16) as i32,
                };
                if value == 0 {
                    InsnKind::ConstNull { reg: a8 }
                } else {
                    InsnKind::Other { units: len, writes: Some(a8) }
                }
            }
            0x22 => {
                let type_idx = unit(pos + 1)? as usize;
                InsnKind::NewInstance {
                    reg: a8,
                    class: friendly_type(self.type_desc(type_idx)?),
                }
            }
            0x28 => {
                let rel = ((word >> 8) as u8 as i8) as i32;
                InsnKind::Branch { targets: vec![offset_to(pos, rel)?] }
            }
            0x29 => {
                let rel = unit(pos + 1)? as i16 as i32;
                InsnKind::Branch { targets: vec![offset_to(pos, rel)?] }
            }
            0x2a => {
                let rel = (unit(pos + 1)? as u32 | (unit(pos + 2)? as u32) << 16) as i32;
                InsnKind::Branch { targets: vec![offset_to(pos, rel)?] }
            }
            0x2b | 0x2c => {
                let rel = (unit(pos + 1)? as u32 | (unit(pos + 2)? as u32) << 16) as i32;
                let payload = offset_to(pos, rel)?;
                let mut targets = self.switch_targets(opcode, pos, payload, unit)?;
                targets.push(pos + 3); // fall-through
                InsnKind::Branch { targets }
            }
            0x32..=0x3d => {
                let rel = unit(pos + 1)? as i16 as i32;
                InsnKind::Branch {
                    targets: vec![offset_to(pos, rel)?, pos + 2],
                }
            }
            0x6e..=0x72 | 0x74..=0x78 => {
                let range = opcode >= 0x74;
                let method_idx = unit(pos + 1)? as usize;
                let target = self
                    .method_refs
                    .get(method_idx)
                    .ok_or_else(|| DexError::BadIndex(format!("invoke names method {method_idx}")))?
                    .clone();
                let flavor = match if range { opcode - 6 } else { opcode } {
                    0x6e => InvokeFlavor::Virtual,
                    0x6f => InvokeFlavor::Super,
                    0x70 => InvokeFlavor::Direct,
                    0x71 => InvokeFlavor::Static,
                    _ => InvokeFlavor::Interface,
                };
                let args = if range {
                    let count = a8;
                    let first = unit(pos + 2)?;
                    (first..first.saturating_add(count)).collect()
                } else {
                    let count = ((word >> 12) & 0xf) as usize;
                    let regs_word = unit(pos + 2)?;
                    let mut args: Vec<u16> = (0..count.min(4))
                        .map(|k| (regs_word >> (4 * k)) & 0xf)
                        .collect();
                    if count == 5 {
                        args.push((word >> 8) & 0xf);
                    }
                    args
                };
                InsnKind::Invoke { target, flavor, args }
            }
            _ => {
                let writes = match spec.dest {
                    Dest::None => None,
                    Dest::A4 => Some(a4),
                    Dest::A8 => Some(a8),
                    Dest::A16 => Some(unit(pos + 1)?),
                };
                InsnKind::Other { units: len, writes }
            }
        };
        Ok((kind, len))
    }

    fn switch_targets(
        &self,
        opcode: u8,
        switch_at: u32,
        payload_at: u32,
        unit: &dyn Fn(u32) -> Result<u16, DexError>,
    ) -> Result<Vec<u32>, DexError> {
        let expected_ident = if opcode == 0x2b { 0x0100 } else { 0x0200 };
        if unit(payload_at)? != expected_ident {
            return Err(DexError::BadIndex(format!(
                "switch at {switch_at} names a non-payload offset {payload_at}"
            )));
        }
        let size = unit(payload_at + 1)? as u32;
        let targets_at = if opcode == 0x2b {
            payload_at + 4 // ident, size, first_key(2)
        } else {
            payload_at + 2 + 2 * size // ident, size, keys
        };
        let mut targets = Vec::with_capacity(size as usize);
        for k in 0..size {
            let at = targets_at + 2 * k;
            let rel = (unit(at)? as u32 | (unit(at + 1)? as u32) << 16) as i32;
            targets.push(offset_to(switch_at, rel)?);
        }
        Ok(targets)
    }

    fn check_section(
        &self,
        name: &str,
        off: usize,
        count: usize,
        item_size: usize,
    ) -> Result<(), DexError> {
        if count == 0 {
            return Ok(());
        }
        if off
            .checked_add(count * item_size)
            .map(|end| end > self.bytes.len())
            .unwrap_or(true)
        {
            return Err(DexError::TruncatedSection(name.to_string()));
        }
        Ok(())
    }

    fn type_desc(&self, idx: usize) -> Result<&str, DexError> {
        self.type_descs
            .get(idx)
            .map(|s| s.as_str())
            .ok_or_else(|| DexError::BadIndex(format!("type index {idx}")))
    }

    fn read_string_data(&self, off: usize) -> Result<String, DexError> {
        let mut pos = off;
        let _utf16_len = self.uleb(&mut pos)?;
        let start = pos;
        let mut end = pos;
        loop {
            match self.bytes.get(end) {
                Some(0) => break,
                Some(_) => end += 1,
                None => return Err(DexError::TruncatedSection("string data".into())),
            }
        }
        decode_mutf8(&self.bytes[start..end])
            .ok_or_else(|| DexError::BadIndex(format!("malformed MUTF-8 string at {off}")))
    }

    fn u16(&self, at: usize) -> Result<u16, DexError> {
        if at + 2 > self.bytes.len() {
            return Err(DexError::TruncatedSection(format!("u16 at {at}")));
        }
        Ok(u16::from_le_bytes([self.bytes[at], self.bytes[at + 1]]))
    }

    fn u32(&self, at: usize) -> Result<u32, DexError> {
        if at + 4 > self.bytes.len() {
            return Err(DexError::TruncatedSection(format!("u32 at {at}")));
        }
        Ok(u32::from_le_bytes([
            self.bytes[at],
            self.bytes[at + 1],
            self.bytes[at + 2],
            self.bytes[at + 3],
        ]))
    }

    fn uleb(&self, pos: &mut usize) -> Result<u32, DexError> {
        let mut result = 0u32;
        let mut shift = 0;
        loop {
            let byte = *self
                .bytes
                .get(*pos)
                .ok_or_else(|| DexError::TruncatedSection("uleb128".into()))?;
            *pos += 1;
            result |= ((byte & 0x7f) as u32) << shift;
            if byte & 0x80 == 0 {
                return Ok(result);
            }
            shift += 7;
            if shift > 31 {
                return Err(DexError::BadIndex("uleb128 exceeds 32 bits".into()));
            }
        }
    }
}

fn offset_to(base: u32, rel: i32) -> Result<u32, DexError> {
    let target = base as i64 + rel as i64;
    if target < 0 {
        return Err(DexError::BadIndex(format!("branch target {target} below zero")));
    }
    Ok(target as u32)
}

/// Decodes MUTF-8: CESU-8 style surrogate pairs plus `C0 80` for NUL.
fn decode_mutf8(bytes: &[u8]) -> Option<String> {
    let mut units: Vec<u16> = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b0 = bytes[i] as u16;
        if b0 & 0x80 == 0 {
            units.push(b0);
            i += 1;
        } else if b0 & 0xe0 == 0xc0 {
            let b1 = *bytes.get(i + 1)? as u16;
            units.push(((b0 & 0x1f) << 6) | (b1 & 0x3f));
            i += 2;
        } else if b0 & 0xf0 == 0xe0 {
            let b1 = *bytes.get(i + 1)? as u16;
            let b2 = *bytes.get(i + 2)? as u16;
            units.push(((b0 & 0x0f) << 12) | ((b1 & 0x3f) << 6) | (b2 & 0x3f));
            i += 3;
        } else {
            return None;
        }
    }
    String::from_utf16(&units).ok()
}

#[cfg(test)]
mod tests;
