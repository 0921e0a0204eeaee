//! DEX file writer with a small label-based assembler.
//!
//! Produces structurally valid `.dex` files (format 035): sorted id
//! tables, class_defs in superclass-first order, encoded class data,
//! code items with branch/switch payloads, try blocks, and a map list.
//! The signature field is left zeroed; the adler32 checksum is real.

use std::collections::BTreeMap;

pub const NO_INDEX: u32 = 0xffff_ffff;

const ACC_PUBLIC: u32 = 0x1;
const ACC_STATIC: u32 = 0x8;
const ACC_ABSTRACT: u32 = 0x400;
const ACC_CONSTRUCTOR: u32 = 0x1_0000;

/// Converts a dotted Java name into a type descriptor.
pub fn obj(dotted: &str) -> String {
    format!("L{};", dotted.replace('.', "/"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodKind {
    /// Constructors and static helpers (direct_methods section).
    Direct,
    Virtual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum InvokeFlavor {
    Virtual,
    Super,
    Direct,
    Static,
    Interface,
}

impl InvokeFlavor {
    fn opcode(self, range: bool) -> u8 {
        let base = match self {
            InvokeFlavor::Virtual => 0x6e,
            InvokeFlavor::Super => 0x6f,
            InvokeFlavor::Direct => 0x70,
            InvokeFlavor::Static => 0x71,
            InvokeFlavor::Interface => 0x72,
        };
        if range {
            base + 6
        } else {
            base
        }
    }
}

/// Method reference used by invoke instructions. `owner` is dotted,
/// `params`/`ret` are type descriptors.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MethodRefSpec {
    pub owner: String,
    pub name: String,
    pub params: Vec<String>,
    pub ret: String,
}

impl MethodRefSpec {
    pub fn new(owner: &str, name: &str, params: &[&str], ret: &str) -> Self {
        MethodRefSpec {
            owner: owner.to_string(),
            name: name.to_string(),
            params: params.iter().map(|s| s.to_string()).collect(),
            ret: ret.to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Ins {
    Label(String),
    Nop,
    Const4 { reg: u8, val: i8 },
    ConstWide16 { reg: u8, val: i16 },
    ConstString { reg: u8, val: String },
    NewInstance { reg: u8, class: String },
    CheckCast { reg: u8, class: String },
    MoveResult { reg: u8 },
    MoveResultObject { reg: u8 },
    AddInt2Addr { a: u8, b: u8 },
    Invoke { flavor: InvokeFlavor, regs: Vec<u8>, target: MethodRefSpec },
    InvokeRange { flavor: InvokeFlavor, first: u16, count: u8, target: MethodRefSpec },
    ReturnVoid,
    Return { reg: u8 },
    ReturnObject { reg: u8 },
    IfEqz { reg: u8, target: String },
    IfNez { reg: u8, target: String },
    Goto { target: String },
    Goto16 { target: String },
    Throw { reg: u8 },
    PackedSwitch { reg: u8, first_key: i32, targets: Vec<String> },
    SparseSwitch { reg: u8, keys: Vec<i32>, targets: Vec<String> },
    FillArrayData { reg: u8, width: u16, data: Vec<u8> },
}

impl Ins {
    /// Size in 16-bit code units; labels are zero-width.
    fn units(&self) -> u32 {
        match self {
            Ins::Label(_) => 0,
            Ins::Nop
            | Ins::Const4 { .. }
            | Ins::MoveResult { .. }
            | Ins::MoveResultObject { .. }
            | Ins::AddInt2Addr { .. }
            | Ins::ReturnVoid
            | Ins::Return { .. }
            | Ins::ReturnObject { .. }
            | Ins::Goto { .. }
            | Ins::Throw { .. } => 1,
            Ins::ConstWide16 { .. }
            | Ins::ConstString { .. }
            | Ins::NewInstance { .. }
            | Ins::CheckCast { .. }
            | Ins::IfEqz { .. }
            | Ins::IfNez { .. }
            | Ins::Goto16 { .. } => 2,
            Ins::Invoke { .. }
            | Ins::InvokeRange { .. }
            | Ins::PackedSwitch { .. }
            | Ins::SparseSwitch { .. }
            | Ins::FillArrayData { .. } => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrySpec {
    pub start: String,
    pub end: String,
    pub handler: String,
    /// Dotted exception class, or `None` for a catch-all.
    pub catch_type: Option<String>,
}

#[derive(Clone, Debug)]
pub struct MethodSpec {
    pub name: String,
    /// Parameter type descriptors.
    pub params: Vec<String>,
    /// Return type descriptor.
    pub ret: String,
    pub kind: MethodKind,
    /// Registers below the parameter window.
    pub locals: u16,
    pub code: Option<Vec<Ins>>,
    pub tries: Vec<TrySpec>,
}

impl MethodSpec {
    pub fn virtual_method(name: &str, params: &[&str], ret: &str, code: Vec<Ins>) -> Self {
        MethodSpec {
            name: name.to_string(),
            params: params.iter().map(|s| s.to_string()).collect(),
            ret: ret.to_string(),
            kind: MethodKind::Virtual,
            locals: 4,
            code: Some(code),
            tries: Vec::new(),
        }
    }

    pub fn constructor(code: Vec<Ins>) -> Self {
        MethodSpec {
            name: "<init>".to_string(),
            params: Vec::new(),
            ret: "V".to_string(),
            kind: MethodKind::Direct,
            locals: 4,
            code: Some(code),
            tries: Vec::new(),
        }
    }

    pub fn abstract_method(name: &str, params: &[&str], ret: &str) -> Self {
        MethodSpec {
            name: name.to_string(),
            params: params.iter().map(|s| s.to_string()).collect(),
            ret: ret.to_string(),
            kind: MethodKind::Virtual,
            locals: 0,
            code: None,
            tries: Vec::new(),
        }
    }

    fn ins_words(&self) -> u16 {
        let this = match self.kind {
            MethodKind::Virtual => 1,
            MethodKind::Direct => {
                if self.name == "<init>" {
                    1
                } else {
                    0
                }
            }
        };
        this + self.params.iter().map(|p| type_words(p)).sum::<u16>()
    }

    fn access_flags(&self) -> u32 {
        let mut f = ACC_PUBLIC;
        if self.name == "<init>" {
            f |= ACC_CONSTRUCTOR;
        } else if self.kind == MethodKind::Direct {
            f |= ACC_STATIC;
        }
        if self.code.is_none() {
            f |= ACC_ABSTRACT;
        }
        f
    }
}

fn type_words(desc: &str) -> u16 {
    match desc.as_bytes()[0] {
        b'J' | b'D' => 2,
        _ => 1,
    }
}

#[derive(Clone, Debug)]
pub struct ClassSpec {
    /// Dotted name.
    pub name: String,
    /// Dotted superclass name.
    pub super_name: String,
    pub interfaces: Vec<String>,
    pub methods: Vec<MethodSpec>,
}

impl ClassSpec {
    pub fn new(name: &str, super_name: &str) -> Self {
        ClassSpec {
            name: name.to_string(),
            super_name: super_name.to_string(),
            interfaces: Vec::new(),
            methods: Vec::new(),
        }
    }

    pub fn method(mut self, m: MethodSpec) -> Self {
        self.methods.push(m);
        self
    }
}

#[derive(Default)]
pub struct DexBuilder {
    classes: Vec<ClassSpec>,
}

impl DexBuilder {
    pub fn new() -> Self {
        DexBuilder::default()
    }

    pub fn class(mut self, c: ClassSpec) -> Self {
        self.classes.push(c);
        self
    }

    pub fn build(&self) -> Vec<u8> {
        Emitter::new(&self.classes).emit()
    }
}

fn shorty_char(desc: &str) -> char {
    match desc.as_bytes()[0] {
        b'L' | b'[' => 'L',
        c => c as char,
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord, Clone)]
struct ProtoKey {
    ret: String,
    params: Vec<String>,
}

struct Emitter<'a> {
    classes: &'a [ClassSpec],
    strings: Vec<String>,
    types: Vec<String>,
    protos: Vec<ProtoKey>,
    methods: Vec<(u32, u32, u32)>, // class type idx, proto idx, name string idx
}

impl<'a> Emitter<'a> {
    fn new(classes: &'a [ClassSpec]) -> Self {
        Emitter {
            classes,
            strings: Vec::new(),
            types: Vec::new(),
            protos: Vec::new(),
            methods: Vec::new(),
        }
    }

    fn collect_tables(&mut self) {
        let mut strings = std::collections::BTreeSet::new();
        let mut types = std::collections::BTreeSet::new();
        let mut protos = std::collections::BTreeSet::new();

        let add_type = |types: &mut std::collections::BTreeSet<String>,
                            strings: &mut std::collections::BTreeSet<String>,
                            desc: String| {
            strings.insert(desc.clone());
            types.insert(desc);
        };
        let add_proto =
            |protos: &mut std::collections::BTreeSet<ProtoKey>,
             types: &mut std::collections::BTreeSet<String>,
             strings: &mut std::collections::BTreeSet<String>,
             params: &[String],
             ret: &str| {
                let mut shorty = String::new();
                shorty.push(shorty_char(ret));
                for p in params {
                    shorty.push(shorty_char(p));
                }
                strings.insert(shorty);
                strings.insert(ret.to_string());
                types.insert(ret.to_string());
                for p in params {
                    strings.insert(p.clone());
                    types.insert(p.clone());
                }
                protos.insert(ProtoKey {
                    ret: ret.to_string(),
                    params: params.to_vec(),
                });
            };

        for c in self.classes {
            add_type(&mut types, &mut strings, obj(&c.name));
            add_type(&mut types, &mut strings, obj(&c.super_name));
            for i in &c.interfaces {
                add_type(&mut types, &mut strings, obj(i));
            }
            for m in &c.methods {
                strings.insert(m.name.clone());
                add_proto(&mut protos, &mut types, &mut strings, &m.params, &m.ret);
                for t in &m.tries {
                    if let Some(ct) = &t.catch_type {
                        add_type(&mut types, &mut strings, obj(ct));
                    }
                }
                for ins in m.code.iter().flatten() {
                    match ins {
                        Ins::ConstString { val, .. } => {
                            strings.insert(val.clone());
                        }
                        Ins::NewInstance { class, .. } | Ins::CheckCast { class, .. } => {
                            add_type(&mut types, &mut strings, obj(class));
                        }
                        Ins::Invoke { target, .. } | Ins::InvokeRange { target, .. } => {
                            add_type(&mut types, &mut strings, obj(&target.owner));
                            strings.insert(target.name.clone());
                            add_proto(
                                &mut protos,
                                &mut types,
                                &mut strings,
                                &target.params,
                                &target.ret,
                            );
                        }
                        _ => {}
                    }
                }
            }
        }

        self.strings = strings.into_iter().collect();
        self.types = types.into_iter().collect();
        self.protos = protos.into_iter().collect();

        // Method ids: declared methods plus invoke targets, sorted by
        // (class_idx, name_idx, proto_idx) as the format requires.
        let mut methods = std::collections::BTreeSet::new();
        for c in self.classes {
            for m in &c.methods {
                methods.insert((
                    self.type_idx(&obj(&c.name)),
                    self.string_idx(&m.name),
                    self.proto_idx(&m.params, &m.ret),
                ));
                for ins in m.code.iter().flatten() {
                    if let Ins::Invoke { target, .. } | Ins::InvokeRange { target, .. } = ins {
                        methods.insert((
                            self.type_idx(&obj(&target.owner)),
                            self.string_idx(&target.name),
                            self.proto_idx(&target.params, &target.ret),
                        ));
                    }
                }
            }
        }
        self.methods = methods
            .into_iter()
            .map(|(c, n, p)| (c, p, n))
            .collect();
        // Restore (class, name, proto) sort despite storing proto before name.
        self.methods
            .sort_by_key(|&(c, p, n)| (c, n, p));
    }

    fn string_idx(&self, s: &str) -> u32 {
        self.strings.binary_search_by(|x| x.as_str().cmp(s)).unwrap() as u32
    }

    fn type_idx(&self, desc: &str) -> u32 {
        self.types.binary_search_by(|x| x.as_str().cmp(desc)).unwrap() as u32
    }

    fn proto_idx(&self, params: &[String], ret: &str) -> u32 {
        let key = ProtoKey {
            ret: ret.to_string(),
            params: params.to_vec(),
        };
        self.protos.binary_search(&key).unwrap() as u32
    }

    fn method_idx(&self, class: u32, name: u32, proto: u32) -> u32 {
        self.methods
            .iter()
            .position(|&(c, p, n)| c == class && p == proto && n == name)
            .unwrap() as u32
    }

    /// Classes ordered so superclasses defined in this dex come first.
    fn class_order(&self) -> Vec<usize> {
        let by_name: BTreeMap<&str, usize> = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.as_str(), i))
            .collect();
        let mut order = Vec::new();
        let mut placed = vec![false; self.classes.len()];
        fn place(
            i: usize,
            classes: &[ClassSpec],
            by_name: &BTreeMap<&str, usize>,
            placed: &mut [bool],
            order: &mut Vec<usize>,
        ) {
            if placed[i] {
                return;
            }
            placed[i] = true;
            if let Some(&s) = by_name.get(classes[i].super_name.as_str()) {
                place(s, classes, by_name, placed, order);
            }
            order.push(i);
        }
        for i in 0..self.classes.len() {
            place(i, self.classes, &by_name, &mut placed, &mut order);
        }
        order
    }

    fn emit(mut self) -> Vec<u8> {
        self.collect_tables();

        let s_count = self.strings.len();
        let t_count = self.types.len();
        let p_count = self.protos.len();
        let m_count = self.methods.len();
        let c_count = self.classes.len();

        let header_size = 0x70u32;
        let string_ids_off = header_size;
        let type_ids_off = string_ids_off + 4 * s_count as u32;
        let proto_ids_off = type_ids_off + 4 * t_count as u32;
        let method_ids_off = proto_ids_off + 12 * p_count as u32;
        let class_defs_off = method_ids_off + 8 * m_count as u32;
        let data_off = class_defs_off + 32 * c_count as u32;

        // Data section, with every offset recorded file-absolute.
        let mut data = Vec::new();
        let abs = |data: &Vec<u8>| data_off + data.len() as u32;

        // Type lists: proto parameter lists and class interface lists.
        let mut type_list_offs: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
        let mut type_list_count = 0u32;
        let mut first_type_list = 0u32;
        {
            let mut lists: Vec<Vec<u32>> = Vec::new();
            for p in &self.protos {
                if !p.params.is_empty() {
                    lists.push(p.params.iter().map(|t| self.type_idx(t)).collect());
                }
            }
            for c in self.classes {
                if !c.interfaces.is_empty() {
                    lists.push(c.interfaces.iter().map(|t| self.type_idx(&obj(t))).collect());
                }
            }
            for list in lists {
                if type_list_offs.contains_key(&list) {
                    continue;
                }
                align4(&mut data);
                let off = abs(&data);
                if type_list_count == 0 {
                    first_type_list = off;
                }
                type_list_count += 1;
                put_u32(&mut data, list.len() as u32);
                for t in &list {
                    put_u16(&mut data, *t as u16);
                }
                type_list_offs.insert(list, off);
            }
        }

        // Code items.
        let mut code_offs: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        let mut code_count = 0u32;
        let mut first_code = 0u32;
        for (ci, c) in self.classes.iter().enumerate() {
            for (mi, m) in c.methods.iter().enumerate() {
                if let Some(code) = &m.code {
                    align4(&mut data);
                    let off = abs(&data);
                    if code_count == 0 {
                        first_code = off;
                    }
                    code_count += 1;
                    let body = self.assemble(m, code);
                    data.extend_from_slice(&body);
                    code_offs.insert((ci, mi), off);
                }
            }
        }

        // Class data items.
        let mut class_data_offs: BTreeMap<usize, u32> = BTreeMap::new();
        let mut first_class_data = 0u32;
        for (ci, c) in self.classes.iter().enumerate() {
            let off = abs(&data);
            if ci == 0 {
                first_class_data = off;
            }
            class_data_offs.insert(ci, off);
            let class_type = self.type_idx(&obj(&c.name));
            let mut direct: Vec<usize> = Vec::new();
            let mut virt: Vec<usize> = Vec::new();
            for (mi, m) in c.methods.iter().enumerate() {
                match m.kind {
                    MethodKind::Direct => direct.push(mi),
                    MethodKind::Virtual => virt.push(mi),
                }
            }
            let idx_of = |mi: usize| {
                let m = &c.methods[mi];
                self.method_idx(
                    class_type,
                    self.string_idx(&m.name),
                    self.proto_idx(&m.params, &m.ret),
                )
            };
            direct.sort_by_key(|&mi| idx_of(mi));
            virt.sort_by_key(|&mi| idx_of(mi));

            put_uleb(&mut data, 0); // static fields
            put_uleb(&mut data, 0); // instance fields
            put_uleb(&mut data, direct.len() as u32);
            put_uleb(&mut data, virt.len() as u32);
            for group in [&direct, &virt] {
                let mut last = 0u32;
                for &mi in group.iter() {
                    let m = &c.methods[mi];
                    let idx = idx_of(mi);
                    put_uleb(&mut data, idx - last);
                    last = idx;
                    put_uleb(&mut data, m.access_flags());
                    put_uleb(&mut data, *code_offs.get(&(ci, mi)).unwrap_or(&0));
                }
            }
        }

        // String data.
        let mut string_data_offs = Vec::with_capacity(s_count);
        let first_string_data = abs(&data);
        for s in &self.strings {
            string_data_offs.push(abs(&data));
            put_uleb(&mut data, s.encode_utf16().count() as u32);
            data.extend_from_slice(s.as_bytes()); // ASCII fixtures: MUTF-8 == UTF-8
            data.push(0);
        }

        // Map list.
        align4(&mut data);
        let map_off = abs(&data);
        {
            let mut entries: Vec<(u16, u32, u32)> = vec![(0x0000, 1, 0)];
            for e in [
                (0x0001, s_count as u32, string_ids_off),
                (0x0002, t_count as u32, type_ids_off),
                (0x0003, p_count as u32, proto_ids_off),
                (0x0005, m_count as u32, method_ids_off),
                (0x0006, c_count as u32, class_defs_off),
                (0x1001, type_list_count, first_type_list),
                (0x2001, code_count, first_code),
                (0x2000, c_count as u32, first_class_data),
                (0x2002, s_count as u32, first_string_data),
            ] {
                if e.1 > 0 {
                    entries.push(e);
                }
            }
            entries.push((0x1000, 1, map_off));
            entries.sort_by_key(|e| e.2);
            put_u32(&mut data, entries.len() as u32);
            for (ty, size, off) in entries {
                put_u16(&mut data, ty);
                put_u16(&mut data, 0);
                put_u32(&mut data, size);
                put_u32(&mut data, off);
            }
        }

        let file_size = data_off + data.len() as u32;
        let mut out = Vec::with_capacity(file_size as usize);

        // Header.
        out.extend_from_slice(b"dex\n035\0");
        put_u32(&mut out, 0); // checksum, patched below
        out.extend_from_slice(&[0u8; 20]); // signature left zeroed
        put_u32(&mut out, file_size);
        put_u32(&mut out, header_size);
        put_u32(&mut out, 0x1234_5678);
        put_u32(&mut out, 0); // link size
        put_u32(&mut out, 0); // link off
        put_u32(&mut out, map_off);
        put_u32(&mut out, s_count as u32);
        put_u32(&mut out, string_ids_off);
        put_u32(&mut out, t_count as u32);
        put_u32(&mut out, type_ids_off);
        put_u32(&mut out, p_count as u32);
        put_u32(&mut out, proto_ids_off);
        put_u32(&mut out, 0); // field ids size
        put_u32(&mut out, 0); // field ids off
        put_u32(&mut out, m_count as u32);
        put_u32(&mut out, method_ids_off);
        put_u32(&mut out, c_count as u32);
        put_u32(&mut out, class_defs_off);
        put_u32(&mut out, data.len() as u32);
        put_u32(&mut out, data_off);

        // String ids.
        for off in string_data_offs {
            put_u32(&mut out, off);
        }
        // Type ids.
        for t in &self.types {
            put_u32(&mut out, self.string_idx(t));
        }
        // Proto ids.
        for p in &self.protos {
            let mut shorty = String::new();
            shorty.push(shorty_char(&p.ret));
            for q in &p.params {
                shorty.push(shorty_char(q));
            }
            put_u32(&mut out, self.string_idx(&shorty));
            put_u32(&mut out, self.type_idx(&p.ret));
            let list_off = if p.params.is_empty() {
                0
            } else {
                let key: Vec<u32> = p.params.iter().map(|t| self.type_idx(t)).collect();
                type_list_offs[&key]
            };
            put_u32(&mut out, list_off);
        }
        // Method ids.
        for &(class, proto, name) in &self.methods {
            put_u16(&mut out, class as u16);
            put_u16(&mut out, proto as u16);
            put_u32(&mut out, name);
        }
        // Class defs.
        for &ci in &self.class_order() {
            let c = &self.classes[ci];
            put_u32(&mut out, self.type_idx(&obj(&c.name)));
            put_u32(&mut out, ACC_PUBLIC);
            put_u32(&mut out, self.type_idx(&obj(&c.super_name)));
            let iface_off = if c.interfaces.is_empty() {
                0
            } else {
                let key: Vec<u32> = c.interfaces.iter().map(|t| self.type_idx(&obj(t))).collect();
                type_list_offs[&key]
            };
            put_u32(&mut out, iface_off);
            put_u32(&mut out, NO_INDEX); // source file
            put_u32(&mut out, 0); // annotations
            put_u32(&mut out, class_data_offs[&ci]);
            put_u32(&mut out, 0); // static values
        }

        out.extend_from_slice(&data);
        debug_assert_eq!(out.len() as u32, file_size);

        let checksum = adler32(&out[12..]);
        out[8..12].copy_from_slice(&checksum.to_le_bytes());
        out
    }

    /// Assembles one code item: resolves labels, lays out switch/array
    /// payloads after the instruction stream, encodes try blocks.
    fn assemble(&self, m: &MethodSpec, code: &[Ins]) -> Vec<u8> {
        // Pass 1: instruction offsets and label table.
        let mut labels: BTreeMap<&str, u32> = BTreeMap::new();
        let mut offsets = Vec::with_capacity(code.len());
        let mut pc = 0u32;
        for ins in code {
            offsets.push(pc);
            if let Ins::Label(name) = ins {
                labels.insert(name, pc);
            }
            pc += ins.units();
        }
        // Payloads start 4-byte aligned after the stream.
        let mut payload_offs = Vec::new();
        let mut payload_pc = pc + (pc & 1);
        for ins in code {
            let len = match ins {
                Ins::PackedSwitch { targets, .. } => 4 + 2 * targets.len() as u32,
                Ins::SparseSwitch { targets, .. } => 2 + 4 * targets.len() as u32,
                Ins::FillArrayData { width, data, .. } => {
                    let elems = data.len() as u32 / *width as u32;
                    4 + (elems * *width as u32 + 1) / 2
                }
                _ => continue,
            };
            payload_offs.push(payload_pc);
            payload_pc += len + (len & 1);
        }
        let insns_size = if payload_offs.is_empty() { pc } else { payload_pc };

        // Pass 2: encode.
        let mut units: Vec<u16> = Vec::with_capacity(insns_size as usize);
        let mut payload_units: Vec<u16> = Vec::new();
        let mut payload_i = 0;
        let mut outs = 0u16;
        let lab = |name: &str| -> u32 {
            *labels
                .get(name)
                .unwrap_or_else(|| panic!("undefined label {name}"))
        };
        for (i, ins) in code.iter().enumerate() {
            let at = offsets[i];
            match ins {
                Ins::Label(_) => {}
                Ins::Nop => units.push(0x0000),
                Ins::Const4 { reg, val } => {
                    units.push(0x12 | (*reg as u16) << 8 | ((*val as u16) & 0xf) << 12)
                }
                Ins::ConstWide16 { reg, val } => {
                    units.push(0x16 | (*reg as u16) << 8);
                    units.push(*val as u16);
                }
                Ins::ConstString { reg, val } => {
                    units.push(0x1a | (*reg as u16) << 8);
                    units.push(self.string_idx(val) as u16);
                }
                Ins::NewInstance { reg, class } => {
                    units.push(0x22 | (*reg as u16) << 8);
                    units.push(self.type_idx(&obj(class)) as u16);
                }
                Ins::CheckCast { reg, class } => {
                    units.push(0x1f | (*reg as u16) << 8);
                    units.push(self.type_idx(&obj(class)) as u16);
                }
                Ins::MoveResult { reg } => units.push(0x0a | (*reg as u16) << 8),
                Ins::MoveResultObject { reg } => units.push(0x0c | (*reg as u16) << 8),
                Ins::AddInt2Addr { a, b } => {
                    units.push(0xb0 | (*a as u16) << 8 | (*b as u16) << 12)
                }
                Ins::Invoke { flavor, regs, target } => {
                    outs = outs.max(regs.len() as u16);
                    let midx = self.method_idx(
                        self.type_idx(&obj(&target.owner)),
                        self.string_idx(&target.name),
                        self.proto_idx(&target.params, &target.ret),
                    );
                    let a = regs.len();
                    assert!(a <= 5, "35c takes at most five registers");
                    let g = if a == 5 { regs[4] as u16 } else { 0 };
                    units.push(flavor.opcode(false) as u16 | (a as u16) << 12 | g << 8);
                    units.push(midx as u16);
                    let mut word = 0u16;
                    for (k, r) in regs.iter().take(4).enumerate() {
                        word |= (*r as u16) << (4 * k);
                    }
                    units.push(word);
                }
                Ins::InvokeRange { flavor, first, count, target } => {
                    outs = outs.max(*count as u16);
                    let midx = self.method_idx(
                        self.type_idx(&obj(&target.owner)),
                        self.string_idx(&target.name),
                        self.proto_idx(&target.params, &target.ret),
                    );
                    units.push(flavor.opcode(true) as u16 | (*count as u16) << 8);
                    units.push(midx as u16);
                    units.push(*first);
                }
                Ins::ReturnVoid => units.push(0x0e),
                Ins::Return { reg } => units.push(0x0f | (*reg as u16) << 8),
                Ins::ReturnObject { reg } => units.push(0x11 | (*reg as u16) << 8),
                Ins::IfEqz { reg, target } => {
                    units.push(0x38 | (*reg as u16) << 8);
                    units.push((lab(target) as i32 - at as i32) as i16 as u16);
                }
                Ins::IfNez { reg, target } => {
                    units.push(0x39 | (*reg as u16) << 8);
                    units.push((lab(target) as i32 - at as i32) as i16 as u16);
                }
                Ins::Goto { target } => {
                    let rel = lab(target) as i32 - at as i32;
                    assert!((-128..=127).contains(&rel), "goto target out of range");
                    units.push(0x28 | ((rel as i8 as u8) as u16) << 8);
                }
                Ins::Goto16 { target } => {
                    units.push(0x29);
                    units.push((lab(target) as i32 - at as i32) as i16 as u16);
                }
                Ins::Throw { reg } => units.push(0x27 | (*reg as u16) << 8),
                Ins::PackedSwitch { reg, first_key, targets } => {
                    let poff = payload_offs[payload_i];
                    payload_i += 1;
                    units.push(0x2b | (*reg as u16) << 8);
                    let rel = poff as i32 - at as i32;
                    units.push(rel as u16);
                    units.push((rel >> 16) as u16);
                    payload_units.push(0x0100);
                    payload_units.push(targets.len() as u16);
                    push_i32(&mut payload_units, *first_key);
                    for t in targets {
                        push_i32(&mut payload_units, lab(t) as i32 - at as i32);
                    }
                    if payload_units.len() % 2 == 1 {
                        payload_units.push(0);
                    }
                }
                Ins::SparseSwitch { reg, keys, targets } => {
                    assert_eq!(keys.len(), targets.len());
                    let poff = payload_offs[payload_i];
                    payload_i += 1;
                    units.push(0x2c | (*reg as u16) << 8);
                    let rel = poff as i32 - at as i32;
                    units.push(rel as u16);
                    units.push((rel >> 16) as u16);
                    payload_units.push(0x0200);
                    payload_units.push(targets.len() as u16);
                    for k in keys {
                        push_i32(&mut payload_units, *k);
                    }
                    for t in targets {
                        push_i32(&mut payload_units, lab(t) as i32 - at as i32);
                    }
                    if payload_units.len() % 2 == 1 {
                        payload_units.push(0);
                    }
                }
                Ins::FillArrayData { reg, width, data } => {
                    let poff = payload_offs[payload_i];
                    payload_i += 1;
                    units.push(0x26 | (*reg as u16) << 8);
                    let rel = poff as i32 - at as i32;
                    units.push(rel as u16);
                    units.push((rel >> 16) as u16);
                    payload_units.push(0x0300);
                    payload_units.push(*width);
                    let elems = data.len() as u32 / *width as u32;
                    push_i32(&mut payload_units, elems as i32);
                    for pair in data.chunks(2) {
                        let lo = pair[0] as u16;
                        let hi = if pair.len() > 1 { pair[1] as u16 } else { 0 };
                        payload_units.push(lo | hi << 8);
                    }
                    if payload_units.len() % 2 == 1 {
                        payload_units.push(0);
                    }
                }
            }
        }
        if !payload_units.is_empty() {
            if units.len() % 2 == 1 {
                units.push(0x0000); // nop pad so payloads sit 4-byte aligned
            }
            units.extend_from_slice(&payload_units);
        }
        assert_eq!(units.len() as u32, insns_size, "layout mismatch in {}", m.name);

        let mut out = Vec::new();
        put_u16(&mut out, m.locals + m.ins_words());
        put_u16(&mut out, m.ins_words());
        put_u16(&mut out, outs);
        put_u16(&mut out, m.tries.len() as u16);
        put_u32(&mut out, 0); // debug info
        put_u32(&mut out, insns_size);
        for u in &units {
            put_u16(&mut out, *u);
        }
        if !m.tries.is_empty() {
            if insns_size % 2 == 1 {
                put_u16(&mut out, 0);
            }
            // try_items, then one encoded handler per try.
            let mut handler_offs = Vec::new();
            let mut handler_bytes = Vec::new();
            put_uleb(&mut handler_bytes, m.tries.len() as u32);
            for t in &m.tries {
                handler_offs.push(handler_bytes.len() as u32);
                match &t.catch_type {
                    Some(ct) => {
                        put_sleb(&mut handler_bytes, 1);
                        put_uleb(&mut handler_bytes, self.type_idx(&obj(ct)));
                        put_uleb(&mut handler_bytes, lab(&t.handler));
                    }
                    None => {
                        put_sleb(&mut handler_bytes, 0);
                        put_uleb(&mut handler_bytes, lab(&t.handler));
                    }
                }
            }
            for (t, hoff) in m.tries.iter().zip(&handler_offs) {
                let start = lab(&t.start);
                let end = lab(&t.end);
                put_u32(&mut out, start);
                put_u16(&mut out, (end - start) as u16);
                put_u16(&mut out, *hoff as u16);
            }
            out.extend_from_slice(&handler_bytes);
        }
        out
    }
}

fn push_i32(units: &mut Vec<u16>, v: i32) {
    units.push(v as u16);
    units.push((v >> 16) as u16);
}

fn align4(data: &mut Vec<u8>) {
    while data.len() % 4 != 0 {
        data.push(0);
    }
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_uleb(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            break;
        }
        out.push(byte | 0x80);
    }
}

fn put_sleb(out: &mut Vec<u8>, mut v: i32) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        let done = (v == 0 && byte & 0x40 == 0) || (v == -1 && byte & 0x40 != 0);
        if done {
            out.push(byte);
            break;
        }
        out.push(byte | 0x80);
    }
}

fn adler32(bytes: &[u8]) -> u32 {
    const MOD: u32 = 65521;
    let mut a = 1u32;
    let mut b = 0u32;
    for chunk in bytes.chunks(5552) {
        for &byte in chunk {
            a += byte as u32;
            b += a;
        }
        a %= MOD;
        b %= MOD;
    }
    (b << 16) | a
}
