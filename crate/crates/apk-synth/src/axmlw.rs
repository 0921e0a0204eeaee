//! Binary Android XML writer.
//!
//! Emits the chunk layout used by compiled `AndroidManifest.xml` files:
//! an outer `RES_XML_TYPE` chunk containing a string pool, a resource map
//! for attribute names, namespace records, and start/end element records
//! with 20-byte attribute entries. Both UTF-16 and UTF-8 string pools are
//! supported.

const RES_XML_TYPE: u16 = 0x0003;
const RES_STRING_POOL_TYPE: u16 = 0x0001;
const RES_XML_RESOURCE_MAP_TYPE: u16 = 0x0180;
const RES_XML_START_NAMESPACE_TYPE: u16 = 0x0100;
const RES_XML_END_NAMESPACE_TYPE: u16 = 0x0101;
const RES_XML_START_ELEMENT_TYPE: u16 = 0x0102;
const RES_XML_END_ELEMENT_TYPE: u16 = 0x0103;

const UTF8_FLAG: u32 = 1 << 8;
const NO_ENTRY: u32 = 0xFFFF_FFFF;

const TYPE_REFERENCE: u8 = 0x01;
const TYPE_STRING: u8 = 0x03;
const TYPE_INT_DEC: u8 = 0x10;
const TYPE_INT_BOOLEAN: u8 = 0x12;

pub const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";

/// Attribute resource ids for the android-namespace names we emit.
fn attr_res_id(name: &str) -> Option<u32> {
    match name {
        "name" => Some(0x0101_0003),
        "exported" => Some(0x0101_0010),
        "value" => Some(0x0101_0024),
        "resource" => Some(0x0101_0025),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub enum XmlVal {
    Str(String),
    Bool(bool),
    Ref(u32),
    Int(i32),
}

impl XmlVal {
    /// Rendering shared by the textual fixture source and expected decoder
    /// output; references print as `@0x%08x` because resource tables are
    /// never consulted.
    pub fn render(&self) -> String {
        match self {
            XmlVal::Str(s) => s.clone(),
            XmlVal::Bool(b) => b.to_string(),
            XmlVal::Ref(id) => format!("@0x{id:08x}"),
            XmlVal::Int(v) => v.to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct XmlAttr {
    /// `true` when the attribute lives in the android namespace.
    pub android_ns: bool,
    pub name: String,
    pub value: XmlVal,
}

#[derive(Clone, Debug, Default)]
pub struct XmlElem {
    pub name: String,
    pub attrs: Vec<XmlAttr>,
    pub children: Vec<XmlElem>,
}

impl XmlElem {
    pub fn new(name: &str) -> Self {
        XmlElem {
            name: name.to_string(),
            ..XmlElem::default()
        }
    }

    pub fn attr(mut self, name: &str, value: XmlVal) -> Self {
        self.attrs.push(XmlAttr {
            android_ns: true,
            name: name.to_string(),
            value,
        });
        self
    }

    pub fn plain_attr(mut self, name: &str, value: XmlVal) -> Self {
        self.attrs.push(XmlAttr {
            android_ns: false,
            name: name.to_string(),
            value,
        });
        self
    }

    pub fn child(mut self, child: XmlElem) -> Self {
        self.children.push(child);
        self
    }
}

#[derive(Clone, Debug)]
pub struct XmlDoc {
    pub root: XmlElem,
}

impl XmlDoc {
    pub fn new(root: XmlElem) -> Self {
        XmlDoc { root }
    }

    /// Renders the document as ordinary textual XML. Used as the
    /// human-readable source of checked-in binary fixtures.
    pub fn to_text_xml(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n");
        render_elem(&self.root, 0, true, &mut out);
        out
    }

    /// Encodes the document in the binary AXML chunk format.
    pub fn to_binary(&self, utf8_pool: bool) -> Vec<u8> {
        let mut pool = PoolBuilder::default();

        // Attribute names with resource ids must occupy the first pool
        // slots so the resource map can be a plain prefix table.
        let mut res_ids = Vec::new();
        collect_mapped_attr_names(&self.root, &mut pool, &mut res_ids);
        pool.intern("android");
        pool.intern(ANDROID_NS);
        collect_strings(&self.root, &mut pool);

        let mut body = Vec::new();
        body.extend_from_slice(&pool.encode(utf8_pool));
        body.extend_from_slice(&encode_resource_map(&res_ids));

        // <manifest> carries the android namespace declaration.
        let prefix_idx = pool.index_of("android");
        let uri_idx = pool.index_of(ANDROID_NS);
        body.extend_from_slice(&encode_namespace(
            RES_XML_START_NAMESPACE_TYPE,
            prefix_idx,
            uri_idx,
        ));
        encode_elem(&self.root, &pool, uri_idx, &mut body);
        body.extend_from_slice(&encode_namespace(
            RES_XML_END_NAMESPACE_TYPE,
            prefix_idx,
            uri_idx,
        ));

        let mut out = Vec::with_capacity(body.len() + 8);
        put_u16(&mut out, RES_XML_TYPE);
        put_u16(&mut out, 8);
        put_u32(&mut out, (body.len() + 8) as u32);
        out.extend_from_slice(&body);
        out
    }
}

fn render_elem(elem: &XmlElem, depth: usize, ns_decl: bool, out: &mut String) {
    let pad = "  ".repeat(depth);
    out.push_str(&format!("{pad}<{}", elem.name));
    if ns_decl {
        out.push_str(&format!(" xmlns:android=\"{ANDROID_NS}\""));
    }
    for a in &elem.attrs {
        let qname = if a.android_ns {
            format!("android:{}", a.name)
        } else {
            a.name.clone()
        };
        out.push_str(&format!(" {qname}=\"{}\"", a.value.render()));
    }
    if elem.children.is_empty() {
        out.push_str(" />\n");
    } else {
        out.push_str(">\n");
        for c in &elem.children {
            render_elem(c, depth + 1, false, out);
        }
        out.push_str(&format!("{pad}</{}>\n", elem.name));
    }
}

#[derive(Default)]
struct PoolBuilder {
    strings: Vec<String>,
}

impl PoolBuilder {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(i) = self.strings.iter().position(|x| x == s) {
            return i as u32;
        }
        self.strings.push(s.to_string());
        (self.strings.len() - 1) as u32
    }

    fn index_of(&self, s: &str) -> u32 {
        self.strings
            .iter()
            .position(|x| x == s)
            .map(|i| i as u32)
            .unwrap_or(NO_ENTRY)
    }

    fn encode(&self, utf8: bool) -> Vec<u8> {
        let mut data = Vec::new();
        let mut offsets = Vec::new();
        for s in &self.strings {
            offsets.push(data.len() as u32);
            if utf8 {
                encode_utf8_entry(s, &mut data);
            } else {
                encode_utf16_entry(s, &mut data);
            }
        }
        while data.len() % 4 != 0 {
            data.push(0);
        }

        let header_size = 28u16;
        let strings_start = header_size as u32 + 4 * self.strings.len() as u32;
        let total = strings_start + data.len() as u32;

        let mut out = Vec::new();
        put_u16(&mut out, RES_STRING_POOL_TYPE);
        put_u16(&mut out, header_size);
        put_u32(&mut out, total);
        put_u32(&mut out, self.strings.len() as u32);
        put_u32(&mut out, 0); // style count
        put_u32(&mut out, if utf8 { UTF8_FLAG } else { 0 });
        put_u32(&mut out, strings_start);
        put_u32(&mut out, 0); // styles start
        for off in offsets {
            put_u32(&mut out, off);
        }
        out.extend_from_slice(&data);
        out
    }
}

fn encode_utf16_entry(s: &str, out: &mut Vec<u8>) {
    let units: Vec<u16> = s.encode_utf16().collect();
    assert!(units.len() < 0x8000, "string too long for fixture writer");
    put_u16(out, units.len() as u16);
    for u in units {
        put_u16(out, u);
    }
    put_u16(out, 0);
}

fn encode_utf8_entry(s: &str, out: &mut Vec<u8>) {
    let char_len = s.encode_utf16().count();
    let byte_len = s.len();
    assert!(char_len < 0x80 && byte_len < 0x80, "fixture strings are short");
    out.push(char_len as u8);
    out.push(byte_len as u8);
    out.extend_from_slice(s.as_bytes());
    out.push(0);
}

fn collect_mapped_attr_names(elem: &XmlElem, pool: &mut PoolBuilder, res_ids: &mut Vec<u32>) {
    for a in &elem.attrs {
        if a.android_ns {
            if let Some(id) = attr_res_id(&a.name) {
                let before = pool.strings.len();
                let idx = pool.intern(&a.name);
                if pool.strings.len() > before {
                    debug_assert_eq!(idx as usize, res_ids.len());
                    res_ids.push(id);
                }
            }
        }
    }
    for c in &elem.children {
        collect_mapped_attr_names(c, pool, res_ids);
    }
}

fn collect_strings(elem: &XmlElem, pool: &mut PoolBuilder) {
    pool.intern(&elem.name);
    for a in &elem.attrs {
        pool.intern(&a.name);
        if let XmlVal::Str(s) = &a.value {
            pool.intern(s);
        }
    }
    for c in &elem.children {
        collect_strings(c, pool);
    }
}

fn encode_resource_map(res_ids: &[u32]) -> Vec<u8> {
    let mut out = Vec::new();
    put_u16(&mut out, RES_XML_RESOURCE_MAP_TYPE);
    put_u16(&mut out, 8);
    put_u32(&mut out, 8 + 4 * res_ids.len() as u32);
    for id in res_ids {
        put_u32(&mut out, *id);
    }
    out
}

fn encode_namespace(chunk_type: u16, prefix_idx: u32, uri_idx: u32) -> Vec<u8> {
    let mut out = Vec::new();
    put_u16(&mut out, chunk_type);
    put_u16(&mut out, 16);
    put_u32(&mut out, 24);
    put_u32(&mut out, 0); // line
    put_u32(&mut out, NO_ENTRY); // comment
    put_u32(&mut out, prefix_idx);
    put_u32(&mut out, uri_idx);
    out
}

fn encode_elem(elem: &XmlElem, pool: &PoolBuilder, android_uri_idx: u32, out: &mut Vec<u8>) {
    let name_idx = pool.index_of(&elem.name);

    let mut chunk = Vec::new();
    put_u16(&mut chunk, RES_XML_START_ELEMENT_TYPE);
    put_u16(&mut chunk, 16);
    let size = 36 + 20 * elem.attrs.len() as u32;
    put_u32(&mut chunk, size);
    put_u32(&mut chunk, 0); // line
    put_u32(&mut chunk, NO_ENTRY); // comment
    put_u32(&mut chunk, NO_ENTRY); // element namespace
    put_u32(&mut chunk, name_idx);
    put_u16(&mut chunk, 20); // attribute start
    put_u16(&mut chunk, 20); // attribute size
    put_u16(&mut chunk, elem.attrs.len() as u16);
    put_u16(&mut chunk, 0); // id index
    put_u16(&mut chunk, 0); // class index
    put_u16(&mut chunk, 0); // style index
    for a in &elem.attrs {
        let ns = if a.android_ns { android_uri_idx } else { NO_ENTRY };
        put_u32(&mut chunk, ns);
        put_u32(&mut chunk, pool.index_of(&a.name));
        let (raw, data_type, data) = match &a.value {
            XmlVal::Str(s) => {
                let idx = pool.index_of(s);
                (idx, TYPE_STRING, idx)
            }
            XmlVal::Bool(b) => (NO_ENTRY, TYPE_INT_BOOLEAN, if *b { 0xFFFF_FFFF } else { 0 }),
            XmlVal::Ref(id) => (NO_ENTRY, TYPE_REFERENCE, *id),
            XmlVal::Int(v) => (NO_ENTRY, TYPE_INT_DEC, *v as u32),
        };
        put_u32(&mut chunk, raw);
        put_u16(&mut chunk, 8); // typed value size
        chunk.push(0); // res0
        chunk.push(data_type);
        put_u32(&mut chunk, data);
    }
    out.extend_from_slice(&chunk);

    for c in &elem.children {
        encode_elem(c, pool, android_uri_idx, out);
    }

    put_u16(out, RES_XML_END_ELEMENT_TYPE);
    put_u16(out, 16);
    put_u32(out, 24);
    put_u32(out, 0); // line
    put_u32(out, NO_ENTRY); // comment
    put_u32(out, NO_ENTRY); // namespace
    put_u32(out, name_idx);
}

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}
