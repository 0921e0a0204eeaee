//! Binary Android XML (AXML) decoding and manifest model extraction.
//!
//! Decodes the chunk stream of a compiled `AndroidManifest.xml` into an
//! element tree, then lifts the pieces the analysis needs: the package
//! name, meta-data entries, and service declarations with their intent
//! filter actions. Attribute namespaces are ignored; matching is by local
//! name. Resource references are rendered symbolically as `@0xHHHHHHHH`
//! since no resource table is consulted.

use std::collections::BTreeSet;

use thiserror::Error;

const RES_XML_TYPE: u16 = 0x0003;
const RES_STRING_POOL_TYPE: u16 = 0x0001;
const RES_XML_START_ELEMENT_TYPE: u16 = 0x0102;
const RES_XML_END_ELEMENT_TYPE: u16 = 0x0103;

const UTF8_FLAG: u32 = 1 << 8;
const NO_ENTRY: u32 = 0xFFFF_FFFF;

const TYPE_NULL: u8 = 0x00;
const TYPE_REFERENCE: u8 = 0x01;
const TYPE_STRING: u8 = 0x03;
const TYPE_INT_DEC: u8 = 0x10;
const TYPE_INT_HEX: u8 = 0x11;
const TYPE_INT_BOOLEAN: u8 = 0x12;

/// Meta-data name that marks an app as declaring Android Auto support.
pub const AUTO_METADATA_NAME: &str = "com.google.android.gms.car.application";
/// Intent action identifying a media browser service.
pub const BROWSE_ACTION: &str = "android.media.browse.MediaBrowserService";
/// Intent action routing Assistant play-from-search requests.
pub const SEARCH_ACTION: &str = "android.media.action.MEDIA_PLAY_FROM_SEARCH";

#[derive(Debug, Error)]
pub enum AxmlError {
    #[error("not a binary XML document (chunk type 0x{0:04x})")]
    NotAxml(u16),
    #[error("chunk at offset {offset} exceeds its enclosing bounds")]
    TruncatedChunk { offset: usize },
    #[error("string pool corrupt: {0}")]
    StringPoolCorrupt(String),
}

/// Decoded XML element with attributes resolved to strings.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct XmlNode {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<XmlNode>,
}

impl XmlNode {
    pub fn attr(&self, local_name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(n, _)| n == local_name)
            .map(|(_, v)| v.as_str())
    }

    fn children_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a XmlNode> {
        self.children.iter().filter(move |c| c.name == name)
    }
}

/// One `<service>` declaration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServiceDecl {
    /// Fully qualified class name (relative manifest names resolved).
    pub class_name: String,
    pub intent_actions: BTreeSet<String>,
    pub exported: bool,
}

/// Decoded manifest content relevant to compliance analysis.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ManifestModel {
    pub package_name: String,
    /// (name, resource-or-value) pairs of every meta-data element.
    pub meta_data: Vec<(String, String)>,
    pub services: Vec<ServiceDecl>,
    /// Whether the automotive app descriptor meta-data entry is present.
    pub uses_auto_descriptor: bool,
}

/// A manifest-declared service that speaks the media browser protocol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AutoComponentRef {
    pub class_name: String,
    /// Whether the app-level automotive descriptor accompanies it.
    pub has_auto_descriptor: bool,
}

/// Decodes a compiled manifest into a [`ManifestModel`].
pub fn decode_manifest(manifest_bytes: &[u8]) -> Result<ManifestModel, AxmlError> {
    let root = decode_tree(manifest_bytes)?;
    let package_name = root.attr("package").unwrap_or_default().to_string();

    let mut model = ManifestModel {
        package_name,
        ..ManifestModel::default()
    };
    collect_meta_data(&root, &mut model.meta_data);

    for app in root.children_named("application") {
        for svc in app.children_named("service") {
            let raw_name = svc.attr("name").unwrap_or_default();
            let mut intent_actions = BTreeSet::new();
            for filter in svc.children_named("intent-filter") {
                for action in filter.children_named("action") {
                    if let Some(a) = action.attr("name") {
                        intent_actions.insert(a.to_string());
                    }
                }
            }
            model.services.push(ServiceDecl {
                class_name: resolve_class_name(&model.package_name, raw_name),
                intent_actions,
                exported: svc.attr("exported") == Some("true"),
            });
        }
    }

    model.uses_auto_descriptor = model
        .meta_data
        .iter()
        .any(|(name, _)| name == AUTO_METADATA_NAME);
    Ok(model)
}

/// Every service declaring the media browser action, tagged with the
/// app-level descriptor state.
pub fn auto_components(model: &ManifestModel) -> Vec<AutoComponentRef> {
    model
        .services
        .iter()
        .filter(|s| s.intent_actions.contains(BROWSE_ACTION))
        .map(|s| AutoComponentRef {
            class_name: s.class_name.clone(),
            has_auto_descriptor: model.uses_auto_descriptor,
        })
        .collect()
}

fn collect_meta_data(node: &XmlNode, out: &mut Vec<(String, String)>) {
    if node.name == "meta-data" {
        if let Some(name) = node.attr("name") {
            let value = node
                .attr("resource")
                .or_else(|| node.attr("value"))
                .unwrap_or_default();
            out.push((name.to_string(), value.to_string()));
        }
    }
    for c in &node.children {
        collect_meta_data(c, out);
    }
}

/// Android rules: a leading dot or a bare name is relative to the package.
fn resolve_class_name(package: &str, raw: &str) -> String {
    if raw.is_empty() || package.is_empty() {
        raw.to_string()
    } else if let Some(rest) = raw.strip_prefix('.') {
        format!("{package}.{rest}")
    } else if raw.contains('.') {
        raw.to_string()
    } else {
        format!("{package}.{raw}")
    }
}

/// Decodes the element tree of any AXML document.
pub fn decode_tree(bytes: &[u8]) -> Result<XmlNode, AxmlError> {
    let r = Reader { bytes };
    if bytes.len() < 8 {
        return Err(AxmlError::TruncatedChunk { offset: 0 });
    }
    let outer_type = r.u16(0)?;
    if outer_type != RES_XML_TYPE {
        return Err(AxmlError::NotAxml(outer_type));
    }
    let outer_size = r.u32(4)? as usize;
    if outer_size > bytes.len() || outer_size < 8 {
        return Err(AxmlError::TruncatedChunk { offset: 0 });
    }

    let mut pool: Option<StringPool> = None;
    let mut stack: Vec<XmlNode> = vec![XmlNode::default()];

    let mut pos = 8;
    while pos < outer_size {
        if pos + 8 > outer_size {
            return Err(AxmlError::TruncatedChunk { offset: pos });
        }
        let chunk_type = r.u16(pos)?;
        let header_size = r.u16(pos + 2)? as usize;
        let chunk_size = r.u32(pos + 4)? as usize;
        if chunk_size < 8 || pos + chunk_size > outer_size {
            return Err(AxmlError::TruncatedChunk { offset: pos });
        }
        match chunk_type {
            RES_STRING_POOL_TYPE => {
                pool = Some(StringPool::parse(r.bytes, pos, chunk_size)?);
            }
            RES_XML_START_ELEMENT_TYPE => {
                let pool = pool
                    .as_ref()
                    .ok_or_else(|| AxmlError::StringPoolCorrupt("no string pool before elements".into()))?;
                let node = parse_start_element(&r, pos, header_size, chunk_size, pool)?;
                stack.push(node);
            }
            RES_XML_END_ELEMENT_TYPE => {
                if stack.len() > 1 {
                    let done = stack.pop().expect("non-empty stack");
                    stack.last_mut().expect("root present").children.push(done);
                }
            }
            // String pools, namespaces, resource maps, cdata: skipped.
            _ => {}
        }
        pos += chunk_size;
    }

    let mut root_holder = stack.swap_remove(0);
    if root_holder.children.len() == 1 {
        Ok(root_holder.children.swap_remove(0))
    } else {
        // Zero or multiple roots: return the synthetic holder as-is.
        Ok(root_holder)
    }
}

fn parse_start_element(
    r: &Reader<'_>,
    chunk_at: usize,
    header_size: usize,
    chunk_size: usize,
    pool: &StringPool,
) -> Result<XmlNode, AxmlError> {
    let ext = chunk_at + header_size;
    let end = chunk_at + chunk_size;
    if ext + 20 > end {
        return Err(AxmlError::TruncatedChunk { offset: chunk_at });
    }
    let name_idx = r.u32(ext + 4)?;
    let attr_start = r.u16(ext + 8)? as usize;
    let attr_size = r.u16(ext + 10)? as usize;
    let attr_count = r.u16(ext + 12)? as usize;

    let name = pool.get(name_idx)?.to_string();
    let mut attrs = Vec::with_capacity(attr_count);
    for i in 0..attr_count {
        let at = ext + attr_start + i * attr_size;
        if at + 20 > end {
            return Err(AxmlError::TruncatedChunk { offset: at });
        }
        let attr_name_idx = r.u32(at + 4)?;
        let raw_value_idx = r.u32(at + 8)?;
        let data_type = r.bytes[at + 15];
        let data = r.u32(at + 16)?;

        let attr_name = pool.get(attr_name_idx)?.to_string();
        let value = if raw_value_idx != NO_ENTRY {
            pool.get(raw_value_idx)?.to_string()
        } else {
            render_typed(data_type, data, pool)?
        };
        attrs.push((attr_name, value));
    }
    Ok(XmlNode {
        name,
        attrs,
        children: Vec::new(),
    })
}

fn render_typed(data_type: u8, data: u32, pool: &StringPool) -> Result<String, AxmlError> {
    Ok(match data_type {
        TYPE_NULL => String::new(),
        TYPE_REFERENCE => format!("@0x{data:08x}"),
        TYPE_STRING => pool.get(data)?.to_string(),
        TYPE_INT_DEC => (data as i32).to_string(),
        TYPE_INT_HEX => format!("0x{data:x}"),
        TYPE_INT_BOOLEAN => (data != 0).to_string(),
        _ => format!("0x{data:08x}"),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn u16(&self, at: usize) -> Result<u16, AxmlError> {
        if at + 2 > self.bytes.len() {
            return Err(AxmlError::TruncatedChunk { offset: at });
        }
        Ok(u16::from_le_bytes([self.bytes[at], self.bytes[at + 1]]))
    }

    fn u32(&self, at: usize) -> Result<u32, AxmlError> {
        if at + 4 > self.bytes.len() {
            return Err(AxmlError::TruncatedChunk { offset: at });
        }
        Ok(u32::from_le_bytes([
            self.bytes[at],
            self.bytes[at + 1],
            self.bytes[at + 2],
            self.bytes[at + 3],
        ]))
    }
}

struct StringPool {
    strings: Vec<String>,
}

impl StringPool {
    fn parse(bytes: &[u8], chunk_at: usize, chunk_size: usize) -> Result<Self, AxmlError> {
        let r = Reader { bytes };
        let corrupt = |msg: &str| AxmlError::StringPoolCorrupt(msg.to_string());
        if chunk_size < 28 {
            return Err(corrupt("pool chunk shorter than its header"));
        }
        let count = r.u32(chunk_at + 8)? as usize;
        let flags = r.u32(chunk_at + 16)?;
        let strings_start = r.u32(chunk_at + 20)? as usize;
        let utf8 = flags & UTF8_FLAG != 0;
        let end = chunk_at + chunk_size;

        let mut strings = Vec::with_capacity(count);
        for i in 0..count {
            let off_at = chunk_at + 28 + 4 * i;
            if off_at + 4 > end {
                return Err(corrupt("offset table exceeds pool chunk"));
            }
            let str_at = chunk_at + strings_start + r.u32(off_at)? as usize;
            if str_at >= end {
                return Err(corrupt("string offset exceeds pool chunk"));
            }
            let s = if utf8 {
                read_utf8(bytes, str_at, end)?
            } else {
                read_utf16(bytes, str_at, end)?
            };
            strings.push(s);
        }
        Ok(StringPool { strings })
    }

    fn get(&self, idx: u32) -> Result<&str, AxmlError> {
        if idx == NO_ENTRY {
            return Ok("");
        }
        self.strings
            .get(idx as usize)
            .map(|s| s.as_str())
            .ok_or_else(|| AxmlError::StringPoolCorrupt(format!("index {idx} out of range")))
    }
}

fn read_utf8(bytes: &[u8], at: usize, end: usize) -> Result<String, AxmlError> {
    let corrupt = |msg: &str| AxmlError::StringPoolCorrupt(msg.to_string());
    let (_chars, n1) = read_len8(bytes, at, end).ok_or_else(|| corrupt("truncated UTF-8 length"))?;
    let (len, n2) =
        read_len8(bytes, at + n1, end).ok_or_else(|| corrupt("truncated UTF-8 length"))?;
    let start = at + n1 + n2;
    if start + len >= end {
        return Err(corrupt("UTF-8 string exceeds pool chunk"));
    }
    std::str::from_utf8(&bytes[start..start + len])
        .map(|s| s.to_string())
        .map_err(|e| corrupt(&format!("invalid UTF-8 data: {e}")))
}

fn read_len8(bytes: &[u8], at: usize, end: usize) -> Option<(usize, usize)> {
    if at >= end {
        return None;
    }
    let first = bytes[at] as usize;
    if first & 0x80 == 0 {
        Some((first, 1))
    } else if at + 1 < end {
        Some((((first & 0x7f) << 8) | bytes[at + 1] as usize, 2))
    } else {
        None
    }
}

fn read_utf16(bytes: &[u8], at: usize, end: usize) -> Result<String, AxmlError> {
    let corrupt = |msg: &str| AxmlError::StringPoolCorrupt(msg.to_string());
    let r = Reader { bytes };
    if at + 2 > end {
        return Err(corrupt("truncated UTF-16 length"));
    }
    let first = r.u16(at).map_err(|_| corrupt("truncated UTF-16 length"))? as usize;
    let (chars, header) = if first & 0x8000 == 0 {
        (first, 2)
    } else {
        if at + 4 > end {
            return Err(corrupt("truncated UTF-16 length"));
        }
        let second = r.u16(at + 2).map_err(|_| corrupt("truncated UTF-16 length"))? as usize;
        (((first & 0x7fff) << 16) | second, 4)
    };
    let start = at + header;
    if start + 2 * chars + 2 > end {
        return Err(corrupt("UTF-16 string exceeds pool chunk"));
    }
    let units: Vec<u16> = bytes[start..start + 2 * chars]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    String::from_utf16(&units).map_err(|e| corrupt(&format!("invalid UTF-16 data: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use apk_synth::apps;

    fn listing1_model() -> ManifestModel {
        let doc = apps::auto_manifest("com.example.music", true, true, false);
        decode_manifest(&doc.to_binary(false)).unwrap()
    }

    #[test]
    fn listing1_manifest_decodes() {
        let model = listing1_model();
        assert_eq!(model.package_name, "com.example.music");
        assert!(model.uses_auto_descriptor);
        assert_eq!(model.services.len(), 1);
        let svc = &model.services[0];
        assert_eq!(svc.class_name, "com.example.music.MusicService");
        assert!(svc.intent_actions.contains(BROWSE_ACTION));
        assert!(svc.exported);
    }

    #[test]
    fn utf8_pool_decodes_identically() {
        let doc = apps::auto_manifest("com.example.music", true, true, false);
        let a = decode_manifest(&doc.to_binary(false)).unwrap();
        let b = decode_manifest(&doc.to_binary(true)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reference_values_render_symbolically() {
        let model = listing1_model();
        let (name, value) = &model.meta_data[0];
        assert_eq!(name, AUTO_METADATA_NAME);
        assert_eq!(value, "@0x7f010000");
    }

    #[test]
    fn manifest_without_services() {
        let doc = apps::phone_manifest("com.example.phone");
        let model = decode_manifest(&doc.to_binary(false)).unwrap();
        assert_eq!(model.package_name, "com.example.phone");
        assert!(model.services.is_empty());
        assert!(!model.uses_auto_descriptor);
        assert!(auto_components(&model).is_empty());
    }

    #[test]
    fn auto_components_filters_browse_services() {
        let model = listing1_model();
        let comps = auto_components(&model);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].class_name, "com.example.music.MusicService");
        assert!(comps[0].has_auto_descriptor);

        // A second unrelated service must not appear.
        let mut two = model.clone();
        two.services.push(ServiceDecl {
            class_name: "com.example.music.SyncService".into(),
            intent_actions: BTreeSet::new(),
            exported: false,
        });
        assert_eq!(auto_components(&two).len(), 1);
    }

    #[test]
    fn wrong_magic_is_not_axml() {
        let err = decode_manifest(&[0x01, 0x00, 0x08, 0x00, 8, 0, 0, 0]).unwrap_err();
        assert!(matches!(err, AxmlError::NotAxml(0x0001)));
    }

    #[test]
    fn truncated_document_is_rejected() {
        let doc = apps::auto_manifest("com.example.music", true, true, false);
        let bytes = doc.to_binary(false);
        // Outer size claims more than the buffer holds.
        let err = decode_manifest(&bytes[..bytes.len() - 40]).unwrap_err();
        assert!(matches!(err, AxmlError::TruncatedChunk { .. }));
    }

    #[test]
    fn bad_string_index_is_pool_corrupt() {
        let doc = apps::phone_manifest("com.example.phone");
        let mut bytes = doc.to_binary(false);
        // The element name index lives 12 bytes into the start-element
        // chunk; stomp every plausible one with an absurd index.
        let len = bytes.len();
        let mut patched = false;
        for at in (8..len - 4).step_by(2) {
            if u16::from_le_bytes([bytes[at], bytes[at + 1]]) == 0x0102 {
                bytes[at + 20..at + 24].copy_from_slice(&0xFFFF_0000u32.to_le_bytes());
                patched = true;
                break;
            }
        }
        assert!(patched);
        let err = decode_manifest(&bytes).unwrap_err();
        assert!(matches!(err, AxmlError::StringPoolCorrupt(_)));
    }

    #[test]
    fn relative_service_names_resolve() {
        assert_eq!(resolve_class_name("com.app", ".Svc"), "com.app.Svc");
        assert_eq!(resolve_class_name("com.app", "Svc"), "com.app.Svc");
        assert_eq!(resolve_class_name("com.app", "org.lib.Svc"), "org.lib.Svc");
    }
}
