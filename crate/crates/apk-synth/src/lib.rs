//! Builders that synthesize minimal Android artifacts (ZIP containers,
//! binary `AndroidManifest.xml`, DEX files) for tests and fixtures.
//!
//! Everything here writes bytes directly from the published format layouts
//! and is kept independent of the reader code in `autocomply`, so the two
//! sides can cross-check each other.

pub mod apps;
pub mod axmlw;
pub mod dexw;
pub mod zipw;

pub use axmlw::{XmlDoc, XmlElem, XmlVal};
pub use dexw::{ClassSpec, DexBuilder, Ins, MethodKind, MethodSpec};
pub use zipw::{ZipEntrySpec, ZipMethod, ZipWriter};
