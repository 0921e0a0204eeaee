//! Static analysis of Android Auto platform compliance in APKs.

pub mod apk;
pub mod axml;
pub mod dex;
