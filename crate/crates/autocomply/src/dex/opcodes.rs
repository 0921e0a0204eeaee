//! Per-opcode instruction formats from the published Dalvik bytecode
//! tables: code-unit length plus, where the first operand names a
//! register the instruction writes, the slot that register lives in.

/// Instruction encoding formats. The digit prefix is the length in
/// 16-bit code units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    F10x,
    F12x,
    F11n,
    F11x,
    F10t,
    F20t,
    F22x,
    F21t,
    F21s,
    F21h,
    F21c,
    F23x,
    F22b,
    F22t,
    F22s,
    F22c,
    F30t,
    F32x,
    F31i,
    F31t,
    F31c,
    F35c,
    F3rc,
    F45cc,
    F4rcc,
    F51l,
}

impl Format {
    pub fn units(self) -> u32 {
        use Format::*;
        match self {
            F10x | F12x | F11n | F11x | F10t => 1,
            F20t | F22x | F21t | F21s | F21h | F21c | F23x | F22b | F22t | F22s | F22c => 2,
            F30t | F32x | F31i | F31t | F31c | F35c | F3rc => 3,
            F45cc | F4rcc => 4,
            F51l => 5,
        }
    }
}

/// Where the written register of an instruction is encoded, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dest {
    None,
    /// Low nibble of the high byte of unit 0.
    A4,
    /// High byte of unit 0.
    A8,
    /// All of unit 1.
    A16,
}

#[derive(Clone, Copy, Debug)]
pub struct OpSpec {
    pub format: Format,
    pub dest: Dest,
}

const fn op(format: Format, dest: Dest) -> OpSpec {
    OpSpec { format, dest }
}

/// Looks up the spec of an opcode. Unused opcodes decode as single-unit
/// no-ops, which keeps length accounting exact on well-formed input.
pub fn op_spec(opcode: u8) -> OpSpec {
    use Dest::*;
    use Format::*;
    match opcode {
        0x00 => op(F10x, None),                     // nop
        0x01 => op(F12x, A4),                       // move
        0x02 => op(F22x, A8),                       // move/from16
        0x03 => op(F32x, A16),                      // move/16
        0x04 => op(F12x, A4),                       // move-wide
        0x05 => op(F22x, A8),                       // move-wide/from16
        0x06 => op(F32x, A16),                      // move-wide/16
        0x07 => op(F12x, A4),                       // move-object
        0x08 => op(F22x, A8),                       // move-object/from16
        0x09 => op(F32x, A16),                      // move-object/16
        0x0a..=0x0c => op(F11x, A8),                // move-result family
        0x0d => op(F11x, A8),                       // move-exception
        0x0e => op(F10x, None),                     // return-void
        0x0f..=0x11 => op(F11x, None),              // return family
        0x12 => op(F11n, A4),                       // const/4
        0x13 => op(F21s, A8),                       // const/16
        0x14 => op(F31i, A8),                       // const
        0x15 => op(F21h, A8),                       // const/high16
        0x16 => op(F21s, A8),                       // const-wide/16
        0x17 => op(F31i, A8),                       // const-wide/32
        0x18 => op(F51l, A8),                       // const-wide
        0x19 => op(F21h, A8),                       // const-wide/high16
        0x1a => op(F21c, A8),                       // const-string
        0x1b => op(F31c, A8),                       // const-string/jumbo
        0x1c => op(F21c, A8),                       // const-class
        0x1d | 0x1e => op(F11x, None),              // monitor-enter/exit
        0x1f => op(F21c, None),                     // check-cast
        0x20 => op(F22c, A4),                       // instance-of
        0x21 => op(F12x, A4),                       // array-length
        0x22 => op(F21c, A8),                       // new-instance
        0x23 => op(F22c, A4),                       // new-array
        0x24 => op(F35c, None),                     // filled-new-array
        0x25 => op(F3rc, None),                     // filled-new-array/range
        0x26 => op(F31t, None),                     // fill-array-data
        0x27 => op(F11x, None),                     // throw
        0x28 => op(F10t, None),                     // goto
        0x29 => op(F20t, None),                     // goto/16
        0x2a => op(F30t, None),                     // goto/32
        0x2b | 0x2c => op(F31t, None),              // packed/sparse-switch
        0x2d..=0x31 => op(F23x, A8),                // cmp family
        0x32..=0x37 => op(F22t, None),              // if-test
        0x38..=0x3d => op(F21t, None),              // if-testz
        0x3e..=0x43 => op(F10x, None),              // unused
        0x44..=0x4a => op(F23x, A8),                // aget family
        0x4b..=0x51 => op(F23x, None),              // aput family
        0x52..=0x58 => op(F22c, A4),                // iget family
        0x59..=0x5f => op(F22c, None),              // iput family
        0x60..=0x66 => op(F21c, A8),                // sget family
        0x67..=0x6d => op(F21c, None),              // sput family
        0x6e..=0x72 => op(F35c, None),              // invoke-kind
        0x73 => op(F10x, None),                     // unused
        0x74..=0x78 => op(F3rc, None),              // invoke-kind/range
        0x79 | 0x7a => op(F10x, None),              // unused
        0x7b..=0x8f => op(F12x, A4),                // unop family
        0x90..=0xaf => op(F23x, A8),                // binop family
        0xb0..=0xcf => op(F12x, A4),                // binop/2addr
        0xd0..=0xd7 => op(F22s, A4),                // binop/lit16
        0xd8..=0xe2 => op(F22b, A8),                // binop/lit8
        0xe3..=0xf9 => op(F10x, None),              // unused
        0xfa => op(F45cc, None),                    // invoke-polymorphic
        0xfb => op(F4rcc, None),                    // invoke-polymorphic/range
        0xfc => op(F35c, None),                     // invoke-custom
        0xfd => op(F3rc, None),                     // invoke-custom/range
        0xfe | 0xff => op(F21c, A8),                // const-method-handle/type
    }
}
