//! Word encodings packing a value, an optional sequence number and the
//! per-reader bits into one unbounded integer.
//!
//! Reader bits occupy positions `0..n`. Above them the value sits alone
//! (`ValueBits` layout, word = code * 2^n + bits) or is interleaved bit by
//! bit with the sequence number (`ValueSnBits` layout: value bits at even
//! offsets, sequence-number bits at odd offsets). Values map to integer
//! codes through a fixed injection so that bottom is encodable.

use std::fmt;

use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::history::Value;
use crate::sim::Word;

/// Injective value -> code mapping: bottom is 0, integer tokens shift by one.
pub fn value_code(v: &Value) -> Word {
    match v {
        Value::Bottom => Word::zero(),
        Value::Int(k) => Word::from(*k) + 1u32,
    }
}

/// Inverse of [`value_code`].
pub fn code_value(code: &Word) -> Result<Value, CodecError> {
    if code.is_zero() {
        return Ok(Value::Bottom);
    }
    let shifted = code - 1u32;
    shifted
        .to_u64()
        .map(Value::Int)
        .ok_or(CodecError::ValueCodeTooWide)
}

/// Fixed-width view of the `n` low-order reader bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReaderBits {
    mask: u64,
    width: usize,
}

impl ReaderBits {
    pub fn zero(width: usize) -> Self {
        assert!(width <= 64, "at most 64 reader bits supported");
        ReaderBits { mask: 0, width }
    }

    pub fn from_mask(mask: u64, width: usize) -> Self {
        assert!(width <= 64);
        ReaderBits {
            mask: if width == 64 { mask } else { mask & ((1 << width) - 1) },
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.width);
        self.mask >> i & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.width);
        self.mask |= 1 << i;
    }

    pub fn is_zero(&self) -> bool {
        self.mask == 0
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn set_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&i| self.get(i))
    }
}

impl fmt::Display for ReaderBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.width {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", u8::from(self.get(i)))?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordLayout {
    /// Value only above the reader bits.
    ValueBits,
    /// Value and sequence number interleaved above the reader bits.
    ValueSnBits,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("word has no sequence-number field in this layout")]
    NoSnField,
    #[error("decoded value code exceeds the representable token range")]
    ValueCodeTooWide,
    #[error("decoded sequence number exceeds 64 bits")]
    SnTooWide,
}

/// Encoder/decoder for one register's word layout.
#[derive(Debug, Clone)]
pub struct WordCodec {
    n: usize,
    layout: WordLayout,
    /// Width guard: encodings beyond this many bits raise a diagnostic (the
    /// word itself stays unbounded).
    pub width_guard: u32,
}

pub const DEFAULT_WIDTH_GUARD: u32 = 128;

fn interleave(value: &Word, sn: &Word) -> Word {
    let mut out = Word::zero();
    let top = value.bits().max(sn.bits());
    for i in 0..top {
        if value.bit(i) {
            out.set_bit(2 * i, true);
        }
        if sn.bit(i) {
            out.set_bit(2 * i + 1, true);
        }
    }
    out
}

fn deinterleave(high: &Word) -> (Word, Word) {
    let mut value = Word::zero();
    let mut sn = Word::zero();
    for i in 0..high.bits() {
        if high.bit(i) {
            if i % 2 == 0 {
                value.set_bit(i / 2, true);
            } else {
                sn.set_bit(i / 2, true);
            }
        }
    }
    (value, sn)
}

impl WordCodec {
    pub fn new(n: usize, layout: WordLayout) -> Self {
        WordCodec {
            n,
            layout,
            width_guard: DEFAULT_WIDTH_GUARD,
        }
    }

    pub fn reader_bits(&self) -> usize {
        self.n
    }

    /// Pack `(value, sn, bits)` into a word. `sn` is ignored by the
    /// value-only layout.
    pub fn encode(&self, v: &Value, sn: u64, bits: ReaderBits) -> Word {
        debug_assert_eq!(bits.width(), self.n);
        let code = value_code(v);
        let high = match self.layout {
            WordLayout::ValueBits => code,
            WordLayout::ValueSnBits => interleave(&code, &Word::from(sn)),
        };
        (high << self.n) | Word::from(bits.mask())
    }

    pub fn value(&self, w: &Word) -> Result<Value, CodecError> {
        let high = w >> self.n;
        let code = match self.layout {
            WordLayout::ValueBits => high,
            WordLayout::ValueSnBits => deinterleave(&high).0,
        };
        code_value(&code)
    }

    pub fn sn(&self, w: &Word) -> Result<u64, CodecError> {
        match self.layout {
            WordLayout::ValueBits => Err(CodecError::NoSnField),
            WordLayout::ValueSnBits => {
                let (_, sn) = deinterleave(&(w >> self.n));
                sn.to_u64().ok_or(CodecError::SnTooWide)
            }
        }
    }

    pub fn bits(&self, w: &Word) -> ReaderBits {
        let mut bits = ReaderBits::zero(self.n);
        for i in 0..self.n {
            if w.bit(i as u64) {
                bits.set(i);
            }
        }
        bits
    }

    /// The fetch&add amount that sets reader bit `i`.
    pub fn bit_amount(&self, i: usize) -> Word {
        debug_assert!(i < self.n || (self.n == 1 && i == 0));
        Word::one() << i
    }

    /// True when a word outgrows the configured width guard.
    pub fn exceeds_guard(&self, w: &Word) -> bool {
        w.bits() > u64::from(self.width_guard)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_only_layout_matches_initial_expression() {
        // Two readers, initial value 7, all bits clear: 7 * 2^2 = 28.
        let codec = WordCodec::new(2, WordLayout::ValueBits);
        let w = codec.encode(&Value::Int(6), 0, ReaderBits::zero(2));
        // Int(6) has code 7.
        assert_eq!(w, Word::from(28u32));
        assert_eq!(codec.value(&w).unwrap(), Value::Int(6));
        assert!(codec.bits(&w).is_zero());
    }

    #[test]
    fn zero_word_decodes_to_bottom() {
        let codec = WordCodec::new(2, WordLayout::ValueSnBits);
        let w = codec.encode(&Value::Bottom, 0, ReaderBits::zero(2));
        assert_eq!(w, Word::zero());
        assert_eq!(codec.value(&w).unwrap(), Value::Bottom);
        assert_eq!(codec.sn(&w).unwrap(), 0);
    }

    #[test]
    fn bit_projection_after_fetch_add() {
        // 29 = 28 + 2^0: value code 7, bit 0 set.
        let codec = WordCodec::new(2, WordLayout::ValueBits);
        let w = Word::from(29u32);
        assert_eq!(codec.value(&w).unwrap(), Value::Int(6));
        let bits = codec.bits(&w);
        assert!(bits.get(0));
        assert!(!bits.get(1));
        assert_eq!(bits.to_string(), "[1,0]");
    }

    #[test]
    fn sn_field_round_trips() {
        let codec = WordCodec::new(1, WordLayout::ValueSnBits);
        let w = codec.encode(&Value::Int(41), 9, ReaderBits::from_mask(1, 1));
        assert_eq!(codec.value(&w).unwrap(), Value::Int(41));
        assert_eq!(codec.sn(&w).unwrap(), 9);
        assert!(codec.bits(&w).get(0));
    }

    #[test]
    fn value_only_layout_has_no_sn() {
        let codec = WordCodec::new(2, WordLayout::ValueBits);
        let w = codec.encode(&Value::Int(3), 0, ReaderBits::zero(2));
        assert_eq!(codec.sn(&w), Err(CodecError::NoSnField));
    }

    #[test]
    fn width_guard_flags_oversized_words() {
        let mut codec = WordCodec::new(1, WordLayout::ValueSnBits);
        codec.width_guard = 16;
        let small = codec.encode(&Value::Int(3), 1, ReaderBits::zero(1));
        assert!(!codec.exceeds_guard(&small));
        let big = codec.encode(&Value::Int(u64::MAX - 1), u64::MAX, ReaderBits::zero(1));
        assert!(codec.exceeds_guard(&big));
    }
}
