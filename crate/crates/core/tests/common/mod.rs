//! Shared test helpers, including a naive bit-string word codec kept
//! deliberately independent of the library's arithmetic one.

// Compiled once per test binary; not every binary uses every helper.
#![allow(dead_code)]

use auditreg_core::history::Value;
use num_bigint::BigUint;

/// Value -> code injection, restated independently: bottom is 0, integers
/// shift up by one.
pub fn naive_value_code(v: &Value) -> u128 {
    match v {
        Value::Bottom => 0,
        Value::Int(k) => u128::from(*k) + 1,
    }
}

pub fn naive_code_value(code: u128) -> Value {
    if code == 0 {
        Value::Bottom
    } else {
        Value::Int((code - 1) as u64)
    }
}

fn le_bits_u128(mut n: u128) -> Vec<bool> {
    let mut out = Vec::new();
    while n > 0 {
        out.push(n & 1 == 1);
        n >>= 1;
    }
    out
}

fn bit_at(bits: &[bool], i: usize) -> bool {
    bits.get(i).copied().unwrap_or(false)
}

/// Assemble a word from little-endian bits by writing the bit string out in
/// binary and parsing it back, so no arithmetic is shared with the codec.
fn word_from_le_bits(bits: &[bool]) -> BigUint {
    let mut s: String = bits.iter().rev().map(|b| if *b { '1' } else { '0' }).collect();
    if s.is_empty() {
        s.push('0');
    }
    BigUint::parse_bytes(s.as_bytes(), 2).expect("binary string")
}

fn word_to_le_bits(w: &BigUint) -> Vec<bool> {
    let s = w.to_str_radix(2);
    s.chars().rev().map(|c| c == '1').collect()
}

/// Value-only layout: reader bits low, value code above them.
pub fn naive_encode_value_bits(v: &Value, n: usize, reader_bits: u64) -> BigUint {
    let mut bits: Vec<bool> = (0..n).map(|i| reader_bits >> i & 1 == 1).collect();
    bits.extend(le_bits_u128(naive_value_code(v)));
    word_from_le_bits(&bits)
}

/// Interleaved layout: reader bits low, then value bits at even offsets and
/// sequence-number bits at odd offsets.
pub fn naive_encode_value_sn_bits(v: &Value, sn: u64, n: usize, reader_bits: u64) -> BigUint {
    let mut bits: Vec<bool> = (0..n).map(|i| reader_bits >> i & 1 == 1).collect();
    let code_bits = le_bits_u128(naive_value_code(v));
    let sn_bits = le_bits_u128(u128::from(sn));
    for i in 0..code_bits.len().max(sn_bits.len()) {
        bits.push(bit_at(&code_bits, i));
        bits.push(bit_at(&sn_bits, i));
    }
    word_from_le_bits(&bits)
}

/// Decode either layout back to (value, sn, reader bits); `sn` is `None`
/// for the value-only layout.
pub fn naive_decode(w: &BigUint, n: usize, has_sn: bool) -> (Value, Option<u64>, u64) {
    let bits = word_to_le_bits(w);
    let mut reader_bits = 0u64;
    for i in 0..n {
        if bit_at(&bits, i) {
            reader_bits |= 1 << i;
        }
    }
    let high = &bits[n.min(bits.len())..];
    if !has_sn {
        let mut code = 0u128;
        for (i, b) in high.iter().enumerate() {
            if *b {
                code |= 1 << i;
            }
        }
        return (naive_code_value(code), None, reader_bits);
    }
    let mut code = 0u128;
    let mut sn = 0u64;
    for (i, b) in high.iter().enumerate() {
        if !*b {
            continue;
        }
        if i % 2 == 0 {
            code |= 1 << (i / 2);
        } else {
            sn |= 1 << (i / 2);
        }
    }
    (naive_code_value(code), Some(sn), reader_bits)
}
