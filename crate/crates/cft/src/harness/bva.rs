//! Boundary value analysis for unsigned wire fields.

/// A numeric wire field to probe: its width in bits and legal domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BvaField {
    /// 16 or 32.
    pub width: u8,
    pub min: u32,
    pub max: u32,
    pub nominal: u32,
}

/// Boundary values for a field: min/max and their neighbors, the nominal
/// value, zero, the all-ones value, and the two's-complement sign
/// threshold (the "negative" edge under a flawed signed interpretation).
/// Ordered, deduplicated, and clipped to what the width can encode.
pub fn bva_values(field: &BvaField) -> Vec<u32> {
    assert!(
        field.width == 16 || field.width == 32,
        "width must be 16 or 32"
    );
    assert!(
        field.min <= field.nominal && field.nominal <= field.max,
        "need min <= nominal <= max"
    );
    let ceiling: i64 = if field.width == 16 {
        u16::MAX as i64
    } else {
        u32::MAX as i64
    };
    let sign_threshold = 1i64 << (field.width - 1);
    let candidates: [i64; 11] = [
        field.min as i64 - 1,
        field.min as i64,
        field.min as i64 + 1,
        field.nominal as i64,
        field.max as i64 - 1,
        field.max as i64,
        field.max as i64 + 1,
        0,
        ceiling,
        sign_threshold,
        sign_threshold - 1,
    ];
    let mut values: Vec<u32> = candidates
        .into_iter()
        .filter(|v| (0..=ceiling).contains(v))
        .map(|v| v as u32)
        .collect();
    values.sort_unstable();
    values.dedup();
    values
}
