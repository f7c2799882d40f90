//! Error metric and tolerance policy used to compare kernels with the oracle.

/// `max |actual − reference| / max(1, max |reference|)`.
///
/// Normalizing by the largest reference magnitude (floored at one) keeps the
/// metric meaningful for outputs that cross zero.
pub fn max_rel_error(actual: &[f32], reference: &[f64]) -> f64 {
    assert_eq!(actual.len(), reference.len(), "compared buffers differ in length");
    let scale = reference.iter().fold(1.0f64, |m, r| m.max(r.abs()));
    let worst = actual
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (&a, &r)| m.max((a as f64 - r).abs()));
    worst / scale
}

/// Allowed [`max_rel_error`] for a Winograd plan whose largest output tile
/// side is `m`. Larger tiles use larger interpolation points and lose more
/// precision.
pub fn winograd_tolerance(m: usize) -> f64 {
    if m <= 2 {
        1e-4
    } else {
        5e-4
    }
}

/// Allowed [`max_rel_error`] for the im2row baseline (reassociation only).
pub const IM2ROW_TOLERANCE: f64 = 1e-5;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric() {
        assert_eq!(max_rel_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(max_rel_error(&[0.5], &[0.25]), 0.25);
        assert_eq!(max_rel_error(&[9.0, 0.0], &[10.0, 0.0]), 0.1);
    }

    #[test]
    fn policy() {
        assert_eq!(winograd_tolerance(1), 1e-4);
        assert_eq!(winograd_tolerance(2), 1e-4);
        assert_eq!(winograd_tolerance(4), 5e-4);
    }
}
