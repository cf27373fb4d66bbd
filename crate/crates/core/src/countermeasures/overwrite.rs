use crate::error::GameError;

/// Overwrites the first `b.len()` bytes of `a` with `b`.
pub fn ow(a: &[u8], b: &[u8]) -> Result<Vec<u8>, GameError> {
    if b.len() > a.len() {
        return Err(GameError::Overwrite { written: b.len(), target: a.len() });
    }
    let mut out = a.to_vec();
    out[..b.len()].copy_from_slice(b);
    Ok(out)
}

/// `ow(a, b) == a` without allocating.
#[inline]
pub(crate) fn ow_preserves(a: &[u8], b: &[u8]) -> Result<bool, GameError> {
    if b.len() > a.len() {
        return Err(GameError::Overwrite { written: b.len(), target: a.len() });
    }
    Ok(a[..b.len()] == *b)
}
