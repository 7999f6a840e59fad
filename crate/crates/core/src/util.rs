use sha2::{Digest, Sha256};

/// Hash that is stable across runs, platforms and toolchains. Parts are length-prefixed so
/// `["ab", "c"]` and `["a", "bc"]` differ.
pub(crate) fn stable_digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.finalize().into()
}

pub(crate) fn stable_u64(parts: &[&[u8]]) -> u64 {
    let d = stable_digest(parts);
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_length_prefixed() {
        assert_ne!(stable_u64(&[b"ab", b"c"]), stable_u64(&[b"a", b"bc"]));
        assert_eq!(stable_u64(&[b"x"]), stable_u64(&[b"x"]));
        assert_eq!(hex(&[0, 255, 16]), "00ff10");
    }
}
