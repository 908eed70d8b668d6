/// Sign patterns modulo a global flip.
pub const SIGN_CLASSES: usize = 128;

/// Unordered corner pairs `(i, j)`, `i < j`, in lexicographic order.
pub const PAIRS: [(usize, usize); 28] = {
    let mut out = [(0, 0); 28];
    let mut n = 0;
    let mut i = 0;
    while i < 8 {
        let mut j = i + 1;
        while j < 8 {
            out[n] = (i, j);
            n += 1;
            j += 1;
        }
        i += 1;
    }
    out
};

/// `+1 ↦ 1`, `−1 ↦ 0`.
pub fn to_bits(signs: &[i8; 8]) -> [u8; 8] {
    signs.map(|s| u8::from(s > 0))
}

/// Canonical class: flip so that corner 0 has bit 0, then read corners 1 to 7
/// as a binary number.
pub fn class_of(bits: &[u8; 8]) -> usize {
    let f = bits[0];
    (1..8).map(|c| usize::from(bits[c] ^ f) << (c - 1)).sum()
}

pub fn decode_class(class: usize) -> [u8; 8] {
    std::array::from_fn(|c| if c == 0 { 0 } else { ((class >> (c - 1)) & 1) as u8 })
}

/// `1` where the two corners of a pair differ.
pub fn pair_relations(bits: &[u8; 8]) -> [u8; 28] {
    PAIRS.map(|(i, j)| bits[i] ^ bits[j])
}

/// Most likely canonical labelling given per-pair probabilities of differing.
pub fn signs_from_pairs(p: &[f64; 28]) -> [u8; 8] {
    let mut best = (f64::NEG_INFINITY, 0);
    for class in 0..SIGN_CLASSES {
        let rel = pair_relations(&decode_class(class));
        let ll: f64 = rel.iter().zip(p).map(|(&r, &q)| if r == 1 { q.max(1e-12).ln() } else { (1.0 - q).max(1e-12).ln() }).sum();
        if ll > best.0 {
            best = (ll, class);
        }
    }
    decode_class(best.1)
}

/// Fraction of cubes whose predicted corner signs equal the labels or their
/// global flip.
pub fn accuracy(preds: &[[i8; 8]], labels: &[[i8; 8]]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l || p.iter().zip(l.iter()).all(|(a, b)| *a == -*b)).count();
    hits as f64 / preds.len() as f64
}
