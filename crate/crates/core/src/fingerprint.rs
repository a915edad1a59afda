//! Circular atom-environment fingerprints and Tanimoto similarity.

use std::fmt;

use thiserror::Error;

use crate::smiles::MolGraph;

pub const DEFAULT_RADIUS: u32 = 2;
pub const DEFAULT_NBITS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("fingerprint widths differ ({0} vs {1})")]
    WidthMismatch(usize, usize),
    #[error("fingerprint width {0} is not a power of two >= 64")]
    InvalidWidth(usize),
    #[error("malformed fingerprint hex: {0}")]
    InvalidHex(String),
}

/// Fixed-width bitset; bit `i` lives in `words[i / 64]` at position `i % 64`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    radius: u32,
}

impl Fingerprint {
    pub fn empty(nbits: usize, radius: u32) -> Result<Self, FingerprintError> {
        check_width(nbits)?;
        Ok(Fingerprint {
            words: vec![0; nbits / 64],
            radius,
        })
    }

    pub fn nbits(&self) -> usize {
        self.words.len() * 64
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn on_bits(&self) -> Vec<usize> {
        (0..self.nbits()).filter(|&i| self.get(i)).collect()
    }

    /// Lowercase hex, 16 digits per 64-bit word, lowest word first.
    pub fn to_hex(&self) -> String {
        self.words.iter().map(|w| format!("{w:016x}")).collect()
    }

    pub fn from_hex(hex: &str, radius: u32) -> Result<Self, FingerprintError> {
        let bad = || FingerprintError::InvalidHex(hex.chars().take(32).collect());
        if hex.len() % 16 != 0 || !hex.is_ascii() {
            return Err(bad());
        }
        let words = (0..hex.len() / 16)
            .map(|i| u64::from_str_radix(&hex[i * 16..(i + 1) * 16], 16).map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        check_width(words.len() * 64)?;
        Ok(Fingerprint { words, radius })
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

fn check_width(nbits: usize) -> Result<(), FingerprintError> {
    if nbits >= 64 && nbits.is_power_of_two() {
        Ok(())
    } else {
        Err(FingerprintError::InvalidWidth(nbits))
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_seq(items: impl IntoIterator<Item = u64>) -> u64 {
    items
        .into_iter()
        .fold(0x5bd1_e995_u64, |h, x| mix(h.rotate_left(23) ^ x))
}

/// Identifiers of the distinct atom environments up to `radius` bonds.
///
/// Radius-0 identifiers are emitted for every atom. A larger environment is
/// emitted only when it covers new bonds and no environment with the same
/// bond set has been emitted before; among same-radius duplicates the
/// smallest identifier wins.
pub fn environment_ids(g: &MolGraph, radius: u32) -> Vec<u64> {
    let n = g.atom_count();
    let ring = g.ring_atoms();
    let mut ids: Vec<u64> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            hash_seq([
                a.element as u64,
                g.degree(i) as u64,
                a.charge as i64 as u64,
                a.hydrogens as u64,
                ring[i] as u64,
            ])
        })
        .collect();
    let mut out = ids.clone();
    let mut env: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut seen: std::collections::HashSet<Vec<usize>> = std::collections::HashSet::new();

    for r in 1..=radius {
        let mut next_ids = Vec::with_capacity(n);
        let mut next_env = Vec::with_capacity(n);
        let mut candidates: Vec<(Vec<usize>, u64)> = Vec::new();
        for a in 0..n {
            let mut nbrs: Vec<(u64, u64)> = g
                .neighbors(a)
                .iter()
                .map(|&(b, bond)| (g.bonds()[bond].order.code() as u64, ids[b]))
                .collect();
            nbrs.sort_unstable();
            let id = hash_seq(
                [r as u64, ids[a]]
                    .into_iter()
                    .chain(nbrs.into_iter().flat_map(|(c, h)| [c, h])),
            );
            let mut bonds = env[a].clone();
            for &(b, bond) in g.neighbors(a) {
                bonds.push(bond);
                bonds.extend_from_slice(&env[b]);
            }
            bonds.sort_unstable();
            bonds.dedup();
            if bonds.len() > env[a].len() && !seen.contains(&bonds) {
                candidates.push((bonds.clone(), id));
            }
            next_ids.push(id);
            next_env.push(bonds);
        }
        candidates.sort_unstable();
        for (bonds, id) in candidates {
            if seen.insert(bonds) {
                out.push(id);
            }
        }
        ids = next_ids;
        env = next_env;
    }
    out
}

pub fn morgan_fingerprint(
    g: &MolGraph,
    radius: u32,
    nbits: usize,
) -> Result<Fingerprint, FingerprintError> {
    let mut fp = Fingerprint::empty(nbits, radius)?;
    for id in environment_ids(g, radius) {
        fp.set((id % nbits as u64) as usize);
    }
    Ok(fp)
}

/// Fingerprint at the default radius and width.
pub fn fingerprint(g: &MolGraph) -> Fingerprint {
    morgan_fingerprint(g, DEFAULT_RADIUS, DEFAULT_NBITS).expect("default width is valid")
}

/// |a ∧ b| / |a ∨ b|; two empty fingerprints have similarity 0.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    if a.words.len() != b.words.len() {
        return Err(FingerprintError::WidthMismatch(a.nbits(), b.nbits()));
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    Ok(if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    })
}
