use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::{stream, Role};

/// Toeplitz hashing over GF(2).
///
/// The `out_len x n` matrix `T[i][j] = s[i - j + n - 1]` is defined by
/// `out_len + n - 1` seed bits drawn from `seed`. Output bit `i` is the
/// parity of row `i` AND the input.
pub fn privacy_amplify(bits: &[bool], seed: u64, out_len: usize) -> Result<Vec<bool>> {
    let n = bits.len();
    if out_len > n {
        return Err(Error::domain(format!("cannot extract {out_len} bits from {n}")));
    }
    if out_len == 0 {
        return Ok(Vec::new());
    }
    let len = out_len + n - 1;
    let seed_bits = seed_bits(seed, len);
    // Row i is the window r[out_len - 1 - i ..][..n] of the reversed seed r.
    let reversed: Vec<bool> = (0..len).map(|k| bit(&seed_bits, len - 1 - k)).collect();
    let r = pack(&reversed);
    let x = pack(bits);
    Ok((0..out_len)
        .map(|i| {
            let off = out_len - 1 - i;
            let mut acc = 0u64;
            for (w, xw) in x.iter().enumerate() {
                acc ^= window(&r, off + 64 * w) & xw;
            }
            acc.count_ones() % 2 == 1
        })
        .collect())
}

fn seed_bits(seed: u64, len: usize) -> Vec<u64> {
    let mut rng = stream(seed, 0, Role::PrivacySeed);
    let mut words: Vec<u64> = (0..len.div_ceil(64)).map(|_| rng.next_u64()).collect();
    if !len.is_multiple_of(64) {
        *words.last_mut().expect("len > 0") &= (1u64 << (len % 64)) - 1;
    }
    words
}

fn bit(words: &[u64], k: usize) -> bool {
    words[k / 64] >> (k % 64) & 1 == 1
}

fn pack(bits: &[bool]) -> Vec<u64> {
    let mut out = vec![0u64; bits.len().div_ceil(64)];
    for (k, b) in bits.iter().enumerate() {
        if *b {
            out[k / 64] |= 1 << (k % 64);
        }
    }
    out
}

/// 64 bits starting at bit `start`; bits past the end read as zero.
fn window(words: &[u64], start: usize) -> u64 {
    let (w, s) = (start / 64, start % 64);
    let lo = words.get(w).copied().unwrap_or(0);
    if s == 0 {
        return lo;
    }
    let hi = words.get(w + 1).copied().unwrap_or(0);
    (lo >> s) | (hi << (64 - s))
}
