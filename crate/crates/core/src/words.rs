//! Reduced words in a free group of rank `r`. Letter `2j` is the generator `g_j` and
//! letter `2j + 1` its inverse; they print as `a, A, b, B, …`.

use crate::error::{MorseError, Result};

pub type Word = Vec<u8>;

pub fn inverse_letter(c: u8) -> u8 {
    c ^ 1
}

/// Number of reduced words of length `len`, saturating.
pub fn count_reduced(rank: usize, len: usize) -> u128 {
    if len == 0 {
        return 1;
    }
    let k = 2 * rank as u128;
    (1..len).fold(k, |acc, _| acc.saturating_mul(k - 1))
}

/// All reduced words of length `len` in lexicographic order of letter indices.
pub fn reduced_words(rank: usize, len: usize, limit: u128) -> Result<Vec<Word>> {
    if rank == 0 || rank > 13 {
        return Err(MorseError::Invalid(format!("rank must be between 1 and 13, got {rank}")));
    }
    let count = count_reduced(rank, len);
    if count > limit {
        return Err(MorseError::EnumerationOverflow { count, limit });
    }
    let mut out: Vec<Word> = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * (2 * rank - 1));
        for w in &out {
            for c in 0..(2 * rank) as u8 {
                if w.last().is_some_and(|&l| l == inverse_letter(c)) {
                    continue;
                }
                let mut v = w.clone();
                v.push(c);
                next.push(v);
            }
        }
        out = next;
    }
    Ok(out)
}

pub fn is_reduced(w: &[u8]) -> bool {
    w.windows(2).all(|p| p[1] != inverse_letter(p[0]))
}

pub fn word_string(w: &[u8]) -> String {
    w.iter()
        .map(|&c| {
            let base = b'a' + c / 2;
            (if c % 2 == 0 { base } else { base.to_ascii_uppercase() }) as char
        })
        .collect()
}

pub fn parse_word(s: &str, rank: usize) -> Result<Word> {
    s.chars()
        .map(|ch| {
            let lower = ch.to_ascii_lowercase();
            let j = (lower as u32).wrapping_sub('a' as u32) as usize;
            if !ch.is_ascii_alphabetic() || j >= rank {
                return Err(MorseError::Parse(format!("letter {ch:?} outside rank {rank}")));
            }
            Ok((2 * j + usize::from(ch.is_ascii_uppercase())) as u8)
        })
        .collect()
}
