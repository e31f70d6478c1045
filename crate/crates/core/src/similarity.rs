//! Ratcliff/Obershelp gestalt matching over characters, with no junk
//! heuristics: find the leftmost-longest common block, recurse on both
//! sides, and score `2·M / (|a| + |b|)`.

use std::ops::Range;

/// A common block `a[a_start..a_start+size] == b[b_start..b_start+size]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchBlock {
    pub a_start: usize,
    pub b_start: usize,
    pub size: usize,
}

/// Longest common contiguous block within the given ranges.
///
/// Ties go to the smallest `a_start`, then the smallest `b_start`. Returns a
/// zero-size block at `(a.start, b.start)` when nothing matches.
pub fn longest_matching_block<T: PartialEq>(
    a: &[T],
    b: &[T],
    a_range: Range<usize>,
    b_range: Range<usize>,
) -> MatchBlock {
    let (blo, bhi) = (b_range.start, b_range.end);
    let mut best = MatchBlock {
        a_start: a_range.start,
        b_start: blo,
        size: 0,
    };
    if b_range.is_empty() {
        return best;
    }
    // run[j - blo + 1] = length of the common suffix ending at (i, j)
    let width = bhi - blo + 1;
    let mut prev = vec![0usize; width];
    let mut cur = vec![0usize; width];
    for i in a_range {
        for j in blo..bhi {
            let k = if a[i] == b[j] { prev[j - blo] + 1 } else { 0 };
            cur[j - blo + 1] = k;
            if k > best.size {
                best = MatchBlock {
                    a_start: i + 1 - k,
                    b_start: j + 1 - k,
                    size: k,
                };
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// All matching blocks in increasing order, adjacent blocks merged, followed
/// by the zero-size sentinel `(a.len(), b.len(), 0)`.
pub fn matching_blocks<T: PartialEq>(a: &[T], b: &[T]) -> Vec<MatchBlock> {
    let mut pending = vec![(0, a.len(), 0, b.len())];
    let mut found = Vec::new();
    while let Some((alo, ahi, blo, bhi)) = pending.pop() {
        let m = longest_matching_block(a, b, alo..ahi, blo..bhi);
        if m.size == 0 {
            continue;
        }
        found.push(m);
        if alo < m.a_start && blo < m.b_start {
            pending.push((alo, m.a_start, blo, m.b_start));
        }
        let (ae, be) = (m.a_start + m.size, m.b_start + m.size);
        if ae < ahi && be < bhi {
            pending.push((ae, ahi, be, bhi));
        }
    }
    found.sort_by_key(|m| (m.a_start, m.b_start));

    let mut merged: Vec<MatchBlock> = Vec::with_capacity(found.len() + 1);
    for m in found {
        match merged.last_mut() {
            Some(last)
                if last.a_start + last.size == m.a_start && last.b_start + last.size == m.b_start =>
            {
                last.size += m.size;
            }
            _ => merged.push(m),
        }
    }
    merged.push(MatchBlock {
        a_start: a.len(),
        b_start: b.len(),
        size: 0,
    });
    merged
}

pub fn ratio_of<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let matched: usize = matching_blocks(a, b).iter().map(|m| m.size).sum();
    2.0 * matched as f64 / total as f64
}

/// Similarity of two code strings, compared per Unicode scalar value.
pub fn ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    ratio_of(&a, &b)
}
