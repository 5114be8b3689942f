//! Priority-ordered homotopic thinning.
//!
//! Foreground pixels are peeled in increasing order of a per-pixel key
//! (ties broken by row-major index). A pixel is deleted when it is simple
//! for 8-connected foreground / 4-connected background and is not an end
//! point (it has at least two foreground 8-neighbors). Peeling stops when
//! no deletable pixel is left, which yields 1-px wide curves that follow
//! the high-key crest of each blob and keep its topology.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use ndarray::Array2;

use super::mask::{neighbor, Mask, N8};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn ring(mask: &Mask, r: usize, c: usize) -> [bool; 8] {
    let dim = mask.dim();
    N8.map(|d| neighbor(dim, r, c, d).is_some_and(|(nr, nc)| mask[[nr, nc]]))
}

/// 8-connectivity crossing number on the ring E, NE, N, NW, W, SW, S, SE.
/// Exactly one means removing the pixel keeps both foreground and
/// background topology.
fn connectivity_number(x: [bool; 8]) -> usize {
    let bg = |k: usize| !x[k % 8] as i32;
    let n: i32 = [0, 2, 4, 6]
        .iter()
        .map(|&k| bg(k) - bg(k) * bg(k + 1) * bg(k + 2))
        .sum();
    n as usize
}

/// Thin `mask`, peeling low `key` values first.
pub fn thin_ordered(mask: &Mask, key: &Array2<f64>) -> Mask {
    assert_eq!(mask.dim(), key.dim(), "mask/key shape mismatch");
    let dim = mask.dim();
    let cols = dim.1;
    let mut fg = mask.clone();
    let mut queued = Array2::from_elem(dim, false);
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Reverse<Key>>, queued: &mut Array2<bool>, r: usize, c: usize| {
        if !queued[[r, c]] {
            queued[[r, c]] = true;
            heap.push(Reverse(Key(key[[r, c]], r * cols + c)));
        }
    };
    for ((r, c), &on) in mask.indexed_iter() {
        if on {
            push(&mut heap, &mut queued, r, c);
        }
    }
    while let Some(Reverse(Key(_, idx))) = heap.pop() {
        let (r, c) = (idx / cols, idx % cols);
        queued[[r, c]] = false;
        if !fg[[r, c]] {
            continue;
        }
        let x = ring(&fg, r, c);
        let degree = x.iter().filter(|&&b| b).count();
        if degree < 2 || connectivity_number(x) != 1 {
            continue;
        }
        fg[[r, c]] = false;
        for d in N8 {
            if let Some((nr, nc)) = neighbor(dim, r, c, d) {
                if fg[[nr, nc]] {
                    push(&mut heap, &mut queued, nr, nc);
                }
            }
        }
    }
    fg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::mask::count_components;

    #[test]
    fn crossing_numbers() {
        // isolated pixel, interior pixel: not simple
        assert_eq!(connectivity_number([false; 8]), 0);
        assert_eq!(connectivity_number([true; 8]), 0);
        // end of a line
        let mut x = [false; 8];
        x[0] = true;
        assert_eq!(connectivity_number(x), 1);
        // middle of a horizontal line: removing it splits the line
        x[4] = true;
        assert_eq!(connectivity_number(x), 2);
    }

    #[test]
    fn band_thins_to_crest_row() {
        let (rows, cols) = (11, 40);
        let mask = Array2::from_shape_fn((rows, cols), |(r, _)| (2..=8).contains(&r));
        let key = Array2::from_shape_fn((rows, cols), |(r, _)| -((r as f64) - 5.0).abs());
        let out = thin_ordered(&mask, &key);
        for c in 0..cols {
            for r in 0..rows {
                assert_eq!(out[[r, c]], r == 5, "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn keeps_topology_of_a_ring() {
        let n = 30;
        let mask = Array2::from_shape_fn((n, n), |(r, c)| {
            let d = ((r as f64 - 15.0).powi(2) + (c as f64 - 15.0).powi(2)).sqrt();
            (7.0..=11.0).contains(&d)
        });
        let key = Array2::from_shape_fn((n, n), |(r, c)| {
            let d = ((r as f64 - 15.0).powi(2) + (c as f64 - 15.0).powi(2)).sqrt();
            -(d - 9.0).abs()
        });
        let out = thin_ordered(&mask, &key);
        assert_eq!(count_components(&out), 1);
        // the hole survives: flood the 4-connected background from the border
        let mut outside = Array2::from_elem((n, n), false);
        let mut stack: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| [(0, i), (n - 1, i), (i, 0), (i, n - 1)])
            .filter(|&p| !out[p])
            .collect();
        while let Some((r, c)) = stack.pop() {
            if outside[[r, c]] || out[[r, c]] {
                continue;
            }
            outside[[r, c]] = true;
            for (dr, dc) in [(0i64, 1i64), (0, -1), (1, 0), (-1, 0)] {
                if let Some(q) = neighbor((n, n), r, c, (dr, dc)) {
                    stack.push(q);
                }
            }
        }
        let holes = (!out[[15, 15]] && !outside[[15, 15]]) as usize;
        assert_eq!(holes, 1);
        // and it is thin: no 2x2 block
        for r in 0..n - 1 {
            for c in 0..n - 1 {
                assert!(!(out[[r, c]] && out[[r + 1, c]] && out[[r, c + 1]] && out[[r + 1, c + 1]]));
            }
        }
    }
}
