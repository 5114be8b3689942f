//! Binary masks and their 8-connected components.

use ndarray::Array2;

pub type Mask = Array2<bool>;

pub(crate) const N8: [(i64, i64); 8] = [
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
];

pub(crate) fn neighbor(dim: (usize, usize), r: usize, c: usize, d: (i64, i64)) -> Option<(usize, usize)> {
    let (nr, nc) = (r as i64 + d.0, c as i64 + d.1);
    if nr < 0 || nc < 0 || nr >= dim.0 as i64 || nc >= dim.1 as i64 {
        None
    } else {
        Some((nr as usize, nc as usize))
    }
}

/// 8-connected components as lists of pixels, in row-major order of their
/// first pixel.
pub fn components(mask: &Mask) -> Vec<Vec<(usize, usize)>> {
    let dim = mask.dim();
    let mut seen = Array2::from_elem(dim, false);
    let mut out = Vec::new();
    for ((r, c), &on) in mask.indexed_iter() {
        if !on || seen[[r, c]] {
            continue;
        }
        seen[[r, c]] = true;
        let mut comp = vec![(r, c)];
        let mut i = 0;
        while i < comp.len() {
            let (pr, pc) = comp[i];
            i += 1;
            for d in N8 {
                if let Some((nr, nc)) = neighbor(dim, pr, pc, d) {
                    if mask[[nr, nc]] && !seen[[nr, nc]] {
                        seen[[nr, nc]] = true;
                        comp.push((nr, nc));
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

pub fn count_components(mask: &Mask) -> usize {
    components(mask).len()
}

/// Drop components with fewer than `min_px` pixels.
pub fn remove_small_components(mask: &Mask, min_px: usize) -> Mask {
    let mut out = Array2::from_elem(mask.dim(), false);
    for comp in components(mask).into_iter().filter(|c| c.len() >= min_px) {
        for (r, c) in comp {
            out[[r, c]] = true;
        }
    }
    out
}

/// Dilation by a `size`×`size` square; `size <= 1` is the identity.
pub fn dilate_square(mask: &Mask, size: usize) -> Mask {
    if size <= 1 {
        return mask.clone();
    }
    let lo = -(((size - 1) / 2) as i64);
    let hi = (size / 2) as i64;
    let dim = mask.dim();
    Array2::from_shape_fn(dim, |(r, c)| {
        (lo..=hi).any(|dr| {
            (lo..=hi).any(|dc| neighbor(dim, r, c, (dr, dc)).is_some_and(|(nr, nc)| mask[[nr, nc]]))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_pixels_are_one_component() {
        let m = array![[true, false, false], [false, true, false], [false, false, true]];
        assert_eq!(count_components(&m), 1);
        let m = array![[true, false, true], [false, false, false], [true, false, true]];
        assert_eq!(count_components(&m), 4);
    }

    #[test]
    fn small_components_removed() {
        let mut m = Array2::from_elem((5, 12), false);
        for c in 0..9 {
            m[[0, c]] = true;
        }
        m[[4, 0]] = true;
        m[[4, 1]] = true;
        let out = remove_small_components(&m, 8);
        assert_eq!(out.iter().filter(|&&b| b).count(), 9);
        assert!(!out[[4, 0]]);
    }

    #[test]
    fn dilation_grows_by_half_width() {
        let mut m = Array2::from_elem((7, 7), false);
        m[[3, 3]] = true;
        assert_eq!(dilate_square(&m, 1), m);
        assert_eq!(dilate_square(&m, 3).iter().filter(|&&b| b).count(), 9);
        assert_eq!(dilate_square(&m, 2).iter().filter(|&&b| b).count(), 4);
    }
}
