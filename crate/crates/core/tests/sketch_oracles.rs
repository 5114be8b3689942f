//! Sketch extraction checked against brute-force oracles on analytic and
//! random smooth surfaces.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topogen_core::dem::NormalizedPatch;
use topogen_core::sketch::{
    extract_level_sets, extract_ridge_valley, extract_topo_map, Mask, RidgeValleyParams,
    SketchParams,
};

fn patch(values: Array2<f64>) -> NormalizedPatch {
    NormalizedPatch::new(values, 0.0, 1.0, 2.0).unwrap()
}

/// Independent 8-connected flood fill.
fn count_8_components(m: &Mask) -> usize {
    let (rows, cols) = m.dim();
    let mut seen = vec![false; rows * cols];
    let mut count = 0;
    for start in 0..rows * cols {
        if !m[[start / cols, start % cols]] || seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (r, c) = ((i / cols) as i64, (i % cols) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    let j = nr as usize * cols + nc as usize;
                    if m[[nr as usize, nc as usize]] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    count
}

/// Random smooth surface in [0, 1]: elongated Gaussian ridges and troughs
/// at random orientations.
fn smooth_patch(n: usize, seed: u64) -> NormalizedPatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<[f64; 6]> = (0..6)
        .map(|_| {
            [
                rng.random_range(0.0..n as f64),
                rng.random_range(0.0..n as f64),
                rng.random_range(0.0..std::f64::consts::PI),
                rng.random_range(2.5..5.0),
                rng.random_range(12.0..30.0),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    let raw = Array2::from_shape_fn((n, n), |(r, c)| {
        features
            .iter()
            .map(|&[y, x, th, s_across, s_along, a]| {
                let (dy, dx) = (r as f64 - y, c as f64 - x);
                let across = -dy * th.cos() + dx * th.sin();
                let along = dy * th.sin() + dx * th.cos();
                a * (-(across * across) / (2.0 * s_across * s_across)
                    - (along * along) / (2.0 * s_along * s_along))
                    .exp()
            })
            .sum::<f64>()
    });
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    patch(raw.mapv(|v| (v - lo) / (hi - lo)))
}

fn rot90(a: &Array2<bool>) -> Array2<bool> {
    let (rows, cols) = a.dim();
    Array2::from_shape_fn((cols, rows), |(r, c)| a[[c, cols - 1 - r]])
}

fn rot90_f(a: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = a.dim();
    Array2::from_shape_fn((cols, rows), |(r, c)| a[[c, cols - 1 - r]])
}

#[test]
fn ramp_level_sets_match_banding_oracle() {
    for n_levels in [2usize, 5, 10, 17] {
        let values = Array2::from_shape_fn((256, 256), |(_, c)| c as f64 / 255.0);
        let mask = extract_level_sets(&patch(values), n_levels, 1);

        // brute force: band of each column straight from the formula
        let band = |c: usize| {
            let v = c as f64 / 255.0;
            ((v * n_levels as f64).floor() as usize).min(n_levels - 1)
        };
        let expected_cols: Vec<usize> = (0..255).filter(|&c| band(c + 1) > band(c)).collect();
        assert_eq!(expected_cols.len(), n_levels - 1);
        for r in 0..256 {
            for c in 0..256 {
                assert_eq!(mask[[r, c]], expected_cols.contains(&c), "({r},{c}) n={n_levels}");
            }
        }
        assert_eq!(count_8_components(&mask), n_levels - 1);
    }
}

#[test]
fn ramp_contours_evenly_spaced() {
    let values = Array2::from_shape_fn((256, 256), |(_, c)| c as f64 / 255.0);
    let mask = extract_level_sets(&patch(values), 10, 1);
    let cols: Vec<usize> = (0..256).filter(|&c| mask[[128, c]]).collect();
    assert_eq!(cols.len(), 9);
    let mean_gap = (cols[8] - cols[0]) as f64 / 8.0;
    assert!((mean_gap - 25.5).abs() < 0.2, "{mean_gap}");
}

#[test]
fn tent_ridge_is_a_thin_crest_line() {
    // crest along row 100, no foot inside the patch
    let values = Array2::from_shape_fn((256, 256), |(r, _)| 1.0 - (r as f64 - 100.0).abs() / 156.0);
    let (ridge, valley) = extract_ridge_valley(&patch(values), &RidgeValleyParams::default());
    assert!(!valley.iter().any(|&b| b));
    for r in 0..256 {
        for c in 0..256 {
            assert_eq!(ridge[[r, c]], r == 100, "({r},{c})");
        }
    }
}

#[test]
fn negation_swaps_ridges_and_valleys() {
    let params = RidgeValleyParams::default();
    let mut nonempty = 0;
    for seed in 0..20 {
        let p = smooth_patch(64, seed);
        let (ridge, valley) = extract_ridge_valley(&p, &params);
        let (nridge, nvalley) = extract_ridge_valley(&p.negated(), &params);
        assert_eq!(ridge, nvalley, "seed {seed}");
        assert_eq!(valley, nridge, "seed {seed}");
        nonempty += ridge.iter().any(|&b| b) as usize;
    }
    assert!(nonempty >= 15, "only {nonempty} of 20 patches produced ridges");
}

#[test]
fn rotation_commutes_with_extraction() {
    let params = SketchParams::default();
    for seed in 100..106 {
        let p = smooth_patch(64, seed);
        let rotated = patch(rot90_f(p.values()));
        let a = extract_topo_map(&p, &params).unwrap();
        let b = extract_topo_map(&rotated, &params).unwrap();
        assert_eq!(rot90(a.levels()), *b.levels(), "levels, seed {seed}");
        assert_eq!(rot90(a.ridge()), *b.ridge(), "ridge, seed {seed}");
        assert_eq!(rot90(a.valley()), *b.valley(), "valley, seed {seed}");
    }
}

#[test]
fn produced_maps_never_overlap_ridge_and_valley() {
    let params = SketchParams::default();
    for seed in 0..20 {
        let t = extract_topo_map(&smooth_patch(64, 500 + seed), &params).unwrap();
        assert!(t
            .ridge()
            .iter()
            .zip(t.valley().iter())
            .all(|(&r, &v)| !(r && v)));
    }
}

#[test]
fn extraction_is_deterministic() {
    let p = smooth_patch(96, 9);
    let params = SketchParams::default();
    assert_eq!(
        extract_topo_map(&p, &params).unwrap(),
        extract_topo_map(&p, &params).unwrap()
    );
}

#[test]
fn ridge_lines_are_thin_and_long() {
    let params = RidgeValleyParams::default();
    for seed in 0..5 {
        let (ridge, valley) = extract_ridge_valley(&smooth_patch(64, 40 + seed), &params);
        for m in [&ridge, &valley] {
            for r in 0..63 {
                for c in 0..63 {
                    assert!(!(m[[r, c]] && m[[r + 1, c]] && m[[r, c + 1]] && m[[r + 1, c + 1]]));
                }
            }
        }
    }
}

