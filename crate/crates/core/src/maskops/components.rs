//! 8-connected component labeling and moment-based elongation.

use super::{BitMask, MaskError, Pixel};

/// Elongation reported when the minor moment vanishes.
pub const ELONGATION_CAP: f64 = 1e6;

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // keep the smaller index as root so roots are first-seen pixels
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// Partition of the true pixels into 8-connected components.
///
/// Components are ordered by their smallest row-major index; pixels within a
/// component are in row-major order.
pub fn connected_components(mask: &BitMask) -> Vec<Vec<Pixel>> {
    let (h, w) = mask.dims();
    let bits = mask.bits();
    let mut parent: Vec<usize> = (0..h * w).collect();
    // Single raster pass: link each pixel to its already-visited neighbours
    // (W, NW, N, NE).
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !bits[i] {
                continue;
            }
            if c > 0 && bits[i - 1] {
                union(&mut parent, i, i - 1);
            }
            if r > 0 {
                let up = i - w;
                if bits[up] {
                    union(&mut parent, i, up);
                }
                if c > 0 && bits[up - 1] {
                    union(&mut parent, i, up - 1);
                }
                if c + 1 < w && bits[up + 1] {
                    union(&mut parent, i, up + 1);
                }
            }
        }
    }
    let mut slot_of_root = vec![usize::MAX; h * w];
    let mut out: Vec<Vec<Pixel>> = Vec::new();
    for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
        let root = find(&mut parent, i);
        if slot_of_root[root] == usize::MAX {
            slot_of_root[root] = out.len();
            out.push(Vec::new());
        }
        out[slot_of_root[root]].push((i / w, i % w));
    }
    out
}

/// `sqrt(λ1/λ2)` of the second central moments of the pixel squares.
///
/// Each pixel is treated as a unit square, so besides the spread of pixel
/// centers it contributes `1/12` to both diagonal moments. A filled `a × b`
/// rectangle therefore has elongation exactly `max(a,b)/min(a,b)`.
pub fn elongation(pixels: &[Pixel]) -> Result<f64, MaskError> {
    if pixels.is_empty() {
        return Err(MaskError::EmptyComponent);
    }
    let n = pixels.len() as f64;
    let (sr, sc) = pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
    let (mr, mc) = (sr / n, sc / n);
    let (mut rr, mut cc, mut rc) = (0.0, 0.0, 0.0);
    for &(r, c) in pixels {
        let (dr, dc) = (r as f64 - mr, c as f64 - mc);
        rr += dr * dr;
        cc += dc * dc;
        rc += dr * dc;
    }
    let self_moment = 1.0 / 12.0;
    let (a, d, b) = (rr / n + self_moment, cc / n + self_moment, rc / n);
    let half_trace = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (major, minor) = (half_trace + disc, half_trace - disc);
    if minor <= major / (ELONGATION_CAP * ELONGATION_CAP) {
        return Ok(ELONGATION_CAP);
    }
    Ok((major / minor).sqrt().min(ELONGATION_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(h: usize, w: usize) -> Vec<Pixel> {
        (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).collect()
    }

    #[test]
    fn rectangle_side_ratio() {
        assert!((elongation(&rect(2, 6)).unwrap() - 3.0).abs() < 1e-12);
        assert!((elongation(&rect(6, 2)).unwrap() - 3.0).abs() < 1e-12);
        assert!((elongation(&rect(4, 4)).unwrap() - 1.0).abs() < 1e-12);
        assert!((elongation(&[(5, 5)]).unwrap() - 1.0).abs() < 1e-12);
        assert!((elongation(&rect(1, 12)).unwrap() - 12.0).abs() < 1e-9);
        assert_eq!(elongation(&[]), Err(MaskError::EmptyComponent));
    }

    #[test]
    fn diagonal_neighbours_join() {
        let m = BitMask::from_pixels(3, 3, [(0, 0), (1, 1)]).unwrap();
        assert_eq!(connected_components(&m), vec![vec![(0, 0), (1, 1)]]);
        let single = BitMask::from_pixels(3, 3, [(2, 1)]).unwrap();
        assert_eq!(connected_components(&single), vec![vec![(2, 1)]]);
    }

    #[test]
    fn u_shape_merges_late() {
        // two arms joined only on the bottom row
        let m = BitMask::from_pixels(3, 3, [(0, 0), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1), (2, 2)])
            .unwrap();
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].len(), 7);
    }

    #[test]
    fn ordering_by_first_pixel() {
        let m = BitMask::from_pixels(4, 4, [(3, 0), (0, 3), (0, 0)]).unwrap();
        let comps = connected_components(&m);
        assert_eq!(comps, vec![vec![(0, 0)], vec![(0, 3)], vec![(3, 0)]]);
    }
}
