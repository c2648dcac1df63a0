//! Square-element binary morphology and the boundary band.

use crate::grid::BinaryMask;

/// One separable pass of a `(2r+1)`-wide window along rows or columns.
///
/// For dilation a window is true if any in-image pixel is set; for erosion
/// it is true only if it lies fully inside the image and every pixel is set.
fn window_pass(mask: &BinaryMask, r: usize, along_rows: bool, dilate: bool) -> BinaryMask {
    let (h, w) = mask.dims();
    let (outer, inner) = if along_rows { (h, w) } else { (w, h) };
    let at = |o: usize, i: usize| {
        if along_rows {
            *mask.get(o, i)
        } else {
            *mask.get(i, o)
        }
    };
    let mut out = BinaryMask::filled(h, w, false);
    for o in 0..outer {
        // prefix counts of set pixels along the line
        let mut prefix = vec![0usize; inner + 1];
        for i in 0..inner {
            prefix[i + 1] = prefix[i] + at(o, i) as usize;
        }
        for i in 0..inner {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(inner - 1);
            let set = prefix[hi + 1] - prefix[lo];
            let v = if dilate {
                set > 0
            } else {
                i >= r && i + r < inner && set == 2 * r + 1
            };
            if along_rows {
                out.set(o, i, v);
            } else {
                out.set(i, o, v);
            }
        }
    }
    out
}

/// Dilation by a `(2r+1)×(2r+1)` square; outside pixels are background.
pub fn dilate(mask: &BinaryMask, r: usize) -> BinaryMask {
    window_pass(&window_pass(mask, r, true, true), r, false, true)
}

/// Erosion by a `(2r+1)×(2r+1)` square; outside pixels are background, so
/// foreground within `r` of the border erodes away.
pub fn erode(mask: &BinaryMask, r: usize) -> BinaryMask {
    window_pass(&window_pass(mask, r, true, false), r, false, false)
}

/// `dilate(m, r) \ erode(m, r)`.
pub fn boundary_band(mask: &BinaryMask, r: usize) -> BinaryMask {
    let d = dilate(mask, r);
    let e = erode(mask, r);
    let (h, w) = mask.dims();
    BinaryMask::from_fn(h, w, |y, x| *d.get(y, x) && !*e.get(y, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Set arithmetic straight from the definition.
    fn band_oracle(m: &BinaryMask, r: usize) -> BinaryMask {
        let (h, w) = m.dims();
        let r = r as isize;
        let inside = |y: isize, x: isize| y >= 0 && x >= 0 && y < h as isize && x < w as isize;
        BinaryMask::from_fn(h, w, |y, x| {
            let (y, x) = (y as isize, x as isize);
            let mut any = false;
            let mut all = true;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y + dy, x + dx);
                    let v = inside(yy, xx) && *m.get(yy as usize, xx as usize);
                    any |= v;
                    all &= v;
                }
            }
            any && !all
        })
    }

    #[test]
    fn empty_mask_has_empty_band() {
        let m = BinaryMask::filled(7, 9, false);
        assert!(boundary_band(&m, 2).is_empty_mask());
    }

    #[test]
    fn single_pixel_band_is_its_neighbourhood() {
        let mut m = BinaryMask::filled(7, 7, false);
        m.set(3, 3, true);
        let b = boundary_band(&m, 1);
        for y in 0..7 {
            for x in 0..7 {
                let expect = (2..=4).contains(&y) && (2..=4).contains(&x);
                assert_eq!(*b.get(y, x), expect, "({y},{x})");
            }
        }
    }

    #[test]
    fn full_mask_band_is_image_border() {
        let m = BinaryMask::filled(6, 8, true);
        let b = boundary_band(&m, 1);
        for y in 0..6 {
            for x in 0..8 {
                let border = y == 0 || x == 0 || y == 5 || x == 7;
                assert_eq!(*b.get(y, x), border);
            }
        }
    }

    proptest! {
        #[test]
        fn matches_set_oracle(
            h in 1usize..=20, w in 1usize..=20, r in 1usize..=3,
            bits in proptest::collection::vec(any::<bool>(), 400)
        ) {
            let m = BinaryMask::new(h, w, bits[..h * w].to_vec()).unwrap();
            prop_assert_eq!(boundary_band(&m, r), band_oracle(&m, r));
        }
    }
}
