//! Binary morphology with a Euclidean-disk structuring element.
//!
//! Out-of-canvas pixels count as background for both erosion and dilation.

use crate::raster::BitMask;

/// Integer offsets (dx, dy) with dx^2 + dy^2 <= r^2; includes (0, 0).
pub fn disk_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

pub fn erode(mask: &BitMask, radius: usize) -> BitMask {
    if radius == 0 {
        return mask.clone();
    }
    let offsets = disk_offsets(radius);
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut out = BitMask::zeros(mask.width(), mask.height());
    for y in 0..h {
        for x in 0..w {
            let keep = offsets.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && nx < w && ny >= 0 && ny < h && mask.get(nx as usize, ny as usize) == 1
            });
            if keep {
                out.set(x as usize, y as usize, 1);
            }
        }
    }
    out
}

pub fn dilate(mask: &BitMask, radius: usize) -> BitMask {
    if radius == 0 {
        return mask.clone();
    }
    let offsets = disk_offsets(radius);
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut out = BitMask::zeros(mask.width(), mask.height());
    for y in 0..h {
        for x in 0..w {
            if mask.get(x as usize, y as usize) == 0 {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && nx < w && ny >= 0 && ny < h {
                    out.set(nx as usize, ny as usize, 1);
                }
            }
        }
    }
    out
}

pub fn open(mask: &BitMask, radius: usize) -> BitMask {
    dilate(&erode(mask, radius), radius)
}

pub fn close(mask: &BitMask, radius: usize) -> BitMask {
    erode(&dilate(mask, radius), radius)
}

/// Pixels within `radius` of the foreground/background boundary:
/// dilate(mask, r) minus erode(mask, r).
pub fn boundary_band(mask: &BitMask, radius: usize) -> BitMask {
    let grown = dilate(mask, radius);
    let shrunk = erode(mask, radius);
    let mut out = BitMask::zeros(mask.width(), mask.height());
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if grown.get(x, y) == 1 && shrunk.get(x, y) == 0 {
                out.set(x, y, 1);
            }
        }
    }
    out
}

/// 4-connected foreground components, as lists of (x, y) pixels.
pub fn connected_components(mask: &BitMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut comps = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if mask.get(sx, sy) == 0 || seen[sy * w + sx] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![(sx, sy)];
            seen[sy * w + sx] = true;
            while let Some((x, y)) = stack.pop() {
                comp.push((x, y));
                let mut push = |nx: usize, ny: usize| {
                    if mask.get(nx, ny) == 1 && !seen[ny * w + nx] {
                        seen[ny * w + nx] = true;
                        stack.push((nx, ny));
                    }
                };
                if x > 0 {
                    push(x - 1, y);
                }
                if x + 1 < w {
                    push(x + 1, y);
                }
                if y > 0 {
                    push(x, y - 1);
                }
                if y + 1 < h {
                    push(x, y + 1);
                }
            }
            comps.push(comp);
        }
    }
    comps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(canvas: usize, side: usize) -> BitMask {
        let mut m = BitMask::zeros(canvas, canvas);
        let s = (canvas - side) / 2;
        for y in s..s + side {
            for x in s..s + side {
                m.set(x, y, 1);
            }
        }
        m
    }

    #[test]
    fn erode_then_dilate_removes_specks() {
        let mut m = square(32, 10);
        m.set(2, 2, 1); // isolated speck
        let opened = open(&m, 2);
        assert_eq!(opened.get(2, 2), 0);
        // bulk of the square survives
        assert_eq!(opened.get(16, 16), 1);
    }

    #[test]
    fn close_fills_pinholes() {
        let mut m = square(32, 12);
        m.set(16, 16, 0);
        let closed = close(&m, 2);
        assert_eq!(closed.get(16, 16), 1);
    }

    #[test]
    fn open_is_anti_extensive_close_is_extensive() {
        let m = square(24, 9);
        let o = open(&m, 2);
        let c = close(&m, 2);
        for i in 0..m.bits().len() {
            assert!(o.bits()[i] <= m.bits()[i]);
            assert!(c.bits()[i] >= m.bits()[i]);
        }
    }

    #[test]
    fn components_counted() {
        let mut m = BitMask::zeros(8, 8);
        m.set(0, 0, 1);
        m.set(1, 0, 1);
        m.set(5, 5, 1);
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps.iter().map(|c| c.len()).sum::<usize>(), 3);
    }

    #[test]
    fn band_straddles_edge() {
        let m = square(32, 10);
        let band = boundary_band(&m, 2);
        assert_eq!(band.get(16, 16), 0); // deep interior
        assert_eq!(band.get(16, 11), 1); // just inside the top edge
        assert_eq!(band.get(16, 9), 1); // just outside
    }
}
