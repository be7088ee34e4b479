//! Gray-labelled square 64-QAM with unit average energy.

use crate::linalg::C64;

const SCALE: f64 = 0.154_303_349_962_091_9; // 1/√42

fn gray(i: u8) -> u8 {
    i ^ (i >> 1)
}

fn gray_inverse(g: u8) -> u8 {
    let mut i = g;
    let mut shift = g >> 1;
    while shift != 0 {
        i ^= shift;
        shift >>= 1;
    }
    i
}

fn level(bits3: u8) -> f64 {
    (2 * i32::from(gray_inverse(bits3)) - 7) as f64 * SCALE
}

fn decide(x: f64) -> u8 {
    let idx = ((x / SCALE + 7.0) / 2.0).round().clamp(0.0, 7.0) as u8;
    gray(idx)
}

/// Map a 6-bit label (bits 5..3 in-phase, 2..0 quadrature) to a symbol.
pub fn qam64_map(label: u8) -> C64 {
    assert!(label < 64, "64-QAM label out of range: {label}");
    C64::new(level(label >> 3), level(label & 7))
}

/// Minimum-distance hard decision back to a label.
pub fn qam64_demap(symbol: C64) -> u8 {
    (decide(symbol.re) << 3) | decide(symbol.im)
}

pub fn constellation() -> Vec<C64> {
    (0..64).map(qam64_map).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_energy() {
        for l in 0..64 {
            assert_eq!(qam64_demap(qam64_map(l)), l);
        }
        let e: f64 = constellation().iter().map(|s| s.norm_sqr()).sum::<f64>() / 64.0;
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn neighbours_differ_in_one_bit() {
        let pts = constellation();
        let step = 2.0 * SCALE;
        for a in 0..64usize {
            for b in 0..64usize {
                let d = pts[a] - pts[b];
                let adjacent = ((d.re.abs() - step).abs() < 1e-9 && d.im.abs() < 1e-9)
                    || ((d.im.abs() - step).abs() < 1e-9 && d.re.abs() < 1e-9);
                if adjacent {
                    assert_eq!((a ^ b).count_ones(), 1, "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn demap_is_minimum_distance() {
        let pts = constellation();
        for k in 0..400 {
            let z = C64::new((k % 20) as f64 * 0.09 - 0.95, (k / 20) as f64 * 0.1 - 1.0);
            let best = (0..64u8)
                .min_by(|&a, &b| (z - pts[a as usize]).norm().total_cmp(&(z - pts[b as usize]).norm()))
                .unwrap();
            assert_eq!((z - pts[qam64_demap(z) as usize]).norm(), (z - pts[best as usize]).norm());
        }
    }
}
