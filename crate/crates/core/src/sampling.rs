//! Seeded low-discrepancy sampling of axis-aligned boxes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::Interval;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * factor;
        index /= base;
        factor *= inv;
    }
    out
}

/// Halton points with a Cranley-Patterson rotation drawn from `seed`.
/// Seed `None` gives the unrotated sequence.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: Option<u64>) -> Self {
        assert!(dim <= PRIMES.len(), "at most {} dimensions supported", PRIMES.len());
        let shift = match seed {
            Some(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                (0..dim).map(|_| rng.random::<f64>()).collect()
            }
            None => vec![0.0; dim],
        };
        // index 0 is the origin of every base; skip it
        Self { shift, index: 1 }
    }

    /// Next point of the unit cube.
    pub fn next_unit(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(s, p)| (radical_inverse(i, p) + s).fract())
            .collect()
    }

    /// Next point mapped into `bounds`.
    pub fn next_in(&mut self, bounds: &[Interval]) -> Vec<f64> {
        self.next_unit().iter().zip(bounds).map(|(u, b)| b.lerp(*u)).collect()
    }
}

/// Corners, centre and `extra` Halton points of a box; used for load-time checks.
pub fn probe_points(bounds: &[Interval], extra: usize) -> Vec<Vec<f64>> {
    let n = bounds.len();
    let mut pts = Vec::new();
    if n <= 10 {
        for mask in 0u32..(1 << n) {
            pts.push(
                bounds
                    .iter()
                    .enumerate()
                    .map(|(i, b)| if mask & (1 << i) != 0 { b.hi } else { b.lo })
                    .collect(),
            );
        }
    }
    pts.push(bounds.iter().map(|b| b.lerp(0.5)).collect());
    let mut h = Halton::new(n, None);
    for _ in 0..extra {
        pts.push(h.next_in(bounds));
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_two_radical_inverse() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn seeded_sequences_repeat() {
        let mut a = Halton::new(3, Some(42));
        let mut b = Halton::new(3, Some(42));
        for _ in 0..10 {
            assert_eq!(a.next_unit(), b.next_unit());
        }
        let mut c = Halton::new(3, Some(43));
        assert_ne!(Halton::new(3, Some(42)).next_unit(), c.next_unit());
    }

    #[test]
    fn points_stay_in_box() {
        let bounds = [Interval::new(-1.0, 2.0), Interval::new(0.5, 0.75)];
        let mut h = Halton::new(2, Some(7));
        for _ in 0..500 {
            let p = h.next_in(&bounds);
            for (x, b) in p.iter().zip(&bounds) {
                assert!(b.contains(*x));
            }
        }
    }
}
