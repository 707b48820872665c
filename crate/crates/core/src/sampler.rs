//! Seeded Monte Carlo collocation points.
//!
//! Every batch comes from its own counter-based stream keyed by
//! (experiment, seed, epoch, purpose): the key is packed into a ChaCha seed,
//! so streams never alias and any batch can be regenerated in isolation.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problems::Domain;

/// What a batch is for; part of the stream key so the descent and ascent
/// branches (and the lift pretraining) draw independent points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Interior,
    Boundary,
    LiftInterior,
    LiftBoundary,
    GapAscent,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Interior => 1,
            Purpose::Boundary => 2,
            Purpose::LiftInterior => 3,
            Purpose::LiftBoundary => 4,
            Purpose::GapAscent => 5,
        }
    }
}

/// Identifies one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub experiment: u64,
    pub seed: u64,
    pub epoch: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.experiment.to_le_bytes());
        key[8..16].copy_from_slice(&self.seed.to_le_bytes());
        key[16..24].copy_from_slice(&self.epoch.to_le_bytes());
        key[24..32].copy_from_slice(&self.purpose.tag().to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// Stable 64-bit id for an experiment name (FNV-1a).
pub fn experiment_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// `n` iid uniform points in the open domain, one column per point.
pub fn sample_interior(domain: &Domain, n: usize, key: &StreamKey) -> Array2<f64> {
    assert!(n >= 1);
    let mut rng = key.rng();
    let bounds = domain.bounds();
    let dim = bounds.len();
    let mut pts = Array2::zeros((dim, n));
    for j in 0..n {
        for (i, &(a, b)) in bounds.iter().enumerate() {
            pts[[i, j]] = a + (b - a) * rng.gen::<f64>();
        }
    }
    pts
}

/// Boundary collocation points.  1D: the two endpoints, repeated in turn if
/// more are requested; 2D: uniform over the four edges weighted by length.
pub fn sample_boundary(domain: &Domain, nb: usize, key: &StreamKey) -> Array2<f64> {
    assert!(nb >= 1);
    let mut rng = key.rng();
    match *domain {
        Domain::Interval { a, b } => {
            let mut pts = Array2::zeros((1, nb));
            for j in 0..nb {
                pts[[0, j]] = if j % 2 == 0 { a } else { b };
            }
            pts
        }
        Domain::Rectangle { x, y } => {
            let lx = x.1 - x.0;
            let ly = y.1 - y.0;
            let perimeter = 2.0 * (lx + ly);
            let mut pts = Array2::zeros((2, nb));
            for j in 0..nb {
                // arc-length position along the boundary, counterclockwise
                let s = perimeter * rng.gen::<f64>();
                let (px, py) = if s < lx {
                    (x.0 + s, y.0)
                } else if s < lx + ly {
                    (x.1, y.0 + (s - lx))
                } else if s < 2.0 * lx + ly {
                    (x.0 + (s - lx - ly), y.1)
                } else {
                    (x.0, y.0 + (s - 2.0 * lx - ly))
                };
                pts[[0, j]] = px;
                pts[[1, j]] = py;
            }
            pts
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(epoch: u64, purpose: Purpose) -> StreamKey {
        StreamKey {
            experiment: experiment_id("example1"),
            seed: 3,
            epoch,
            purpose,
        }
    }

    #[test]
    fn interior_support_and_determinism() {
        let d = Domain::Interval { a: 0.0, b: 1.0 };
        let a = sample_interior(&d, 512, &key(0, Purpose::Interior));
        let b = sample_interior(&d, 512, &key(0, Purpose::Interior));
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| (0.0..1.0).contains(&x)));
        let c = sample_interior(&d, 512, &key(1, Purpose::Interior));
        assert_ne!(a, c);
    }

    #[test]
    fn interior_mean_matches_clt_bound() {
        let d = Domain::Interval { a: 0.0, b: 1.0 };
        let pts = sample_interior(&d, 1_000_000, &key(0, Purpose::Interior));
        let mean = pts.iter().sum::<f64>() / 1e6;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
    }

    #[test]
    fn interval_boundary_is_the_endpoints() {
        let d = Domain::Interval { a: 0.0, b: 1.0 };
        let pts = sample_boundary(&d, 2, &key(0, Purpose::Boundary));
        assert_eq!(pts[[0, 0]], 0.0);
        assert_eq!(pts[[0, 1]], 1.0);
    }

    #[test]
    fn rectangle_boundary_membership() {
        let d = Domain::Rectangle {
            x: (-1.0, 1.0),
            y: (-1.0, 1.0),
        };
        let pts = sample_boundary(&d, 1000, &key(4, Purpose::Boundary));
        for j in 0..1000 {
            let m = pts[[0, j]].abs().max(pts[[1, j]].abs());
            assert!((m - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rectangle_edges_are_uniform() {
        let d = Domain::Rectangle {
            x: (-1.0, 1.0),
            y: (-1.0, 1.0),
        };
        let nb = 4096;
        let pts = sample_boundary(&d, nb, &key(0, Purpose::Boundary));
        let mut counts = [0usize; 4];
        for j in 0..nb {
            let (x, y) = (pts[[0, j]], pts[[1, j]]);
            if (y + 1.0).abs() < 1e-14 {
                counts[0] += 1;
            } else if (x - 1.0).abs() < 1e-14 {
                counts[1] += 1;
            } else if (y - 1.0).abs() < 1e-14 {
                counts[2] += 1;
            } else {
                counts[3] += 1;
            }
        }
        // each edge carries 1/4 of the mass; 3 sigma of Bin(4096, 1/4)
        let sigma = (nb as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!(
                (c as f64 - 1024.0).abs() < 3.0 * sigma,
                "edge counts {counts:?}"
            );
        }
    }

    #[test]
    fn purposes_never_alias() {
        let d = Domain::Interval { a: 0.0, b: 1.0 };
        let a = sample_interior(&d, 64, &key(0, Purpose::Interior));
        let b = sample_interior(&d, 64, &key(0, Purpose::GapAscent));
        assert_ne!(a, b);
    }
}
