//! Finite non-negative measures on the upper half-space.

use crate::error::{invalid, CapaxError, Result};
use crate::special::neumaier_sum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// A weighted point `(x, t)` with `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Horizontal position; the second entry is unused when `n = 1`.
    pub x: [f64; 2],
    pub t: f64,
    pub w: f64,
}

impl Atom {
    pub fn new_1d(x: f64, t: f64, w: f64) -> Self {
        Self { x: [x, 0.0], t, w }
    }
    pub fn new_2d(x: [f64; 2], t: f64, w: f64) -> Self {
        Self { x, t, w }
    }
}

/// `μ = Σ w_a δ_{(x_a, t_a)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(invalid("n", format!("measures support n ∈ {{1, 2}}, got {dim}")));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.t > 0.0 && a.t.is_finite()) {
                return Err(invalid("t", format!("atom {i} has height {}", a.t)));
            }
            if !(a.w >= 0.0 && a.w.is_finite()) {
                return Err(invalid("w", format!("atom {i} has weight {}", a.w)));
            }
            if !a.x[..dim].iter().all(|v| v.is_finite()) {
                return Err(invalid("x", format!("atom {i} has a non-finite position")));
            }
        }
        Ok(Self { dim, atoms })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, atoms: vec![] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
    pub fn len(&self) -> usize {
        self.atoms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.atoms.iter().map(|a| a.w))
    }

    /// `c μ`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            atoms: self.atoms.iter().map(|a| Atom { w: c * a.w, ..*a }).collect(),
        }
    }

    /// Horizontal translation by `dx`.
    pub fn translated(&self, dx: [f64; 2]) -> Self {
        Self {
            dim: self.dim,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    x: [a.x[0] + dx[0], a.x[1] + dx[1]],
                    ..*a
                })
                .collect(),
        }
    }

    /// Image under `(x, t) ↦ (s x, s t)` with weights multiplied by `weight_factor`.
    pub fn dilated(&self, s: f64, weight_factor: f64) -> Self {
        Self {
            dim: self.dim,
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    x: [s * a.x[0], s * a.x[1]],
                    t: s * a.t,
                    w: weight_factor * a.w,
                })
                .collect(),
        }
    }

    /// `count` atoms uniform in `[-half_width, half_width]ⁿ × [t_lo, t_hi]` with
    /// weights uniform in `[0.5, 1.5]`.
    pub fn random_cloud(dim: usize, count: usize, half_width: f64, t_lo: f64, t_hi: f64, seed: u64) -> Result<Self> {
        if !(half_width > 0.0 && t_lo > 0.0 && t_hi > t_lo) {
            return Err(invalid("cloud", format!("bad window ±{half_width} × [{t_lo}, {t_hi}]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms = (0..count)
            .map(|_| {
                let x0 = rng.random_range(-half_width..half_width);
                let x1 = if dim == 2 { rng.random_range(-half_width..half_width) } else { 0.0 };
                let t = rng.random_range(t_lo..t_hi);
                let w = rng.random_range(0.5..1.5);
                Atom { x: [x0, x1], t, w }
            })
            .collect();
        Self::new(dim, atoms)
    }

    /// Like [`random_cloud`](Self::random_cloud) but drawn by dart throwing so
    /// that atoms are at least `min_sep` apart in `ℝ^{n+1}`. Fails if `count`
    /// atoms do not fit after a bounded number of attempts.
    pub fn random_separated_cloud(
        dim: usize,
        count: usize,
        half_width: f64,
        t_lo: f64,
        t_hi: f64,
        min_sep: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(half_width > 0.0 && t_lo > 0.0 && t_hi > t_lo && min_sep >= 0.0) {
            return Err(invalid("cloud", format!("bad window ±{half_width} × [{t_lo}, {t_hi}]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut atoms: Vec<Atom> = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while atoms.len() < count {
            attempts += 1;
            if attempts > 1000 * count.max(1) {
                return Err(invalid("min_sep", format!("could not place {count} atoms {min_sep} apart")));
            }
            let x0 = rng.random_range(-half_width..half_width);
            let x1 = if dim == 2 { rng.random_range(-half_width..half_width) } else { 0.0 };
            let t = rng.random_range(t_lo..t_hi);
            let far = atoms.iter().all(|a| {
                let d2 = (a.x[0] - x0).powi(2) + (a.x[1] - x1).powi(2) + (a.t - t).powi(2);
                d2 >= min_sep * min_sep
            });
            if far {
                let w = rng.random_range(0.5..1.5);
                atoms.push(Atom { x: [x0, x1], t, w });
            }
        }
        Self::new(dim, atoms)
    }

    /// `μ|_K` for a predicate `K`.
    pub fn restricted(&self, keep: impl Fn(&Atom) -> bool) -> Self {
        Self {
            dim: self.dim,
            atoms: self.atoms.iter().copied().filter(|a| keep(a)).collect(),
        }
    }

    /// Measure CSV: a header `n=<1|2>` and rows `x1[,x2],t,w`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n={}", self.dim)?;
        for a in &self.atoms {
            if self.dim == 1 {
                writeln!(w, "{:e},{:e},{:e}", a.x[0], a.t, a.w)?;
            } else {
                writeln!(w, "{:e},{:e},{:e},{:e}", a.x[0], a.x[1], a.t, a.w)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut dim = None;
        let mut atoms = Vec::new();
        for (ln, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some(d) = dim else {
                let d = line
                    .strip_prefix("n=")
                    .and_then(|v| v.trim().parse::<usize>().ok())
                    .ok_or(CapaxError::Parse {
                        line: ln + 1,
                        reason: "expected header `n=<1|2>`".into(),
                    })?;
                dim = Some(d);
                continue;
            };
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| CapaxError::Parse {
                    line: ln + 1,
                    reason: e.to_string(),
                })?;
            if fields.len() != d + 2 {
                return Err(CapaxError::Parse {
                    line: ln + 1,
                    reason: format!("expected {} fields, found {}", d + 2, fields.len()),
                });
            }
            let x = if d == 1 { [fields[0], 0.0] } else { [fields[0], fields[1]] };
            atoms.push(Atom {
                x,
                t: fields[d],
                w: fields[d + 1],
            });
        }
        let dim = dim.ok_or(CapaxError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        Self::new(dim, atoms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rejects_bad_atoms() {
        assert!(DiscreteMeasure::new(1, vec![Atom::new_1d(0.0, 0.0, 1.0)]).is_err());
        assert!(DiscreteMeasure::new(1, vec![Atom::new_1d(0.0, 1.0, -1.0)]).is_err());
        assert!(DiscreteMeasure::new(3, vec![]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mu = DiscreteMeasure::new(
            2,
            vec![Atom::new_2d([0.5, -1.0], 0.25, 2.0), Atom::new_2d([0.0, 0.0], 3.0, 0.5)],
        )
        .unwrap();
        let mut buf = Vec::new();
        mu.write_csv(&mut buf).unwrap();
        assert_eq!(DiscreteMeasure::read_csv(&buf[..]).unwrap(), mu);
        assert!(DiscreteMeasure::read_csv("n=1\n1,2\n".as_bytes()).is_err());
        assert!(DiscreteMeasure::read_csv("1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn mass_and_scaling() {
        let mu = DiscreteMeasure::new(1, vec![Atom::new_1d(0.0, 1.0, 1.5), Atom::new_1d(1.0, 2.0, 0.5)]).unwrap();
        assert_eq!(mu.total_mass(), 2.0);
        assert_eq!(mu.scaled(3.0).total_mass(), 6.0);
        assert_eq!(mu.restricted(|a| a.t > 1.5).total_mass(), 0.5);
    }
}
