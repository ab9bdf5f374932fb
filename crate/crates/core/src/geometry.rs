//! Hexagonal macro-cell layouts and distance-based path loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axial hex coordinates of a BS site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Axial {
    pub q: i64,
    pub r: i64,
}

impl Axial {
    /// Cartesian position for inter-site distance `isd`.
    pub fn position(&self, isd: f64) -> (f64, f64) {
        let (q, r) = (self.q as f64, self.r as f64);
        (isd * (q + r / 2.0), isd * r * 3f64.sqrt() / 2.0)
    }
}

const DIRS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

/// Sites of a hex cluster: the center, then ring 1, then ring 2, and so on.
/// `num_bs` must be a centered hexagonal number (1, 7, 19, 37, ...).
pub fn hex_sites(num_bs: usize) -> Result<Vec<Axial>> {
    let mut sites = vec![Axial { q: 0, r: 0 }];
    let mut ring = 1i64;
    while sites.len() < num_bs {
        // Start at the corner in direction 4 and walk the six sides.
        let mut at = Axial { q: -ring, r: ring };
        for (dq, dr) in DIRS {
            for _ in 0..ring {
                sites.push(at);
                at = Axial { q: at.q + dq, r: at.r + dr };
            }
        }
        ring += 1;
    }
    if sites.len() != num_bs {
        return Err(Error::config(format!(
            "{num_bs} cells do not form a complete hexagonal cluster"
        )));
    }
    Ok(sites)
}

/// Reuse-3 color of a site; adjacent sites always differ.
pub fn reuse3_color(site: Axial) -> usize {
    (site.q - site.r).rem_euclid(3) as usize
}

/// Static reuse-3 coloring: hex colors when the cell count forms a cluster,
/// otherwise `m mod 3`.
pub fn reuse3_colors(num_bs: usize) -> Vec<usize> {
    match hex_sites(num_bs) {
        Ok(sites) => sites.into_iter().map(reuse3_color).collect(),
        Err(_) => (0..num_bs).map(|m| m % 3).collect(),
    }
}

/// Log-distance path loss `a + b log10(d)` in dB with `d` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossLaw {
    pub intercept_db: f64,
    pub slope_db: f64,
}

impl Default for PathLossLaw {
    fn default() -> Self {
        PathLossLaw {
            intercept_db: 34.5,
            slope_db: 35.0,
        }
    }
}

impl PathLossLaw {
    pub fn loss_db(&self, distance: f64) -> f64 {
        self.intercept_db + self.slope_db * distance.log10()
    }

    /// Linear power gain `10^(-PL/10)`.
    pub fn gain(&self, distance: f64) -> f64 {
        10f64.powf(-self.loss_db(distance) / 10.0)
    }
}

/// Cell radius, minimum BS-user distance and path-loss law for a hex layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroLayout {
    pub cell_radius: f64,
    pub min_distance: f64,
    pub path_loss: PathLossLaw,
}

impl Default for MacroLayout {
    fn default() -> Self {
        MacroLayout {
            cell_radius: 500.0,
            min_distance: 35.0,
            path_loss: PathLossLaw::default(),
        }
    }
}

/// Placed users and the resulting link gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub sites: Vec<(f64, f64)>,
    /// User positions, flat user order.
    pub users: Vec<(f64, f64)>,
    /// Linear gains in link order `n * M * K + m * K + k`.
    pub path_loss: Vec<f64>,
}

impl MacroLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_radius > 0.0 && self.cell_radius.is_finite()) {
            return Err(Error::config("cell_radius must be positive"));
        }
        if !(self.min_distance > 0.0 && self.min_distance < self.cell_radius) {
            return Err(Error::config("min_distance must lie in (0, cell_radius)"));
        }
        Ok(())
    }

    /// Inter-site distance `R √3`.
    pub fn isd(&self) -> f64 {
        self.cell_radius * 3f64.sqrt()
    }

    /// Drops `users_per_bs` users uniformly over the annulus
    /// `min_distance ≤ d ≤ cell_radius` around each site.
    pub fn place<R: Rng + ?Sized>(&self, num_bs: usize, users_per_bs: usize, rng: &mut R) -> Result<Placement> {
        self.validate()?;
        let isd = self.isd();
        let sites: Vec<(f64, f64)> = hex_sites(num_bs)?.iter().map(|s| s.position(isd)).collect();
        let (r0, r1) = (self.min_distance, self.cell_radius);
        let mut users = Vec::with_capacity(num_bs * users_per_bs);
        for &(x, y) in &sites {
            for _ in 0..users_per_bs {
                // Area-uniform radius on the annulus.
                let u: f64 = rng.random();
                let d = (r0 * r0 + u * (r1 * r1 - r0 * r0)).sqrt();
                let phi = rng.random::<f64>() * std::f64::consts::TAU;
                users.push((x + d * phi.cos(), y + d * phi.sin()));
            }
        }
        let mut path_loss = Vec::with_capacity(num_bs * users.len());
        for &(sx, sy) in &sites {
            for &(ux, uy) in &users {
                let d = ((ux - sx).powi(2) + (uy - sy).powi(2)).sqrt().max(self.min_distance);
                path_loss.push(self.path_loss.gain(d));
            }
        }
        Ok(Placement {
            sites,
            users,
            path_loss,
        })
    }
}

/// `10^((dBm - 30) / 10)` watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}
