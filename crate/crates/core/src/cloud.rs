//! Poisson point clouds and their binary cache format.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::densities::RadialDensity;
use crate::error::{Error, Result};
use crate::geometry::{norm, random_direction};

/// A realization of a Poisson process, possibly restricted to `{|x| >= R}`.
///
/// Coordinates are stored flat, `d` per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    d: usize,
    coords: Vec<f64>,
    norms: Vec<f64>,
    pub seed: u64,
    pub n: f64,
    pub restricted_to: Option<f64>,
}

impl PointCloud {
    pub fn new(d: usize, coords: Vec<f64>) -> Result<Self> {
        if d == 0 || !coords.len().is_multiple_of(d) {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates do not split into points of dimension {d}",
                coords.len()
            )));
        }
        let norms = coords.chunks_exact(d).map(norm).collect();
        Ok(Self { d, coords, norms, seed: 0, n: 0.0, restricted_to: None })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let d = points.first().map(|p| p.as_ref().len()).unwrap_or(1);
        let mut coords = Vec::with_capacity(points.len() * d);
        for p in points {
            if p.as_ref().len() != d {
                return Err(Error::InvalidParameter("points of mixed dimension".into()));
            }
            coords.extend_from_slice(p.as_ref());
        }
        Self::new(d, coords)
    }

    pub fn with_meta(mut self, seed: u64, n: f64, restricted_to: Option<f64>) -> Self {
        self.seed = seed;
        self.n = n;
        self.restricted_to = restricted_to;
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.d)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Copy of the cloud with every point mapped through `f`.
    pub fn map_points<F: FnMut(&[f64], &mut [f64])>(&self, mut f: F) -> Self {
        let mut coords = vec![0.0; self.coords.len()];
        for (src, dst) in self.coords.chunks_exact(self.d).zip(coords.chunks_exact_mut(self.d)) {
            f(src, dst);
        }
        let mut out = Self::new(self.d, coords).expect("same shape");
        out.seed = self.seed;
        out.n = self.n;
        out.restricted_to = self.restricted_to;
        out
    }

    /// Points with norm at least `r`.
    pub fn exterior(&self, r: f64) -> Self {
        let mut coords = Vec::new();
        for (p, &nm) in self.points().zip(&self.norms) {
            if nm >= r {
                coords.extend_from_slice(p);
            }
        }
        let mut out = Self::new(self.d, coords).expect("same dimension");
        out.seed = self.seed;
        out.n = self.n;
        out.restricted_to = Some(self.restricted_to.map_or(r, |q| q.max(r)));
        out
    }

    /// Writes the fixed little-endian layout: `u64 d`, `u64 N`, `u64 seed`,
    /// then `N*d` coordinates as `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.d as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for x in &self.coords {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut header = [0u64; 3];
        for h in header.iter_mut() {
            r.read_exact(&mut word)
                .map_err(|e| Error::CloudFormat(format!("truncated header: {e}")))?;
            *h = u64::from_le_bytes(word);
        }
        let [d, count, seed] = header;
        if d == 0 || d > 64 {
            return Err(Error::CloudFormat(format!("implausible dimension {d}")));
        }
        let total = (d as usize)
            .checked_mul(count as usize)
            .ok_or_else(|| Error::CloudFormat("size overflow".into()))?;
        let mut coords = Vec::with_capacity(total.min(1 << 24));
        for _ in 0..total {
            r.read_exact(&mut word)
                .map_err(|e| Error::CloudFormat(format!("truncated body: {e}")))?;
            coords.push(f64::from_le_bytes(word));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::CloudFormat("trailing bytes after body".into()));
        }
        let mut cloud = Self::new(d as usize, coords)?;
        cloud.seed = seed;
        Ok(cloud)
    }
}

/// Poisson process with intensity `n f`, or its restriction to `{|x| >= R}`.
///
/// The restricted variant draws `N ~ Poisson(n P(|X| >= R))` points from `f`
/// conditioned on the exterior, which has the same law as sampling the full
/// process and discarding interior points.
pub fn sample_poisson_cloud<G: Rng + ?Sized>(
    n: f64,
    density: &RadialDensity,
    rng: &mut G,
    exterior_radius: Option<f64>,
) -> Result<PointCloud> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidParameter(format!("intensity n={n} must be positive")));
    }
    let d = density.d();
    let r0 = exterior_radius.unwrap_or(0.0).max(0.0);
    let mass = if r0 > 0.0 { density.survival(r0) } else { 1.0 };
    let mean = n * mass;
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::InvalidParameter(format!("Poisson mean {mean}: {e}")))?
            .sample(rng) as usize
    } else {
        0
    };
    let mut coords = vec![0.0; count * d];
    for p in coords.chunks_exact_mut(d) {
        let r = if r0 > 0.0 {
            density.sample_radius_beyond(r0, rng)
        } else {
            density.sample_radius(rng)
        };
        random_direction(rng, p);
        p.iter_mut().for_each(|x| *x *= r);
    }
    let mut cloud = PointCloud::new(d, coords)?;
    cloud.n = n;
    cloud.restricted_to = exterior_radius;
    if let Some(r) = exterior_radius {
        // rounding in the direction scaling can land a hair inside
        for (i, nm) in cloud.norms.iter_mut().enumerate() {
            if *nm < r {
                let scale = r / *nm;
                cloud.coords[i * d..(i + 1) * d].iter_mut().for_each(|x| *x *= scale);
                *nm = norm(&cloud.coords[i * d..(i + 1) * d]).max(r);
            }
        }
    }
    Ok(cloud)
}
