//! Sphere and ball measures, uniform sampling on spheres and balls.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Surface area `s_{d-1}` of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume `omega_d` of the unit ball in `R^d`.
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0)
}

/// Uniform direction on `S_{d-1}`, written into `out`.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut norm2 = 0.0;
        for x in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *x = z;
            norm2 += z * z;
        }
        if norm2 > 1e-300 {
            let inv = norm2.sqrt().recip();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}

/// Uniform point in the ball `B(0, radius)` given a radial uniform `u`.
pub fn point_in_ball<R: Rng + ?Sized>(rng: &mut R, radius: f64, u: f64, out: &mut [f64]) {
    random_direction(rng, out);
    let r = radius * u.powf(1.0 / out.len() as f64);
    out.iter_mut().for_each(|x| *x *= r);
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_dimensional_measures() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((ball_volume(1) - 2.0).abs() < 1e-14);
        assert!((ball_volume(2) - PI).abs() < 1e-13);
        assert!((ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-13);
    }
}
