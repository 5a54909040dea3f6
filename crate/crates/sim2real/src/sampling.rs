//! Point samplers over the unit cube and balls clipped to it.

use rand::Rng;
use rand_distr::StandardNormal;

/// Uniform point of `[0,1]^dim`.
pub fn uniform_cube<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

/// Uniform direction on the unit sphere.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

/// Uniform point of the unit ball.
pub fn unit_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let u: f64 = rng.random();
    let r = u.powf(1.0 / dim as f64);
    unit_direction(rng, dim).into_iter().map(|a| a * r).collect()
}

pub(crate) fn in_cube(x: &[f64]) -> bool {
    x.iter().all(|v| (0.0..=1.0).contains(v))
}

pub(crate) fn offset(x: &[f64], dir: &[f64], scale: f64) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, d)| a + scale * d).collect()
}

/// Volume-uniform point of the ball of `radius` around `x`, restricted to
/// the cube by rejection.
pub fn ball_in_cube<R: Rng + ?Sized>(rng: &mut R, x: &[f64], radius: f64) -> Vec<f64> {
    loop {
        let p = offset(x, &unit_ball(rng, x.len()), radius);
        if in_cube(&p) {
            return p;
        }
    }
}

/// Point at a uniformly drawn distance in `(0, radius]` and a uniform
/// direction from `x`, restricted to the cube by rejection.
///
/// Unlike volume-uniform sampling this keeps short perturbations common in
/// high dimension, which is where a maximum rate of change is attained.
pub fn radial_in_cube<R: Rng + ?Sized>(rng: &mut R, x: &[f64], radius: f64) -> Vec<f64> {
    loop {
        let r = radius * (1.0 - rng.random::<f64>());
        let p = offset(x, &unit_direction(rng, x.len()), r);
        if in_cube(&p) && p != x {
            return p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RngStream;

    #[test]
    fn samplers_stay_in_cube_and_ball() {
        let mut rng = RngStream::new(1, "t").rng();
        let x = vec![0.0, 1.0, 0.5];
        for _ in 0..500 {
            let p = ball_in_cube(&mut rng, &x, 0.3);
            assert!(in_cube(&p));
            let d: f64 = p.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(d <= 0.3 + 1e-12);
            let q = radial_in_cube(&mut rng, &x, 0.3);
            assert!(in_cube(&q) && q != x);
        }
        let dir = unit_direction(&mut rng, 7);
        assert!((dir.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
