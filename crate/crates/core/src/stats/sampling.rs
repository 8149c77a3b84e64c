use rand::Rng;

/// One `N(0, 1)` draw by the Box–Muller transform of two uniforms.
///
/// Only the cosine branch is used so every draw consumes exactly two
/// uniforms, which keeps seeded streams aligned across call sites.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
