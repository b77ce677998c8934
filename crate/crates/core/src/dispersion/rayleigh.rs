//! Rayleigh secular function in Dunkin's compound (delta) matrix form.
//!
//! The 5-vector of 2x2 minors is propagated from the half-space to the free
//! surface. Growing exponentials are factored out of every layer and the
//! vector is renormalized after each layer, so the recursion stays finite at
//! short periods. Only positive factors are dropped, which leaves the sign of
//! the result (and therefore its roots) untouched.

use crate::earth_model::{LayeredModel, Medium};

/// `sqrt(|k^2 - kx^2|)` written to keep precision near `k = kx`.
#[inline]
fn vertical_wavenumber(k: f64, kx: f64) -> f64 {
    ((k + kx) * (k - kx).abs()).sqrt()
}

/// Cosine/sine-like terms of one potential in one layer.
///
/// Returns `(cos, w, x, exponent)` where for the evanescent branch the
/// hyperbolic functions have been multiplied by `exp(-exponent)`.
#[inline]
fn layer_terms(k: f64, kx: f64, r: f64, phase: f64, thickness: f64) -> (f64, f64, f64, f64) {
    if k < kx {
        let (s, c) = phase.sin_cos();
        (c, s / r, -r * s, 0.0)
    } else if k == kx {
        (1.0, thickness, 0.0, 0.0)
    } else {
        let fac = if phase < 16.0 { (-2.0 * phase).exp() } else { 0.0 };
        let cosh = 0.5 * (1.0 + fac);
        let sinh = 0.5 * (1.0 - fac);
        (cosh, sinh / r, r * sinh, phase)
    }
}

pub(crate) fn secular(model: &LayeredModel, omega: f64, c: f64) -> f64 {
    let k = omega / c;
    let k2 = k * k;

    let hs = model.halfspace();
    let ra = vertical_wavenumber(k, omega / hs.vp);
    let rb = vertical_wavenumber(k, omega / hs.vs);
    let t = hs.vs / omega;
    let gammk = 2.0 * t * t;
    let gam = gammk * k2;
    let gamm1 = gam - 1.0;
    let rho = hs.rho;
    let mut e = [
        rho * rho * (gamm1 * gamm1 - gam * gammk * ra * rb),
        -rho * ra,
        rho * (gamm1 - gammk * ra * rb),
        rho * rb,
        k2 - ra * rb,
    ];

    let thicknesses = model.grid().thicknesses();
    for (layer, &h) in model.layers().iter().zip(thicknesses).rev() {
        let ca = dunkin_layer(layer, omega, k, k2, h);
        let mut ee = [0.0; 5];
        for (i, out) in ee.iter_mut().enumerate() {
            *out = e[0] * ca[0][i] + e[1] * ca[1][i] + e[2] * ca[2][i] + e[3] * ca[3][i] + e[4] * ca[4][i];
        }
        let mut norm = ee.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm < 1e-30 {
            norm = 1.0;
        }
        for (dst, src) in e.iter_mut().zip(ee) {
            *dst = src / norm;
        }
    }
    e[0]
}

fn dunkin_layer(layer: &Medium, omega: f64, k: f64, k2: f64, h: f64) -> [[f64; 5]; 5] {
    let ka = omega / layer.vp;
    let kb = omega / layer.vs;
    let t = layer.vs / omega;
    let gammk = 2.0 * t * t;
    let gam = gammk * k2;
    let ra = vertical_wavenumber(k, ka);
    let rb = vertical_wavenumber(k, kb);
    let (cosp, w, x, pex) = layer_terms(k, ka, ra, ra * h, h);
    let (cosq, y, z, sex) = layer_terms(k, kb, rb, rb * h, h);

    let exa = pex + sex;
    let a0 = if exa < 60.0 { (-exa).exp() } else { 0.0 };
    let cpcq = cosp * cosq;
    let cpy = cosp * y;
    let cpz = cosp * z;
    let cqw = cosq * w;
    let cqx = cosq * x;
    let xy = x * y;
    let xz = x * z;
    let wy = w * y;
    let wz = w * z;

    let rho = layer.rho;
    let gamm1 = gam - 1.0;
    let twgm1 = gam + gamm1;
    let gmgmk = gam * gammk;
    let gmgm1 = gam * gamm1;
    let gm1sq = gamm1 * gamm1;
    let rho2 = rho * rho;
    let a0pq = a0 - cpcq;
    let tk = -2.0 * k2;

    let mut ca = [[0.0; 5]; 5];
    ca[0][0] = cpcq - 2.0 * gmgm1 * a0pq - gmgmk * xz - k2 * gm1sq * wy;
    ca[0][1] = (k2 * cpy - cqx) / rho;
    ca[0][2] = -(twgm1 * a0pq + gammk * xz + k2 * gamm1 * wy) / rho;
    ca[0][3] = (cpz - k2 * cqw) / rho;
    ca[0][4] = -(2.0 * k2 * a0pq + xz + k2 * k2 * wy) / rho2;

    ca[1][0] = (gmgmk * cpz - gm1sq * cqw) * rho;
    ca[1][1] = cpcq;
    ca[1][2] = gammk * cpz - gamm1 * cqw;
    ca[1][3] = -wz;
    ca[1][4] = ca[0][3];

    ca[3][0] = (gm1sq * cpy - gmgmk * cqx) * rho;
    ca[3][1] = -xy;
    ca[3][2] = gamm1 * cpy - gammk * cqx;
    ca[3][3] = ca[1][1];
    ca[3][4] = ca[0][1];

    ca[4][0] = -(2.0 * gmgmk * gm1sq * a0pq + gmgmk * gmgmk * xz + gm1sq * gm1sq * wy) * rho2;
    ca[4][1] = ca[3][0];
    ca[4][2] = -(gammk * gamm1 * twgm1 * a0pq + gam * gammk * gammk * xz + gamm1 * gm1sq * wy) * rho;
    ca[4][3] = ca[1][0];
    ca[4][4] = ca[0][0];

    ca[2][0] = tk * ca[4][2];
    ca[2][1] = tk * ca[3][2];
    ca[2][2] = a0 + 2.0 * (cpcq - ca[0][0]);
    ca[2][3] = tk * ca[1][2];
    ca[2][4] = tk * ca[0][2];
    ca
}
