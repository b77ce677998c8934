//! Love-wave secular function from SH propagator products.

use crate::earth_model::LayeredModel;

pub(crate) fn secular(model: &LayeredModel, omega: f64, c: f64) -> f64 {
    let k = omega / c;
    let hs = model.halfspace();
    let kb = omega / hs.vs;
    let rb = ((k + kb) * (k - kb).abs()).sqrt();
    let mut e1 = hs.rho * rb;
    let mut e2 = 1.0 / (hs.vs * hs.vs);

    let thicknesses = model.grid().thicknesses();
    for (layer, &h) in model.layers().iter().zip(thicknesses).rev() {
        let mu = layer.rho * layer.vs * layer.vs;
        let kb = omega / layer.vs;
        let rb = ((k + kb) * (k - kb).abs()).sqrt();
        let q = h * rb;
        let (cosq, y, z) = if k < kb {
            let (s, c) = q.sin_cos();
            (c, s / rb, -rb * s)
        } else if k == kb {
            (1.0, h, 0.0)
        } else {
            let fac = if q < 16.0 { (-2.0 * q).exp() } else { 0.0 };
            let sinh = 0.5 * (1.0 - fac);
            (0.5 * (1.0 + fac), sinh / rb, rb * sinh)
        };
        let n1 = e1 * cosq + e2 * mu * z;
        let n2 = e1 * y / mu + e2 * cosq;
        let mut norm = n1.abs().max(n2.abs());
        if norm < 1e-40 {
            norm = 1.0;
        }
        e1 = n1 / norm;
        e2 = n2 / norm;
    }
    e1
}
