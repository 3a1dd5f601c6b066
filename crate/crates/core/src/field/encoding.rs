use std::f64::consts::PI;

/// Sinusoidal encoding of a point in the unit cube: for each axis and band
/// `j < bands`, `sin(2^j pi x)` then `cos(2^j pi x)`.
pub fn positional_encoding(x: [f64; 3], bands: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * bands);
    for c in x {
        for j in 0..bands {
            let a = (1u64 << j) as f64 * PI * c;
            out.push(a.sin());
            out.push(a.cos());
        }
    }
    out
}
