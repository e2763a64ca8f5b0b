use super::field::LevelSetField;

const DTAU: f64 = 0.5;

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Second-order ENO one-sided differences `(D⁻, D⁺)` along one axis, given
/// `φ` at offsets -2..=2.
fn eno2(p: [f64; 5]) -> (f64, f64) {
    let d2 = |i: usize| p[i + 1] - 2.0 * p[i] + p[i - 1];
    let minus = p[2] - p[1] + 0.5 * minmod(d2(1), d2(2));
    let plus = p[3] - p[2] - 0.5 * minmod(d2(2), d2(3));
    (minus, plus)
}

/// Godunov upwind `|∇φ|` for a front moving with the sign `s`.
fn godunov(phi: &LevelSetField, x: usize, y: usize, s: f64) -> f64 {
    let (xi, yi) = (x as isize, y as isize);
    let row = [-2, -1, 0, 1, 2].map(|d| phi.get_mirrored(xi + d, yi));
    let col = [-2, -1, 0, 1, 2].map(|d| phi.get_mirrored(xi, yi + d));
    let (a, b) = eno2(row);
    let (c, d) = eno2(col);
    let g2 = if s > 0.0 {
        a.max(0.0).powi(2).max(b.min(0.0).powi(2)) + c.max(0.0).powi(2).max(d.min(0.0).powi(2))
    } else {
        a.min(0.0).powi(2).max(b.max(0.0).powi(2)) + c.min(0.0).powi(2).max(d.max(0.0).powi(2))
    };
    g2.sqrt()
}

/// Distance from a node next to the zero level, estimated from the initial
/// field; `None` for nodes whose 4-neighbours all share their sign.
fn interface_distance(phi0: &LevelSetField, x: usize, y: usize) -> Option<f64> {
    let (xi, yi) = (x as isize, y as isize);
    let c = phi0.get(x, y);
    let n = [
        phi0.get_mirrored(xi - 1, yi),
        phi0.get_mirrored(xi + 1, yi),
        phi0.get_mirrored(xi, yi - 1),
        phi0.get_mirrored(xi, yi + 1),
    ];
    let positive = c > 0.0;
    if n.iter().all(|&v| (v > 0.0) == positive) {
        return None;
    }
    let central = (0.5 * (n[1] - n[0])).hypot(0.5 * (n[3] - n[2]));
    let slope = n
        .iter()
        .map(|v| (v - c).abs())
        .fold(central, f64::max)
        .max(1e-12);
    Some(c / slope)
}

/// Pseudo-time iterations of `φ_τ = S(φ₀)(1 - |∇φ|)`, pulling `φ` back
/// towards a signed distance function. Nodes adjacent to the zero level
/// relax towards their estimated distance instead, which keeps the
/// interface in place.
pub fn sussman_reinit(phi: &LevelSetField, sweeps: usize) -> LevelSetField {
    let (w, h) = (phi.width(), phi.height());
    let sign: Vec<f64> = phi
        .values()
        .iter()
        .map(|&v| v / (v * v + 1.0).sqrt())
        .collect();
    let anchor: Vec<Option<f64>> = (0..w * h)
        .map(|n| interface_distance(phi, n % w, n / w))
        .collect();
    let mut current = phi.clone();
    let mut next = phi.clone();
    for _ in 0..sweeps {
        {
            let out = next.values_mut();
            for y in 0..h {
                for x in 0..w {
                    let n = y * w + x;
                    let v = current.get(x, y);
                    out[n] = match anchor[n] {
                        Some(d) => v - DTAU * (phi.values()[n].signum() * v.abs() - d),
                        None => {
                            let s = sign[n];
                            v + DTAU * s * (1.0 - godunov(&current, x, y, s))
                        }
                    };
                }
            }
        }
        std::mem::swap(&mut current, &mut next);
    }
    current
}
