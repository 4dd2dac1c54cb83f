//! Damped Gauss–Newton for the two-parameter saturating exponential
//! `y(z) = a·(1 − exp(−b·z))`.

pub const MAX_ITERATIONS: usize = 200;
/// Converged once `‖δ‖ / max(‖p‖, 1e-12)` falls below this.
pub const STEP_TOLERANCE: f64 = 1e-10;

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub a: f64,
    pub b: f64,
    pub iterations: usize,
    pub rms: f64,
    pub converged: bool,
}

fn model(a: f64, b: f64, z: f64) -> f64 {
    a * -(-b * z).exp_m1()
}

fn cost(a: f64, b: f64, zs: &[f64], ys: &[f64]) -> f64 {
    zs.iter().zip(ys).map(|(z, y)| (y - model(a, b, *z)).powi(2)).sum()
}

/// Fits `a ∈ a_bounds`, `b ∈ b_bounds` starting from `init`.
///
/// Each iteration solves `(JᵀJ + λ·diag(JᵀJ))·δ = Jᵀr`; λ shrinks tenfold on
/// an accepted step and grows tenfold on a rejected one. Steps are projected
/// onto the bounds.
pub fn fit_saturating_exponential(
    zs: &[f64],
    ys: &[f64],
    init: (f64, f64),
    a_bounds: (f64, f64),
    b_bounds: (f64, f64),
) -> SolverReport {
    let project = |a: f64, b: f64| (a.clamp(a_bounds.0, a_bounds.1), b.clamp(b_bounds.0, b_bounds.1));
    let (mut a, mut b) = project(init.0, init.1);
    let mut c = cost(a, b, zs, ys);
    let mut lambda = LAMBDA_INIT;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (mut h11, mut h12, mut h22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&z, &y) in zs.iter().zip(ys) {
            let e = (-b * z).exp();
            let ja = 1.0 - e;
            let jb = a * z * e;
            let r = y - model(a, b, z);
            h11 += ja * ja;
            h12 += ja * jb;
            h22 += jb * jb;
            g1 += ja * r;
            g2 += jb * r;
        }
        if g1 == 0.0 && g2 == 0.0 {
            converged = true;
            break;
        }
        loop {
            let d11 = h11 + lambda * h11.max(1e-12);
            let d22 = h22 + lambda * h22.max(1e-12);
            let det = d11 * d22 - h12 * h12;
            let (da, db) = if det.abs() > 0.0 {
                ((d22 * g1 - h12 * g2) / det, (d11 * g2 - h12 * g1) / det)
            } else {
                (0.0, 0.0)
            };
            let (na, nb) = project(a + da, b + db);
            let step = ((na - a).powi(2) + (nb - b).powi(2)).sqrt();
            let scale = (a * a + b * b).sqrt().max(1e-12);
            let nc = cost(na, nb, zs, ys);
            if nc <= c {
                a = na;
                b = nb;
                c = nc;
                lambda = (lambda / 10.0).max(1e-12);
                if step / scale < STEP_TOLERANCE {
                    converged = true;
                }
                break;
            }
            if step / scale < STEP_TOLERANCE || lambda >= LAMBDA_MAX {
                // No descent left at any damping: a stationary point.
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
    }
    SolverReport {
        a,
        b,
        iterations,
        rms: (c / zs.len().max(1) as f64).sqrt(),
        converged,
    }
}
