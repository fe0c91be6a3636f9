//! Null distribution of the standardized k-sample Anderson-Darling statistic.
//!
//! Inside the tabulated range the p-value comes from the Scholz-Stephens
//! critical values `b0 + b1/sqrt(m) + b2/m`, interpolated quadratically in
//! `ln(p)`. Above the largest tabulated level (p > 0.25) the p-value is read
//! off the limiting distribution `sum_j chi2_m / (j (j + 1))`, evaluated by
//! Imhof inversion. Below the smallest level the p-value is floored.

use num_complex::Complex64;

use super::anderson::PValueSource;

pub const SIGNIFICANCE_LEVELS: [f64; 7] = [0.25, 0.1, 0.05, 0.025, 0.01, 0.005, 0.001];
const B0: [f64; 7] = [0.675, 1.281, 1.645, 1.96, 2.326, 2.573, 3.085];
const B1: [f64; 7] = [-0.245, 0.25, 0.678, 1.149, 1.822, 2.364, 3.615];
const B2: [f64; 7] = [-0.105, -0.305, -0.362, -0.391, -0.396, -0.345, -0.154];

/// Critical values of the standardized statistic for `m = k - 1`, one per
/// entry of [`SIGNIFICANCE_LEVELS`].
pub fn critical_values(m: usize) -> [f64; 7] {
    let mf = m as f64;
    std::array::from_fn(|i| B0[i] + B1[i] / mf.sqrt() + B2[i] / mf)
}

/// p-value of standardized statistic `t` with `m = k - 1` degrees of freedom.
pub fn asymptotic_pvalue(t: f64, m: usize) -> (f64, PValueSource) {
    let crit = critical_values(m);
    if t < crit[0] {
        let mf = m as f64;
        let sigma = (2.0 * mf * (std::f64::consts::PI.powi(2) / 3.0 - 3.0)).sqrt();
        let p = limit_survival(mf + t * sigma, m);
        return (p.clamp(0.0, 1.0), PValueSource::LimitDistribution);
    }
    if t > crit[6] {
        return (SIGNIFICANCE_LEVELS[6], PValueSource::Floored);
    }
    let log_sig = SIGNIFICANCE_LEVELS.map(f64::ln);
    let [c0, c1, c2] = quadratic_fit(&crit, &log_sig);
    let p = (c0 + c1 * t + c2 * t * t).exp();
    (p.clamp(0.0, 1.0), PValueSource::Interpolated)
}

/// Least-squares coefficients `[c0, c1, c2]` of `y = c0 + c1 x + c2 x^2`.
fn quadratic_fit(x: &[f64], y: &[f64]) -> [f64; 3] {
    let mut s = [0.0f64; 5];
    let mut r = [0.0f64; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let mut p = 1.0;
        for (e, acc) in s.iter_mut().enumerate() {
            *acc += p;
            if e < 3 {
                r[e] += p * yi;
            }
            p *= xi;
        }
    }
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det = |a: &[[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(&m);
    std::array::from_fn(|col| {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = r[row];
        }
        det(&mc) / d
    })
}

/// `prod_{j>=1} (1 + i u / (j (j + 1)))` in closed form:
/// `cos(pi w) / (i pi u)` with `w = sqrt(1/4 - i u)`.
fn weight_product(u: f64) -> Complex64 {
    if u == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let w = (Complex64::new(0.25, -u)).sqrt();
    (w * std::f64::consts::PI).cos() / Complex64::new(0.0, std::f64::consts::PI * u)
}

/// `P(L > x)` for `L = sum_{j>=1} X_j / (j (j + 1))` with independent
/// `X_j ~ chi2_m`, the limit of the unstandardized k-sample statistic.
pub fn limit_survival(x: f64, m: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mf = m as f64;
    // Imhof: P(L > x) = 1/2 + 1/pi int_0^inf sin(theta(u)) / (u rho(u)) du,
    // theta = m/2 * arg P(u) - x u / 2, rho = |P(u)|^(m/2), with arg P
    // unwrapped continuously from 0.
    let freq = 0.5 * mf.max(x);
    let h = (std::f64::consts::PI / (20.0 * freq)).min(0.05);
    let integrand_at = |u: f64, phase: f64, modulus: f64| -> f64 {
        let theta = 0.5 * mf * phase - 0.5 * x * u;
        theta.sin() / (u * modulus.powf(0.5 * mf))
    };

    // u -> 0 limit of the integrand: (m * sum_j 1/(j(j+1)) - x) / 2
    let f0 = 0.5 * (mf - x);
    let mut phase = 0.0;
    let mut prev_arg = 0.0;
    let mut sum = f0;
    let mut i = 0usize;
    loop {
        i += 1;
        let u = i as f64 * h;
        let p = weight_product(u);
        let arg = p.arg();
        let mut d = arg - prev_arg;
        if d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        } else if d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        phase += d;
        prev_arg = arg;
        let modulus = p.norm();
        let f = integrand_at(u, phase, modulus);
        // Simpson weights 4, 2, 4, ..., closing on an even index
        let envelope = 1.0 / (u * modulus.powf(0.5 * mf));
        if i % 2 == 0 && (envelope < 1e-12 || u > 20_000.0) {
            sum += f;
            break;
        }
        sum += if i % 2 == 1 { 4.0 * f } else { 2.0 * f };
    }
    0.5 + sum * h / 3.0 / std::f64::consts::PI
}
