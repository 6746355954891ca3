//! Chi-square upper quantiles from the regularized incomplete gamma function.

use crate::error::{Error, Result};

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized `(P(a, x), Q(a, x))`.
fn gamma_pq(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        let p = (log_prefix.exp() * sum).min(1.0);
        (p, 1.0 - p)
    } else {
        // modified Lentz continued fraction for Q
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-17 {
                break;
            }
        }
        let q = (log_prefix.exp() * h).min(1.0);
        (1.0 - q, q)
    }
}

/// `P(χ²_dof > q)`.
pub fn chi2_sf(q: f64, dof: usize) -> f64 {
    gamma_pq(dof as f64 / 2.0, q / 2.0).1
}

fn chi2_pdf(q: f64, dof: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let k = dof as f64 / 2.0;
    ((k - 1.0) * q.ln() - q / 2.0 - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Value `q` with `P(χ²_dof > q) = alpha`.
pub fn chi2_quantile(alpha: f64, dof: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha = {alpha} outside (0, 1)")));
    }
    if dof == 0 {
        return Err(Error::Parameter("chi-square needs dof >= 1".into()));
    }
    let k = dof as f64;
    // Wilson-Hilferty start
    let z = normal_upper_quantile(alpha);
    let c = 2.0 / (9.0 * k);
    let mut q = (k * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8);
    let (mut lo, mut hi) = (0.0_f64, q.max(1.0));
    while chi2_sf(hi, dof) > alpha {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let f = chi2_sf(q, dof) - alpha;
        if f > 0.0 {
            lo = lo.max(q);
        } else {
            hi = hi.min(q);
        }
        let pdf = chi2_pdf(q, dof);
        let mut next = if pdf > 0.0 { q + f / pdf } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - q).abs() <= 1e-14 * q.max(1.0) {
            return Ok(next);
        }
        q = next;
    }
    Ok(q)
}

/// Upper standard normal quantile (Acklam's rational approximation), used
/// only to seed the iteration.
fn normal_upper_quantile(alpha: f64) -> f64 {
    let p = 1.0 - alpha;
    let a = [-39.696_830_286_653_76, 220.946_098_424_520_8, -275.928_510_446_968_7, 138.357_751_867_269, -30.664_798_066_147_16, 2.506_628_277_459_239];
    let b = [-54.476_098_798_224_06, 161.585_836_858_040_9, -155.698_979_859_886_6, 66.801_311_887_719_72, -13.280_681_552_885_72];
    let c = [-0.007_784_894_002_430_293, -0.322_396_458_041_136_5, -2.400_758_277_161_838, -2.549_732_539_343_734, 4.374_664_141_464_968, 2.938_163_982_698_783];
    let d = [0.007_784_695_709_041_462, 0.322_467_129_070_039_8, 2.445_134_137_142_996, 3.754_408_661_907_416];
    let tail = |q: f64| {
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    }
}
