//! Least-squares helpers for log-log exponent fits.

/// Ordinary least-squares line through `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (0 for exactly two points).
    pub slope_se: f64,
    pub n: usize,
}

impl LineFit {
    /// 95% normal-approximation confidence interval for the slope.
    pub fn ci95(&self) -> (f64, f64) {
        (self.slope - 1.96 * self.slope_se, self.slope + 1.96 * self.slope_se)
    }
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let rss: f64 = (0..n)
            .map(|i| {
                let r = y[i] - intercept - slope * x[i];
                r * r
            })
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LineFit {
        slope,
        intercept,
        slope_se,
        n,
    })
}

/// Fits `log y = a + s log x` on strictly positive pairs.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    linear_fit(&lx, &ly)
}

/// Bins `(x, y)` logarithmically in `x` over `[lo, hi]` and keeps the
/// maximum `y` per bin; the envelope is then fitted in log-log scale.
/// This is how decay exponents of kernel sup-bounds are read off.
pub fn envelope_fit(x: &[f64], y: &[f64], lo: f64, hi: f64, bins: usize) -> Option<LineFit> {
    let (bx, by) = binned_max(x, y, lo, hi, bins);
    loglog_fit(&bx, &by)
}

/// Per-bin maxima used by [`envelope_fit`]; bin centres are geometric.
pub fn binned_max(x: &[f64], y: &[f64], lo: f64, hi: f64, bins: usize) -> (Vec<f64>, Vec<f64>) {
    let llo = lo.ln();
    let width = (hi.ln() - llo) / bins as f64;
    let mut best = vec![f64::NAN; bins];
    for (a, b) in x.iter().zip(y) {
        if !(*a >= lo && *a < hi) || !(*b > 0.0) || !b.is_finite() {
            continue;
        }
        let k = (((a.ln() - llo) / width) as usize).min(bins - 1);
        if best[k].is_nan() || *b > best[k] {
            best[k] = *b;
        }
    }
    let mut bx = Vec::new();
    let mut by = Vec::new();
    for (k, v) in best.iter().enumerate() {
        if !v.is_nan() {
            bx.push((llo + (k as f64 + 0.5) * width).exp());
            by.push(*v);
        }
    }
    (bx, by)
}

/// Slope shared by several groups, each with its own intercept
/// (within-group demeaning). Used for volume growth where every centre
/// has a different constant in front of `r^s`.
pub fn fixed_effects_slope(groups: &[(Vec<f64>, Vec<f64>)]) -> Option<LineFit> {
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut resid = Vec::new();
    let mut npts = 0usize;
    let mut ngroups = 0usize;
    let mut demeaned = Vec::new();
    for (x, y) in groups {
        if x.len() < 2 {
            continue;
        }
        let m = x.len() as f64;
        let mx = x.iter().sum::<f64>() / m;
        let my = y.iter().sum::<f64>() / m;
        for (a, b) in x.iter().zip(y) {
            sxx += (a - mx) * (a - mx);
            sxy += (a - mx) * (b - my);
            demeaned.push((a - mx, b - my));
        }
        npts += x.len();
        ngroups += 1;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    for (a, b) in &demeaned {
        resid.push(b - slope * a);
    }
    let dof = npts.saturating_sub(ngroups + 1).max(1) as f64;
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    Some(LineFit {
        slope,
        intercept: 0.0,
        slope_se: (rss / dof / sxx).sqrt(),
        n: npts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let x: Vec<f64> = (1..20).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|t| 3.0 * t.powf(2.5)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-12);
        assert!((f.intercept - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fixed_effects_ignores_offsets() {
        let g: Vec<(Vec<f64>, Vec<f64>)> = (1..5)
            .map(|c| {
                let x: Vec<f64> = (0..6).map(|k| k as f64).collect();
                let y = x.iter().map(|t| 2.0 * t + c as f64).collect();
                (x, y)
            })
            .collect();
        let f = fixed_effects_slope(&g).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_takes_bin_maxima() {
        let x = [0.1, 0.1, 1.0, 1.0];
        let y = [1.0, 5.0, 2.0, 0.5];
        let (bx, by) = binned_max(&x, &y, 0.05, 2.0, 2);
        assert_eq!(by, vec![5.0, 2.0]);
        assert_eq!(bx.len(), 2);
    }
}
