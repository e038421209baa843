//! Small quadrature and interpolation utilities shared by the solvers.

/// Adaptive Simpson integration with absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    simpson_rec(f, a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 50)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// `int_a^b tau^{-1/2} d tau`.
pub fn sqrt_panel(a: f64, b: f64) -> f64 {
    2.0 * (b.sqrt() - a.sqrt())
}

/// `int_a^b tau^{-1/2} (t - tau)^{-1/2} d tau` for `0 <= a <= b <= t`.
pub fn arcsine_panel(a: f64, b: f64, t: f64) -> f64 {
    let clamp = |v: f64| v.clamp(-1.0, 1.0);
    2.0 * (clamp((b / t).sqrt()).asin() - clamp((a / t).sqrt()).asin())
}

/// Natural cubic spline on a strictly increasing grid.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the nodes.
    m2: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        assert!(n >= 2, "spline needs at least two nodes");
        assert_eq!(n, ys.len());
        let mut m2 = vec![0.0; n];
        if n > 2 {
            // Tridiagonal solve for natural boundary conditions.
            let mut sub = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut sup = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                sub[i] = h0 / 6.0;
                diag[i] = (h0 + h1) / 3.0;
                sup[i] = h1 / 6.0;
                rhs[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
            }
            for i in 2..n - 1 {
                let w = sub[i] / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (1..n - 1).rev() {
                let upper = if i + 1 < n - 1 { sup[i] * m2[i + 1] } else { 0.0 };
                m2[i] = (rhs[i] - upper) / diag[i];
            }
        }
        CubicSpline { xs, ys, m2 }
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n - 2] {
            return n - 2;
        }
        self.xs.partition_point(|&v| v <= x) - 1
    }

    pub fn value(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m2[i] + (b * b * b - b) * self.m2[i + 1]) * h * h / 6.0
    }

    pub fn d1(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((3.0 * b * b - 1.0) * self.m2[i + 1] - (3.0 * a * a - 1.0) * self.m2[i]) * h / 6.0
    }

    pub fn d2(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.m2[i] + b * self.m2[i + 1]
    }
}

/// Piecewise-linear interpolation with clamped extrapolation.
pub fn lerp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] * (1.0 - w) + ys[i + 1] * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_integrates_gaussian() {
        let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let v = adaptive_simpson(&f, -8.0, 8.0, 1e-10);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn singular_panel_weights() {
        // int_0^1 tau^{-1/2} = 2; int_0^t tau^{-1/2}(t-tau)^{-1/2} = pi.
        assert_abs_diff_eq!(sqrt_panel(0.0, 1.0), 2.0);
        assert_abs_diff_eq!(arcsine_panel(0.0, 0.7, 0.7), std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn spline_reproduces_cubic_derivatives() {
        let xs: Vec<f64> = (0..60).map(|i| i as f64 * 0.05).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let sp = CubicSpline::new(xs, ys);
        assert_abs_diff_eq!(sp.value(1.2), 1.2f64.sin(), epsilon = 1e-6);
        assert_abs_diff_eq!(sp.d1(1.2), 1.2f64.cos(), epsilon = 1e-4);
        assert_abs_diff_eq!(sp.d2(1.2), -1.2f64.sin(), epsilon = 1e-2);
    }
}
