//! RK4 inner loops on split real/imaginary storage.
//!
//! Off-diagonal entries of `−iH_eff` are purely imaginary for the models used
//! here, so the split layout turns each sparse-times-dense row update into two
//! multiply-adds per element with no lane shuffles. The AVX2 entry points only
//! widen the vectors; they never fuse multiply-adds, so results are identical
//! bit for bit on every x86-64 machine.

use num_complex::Complex64;

use crate::operator::SparseMatrix;

pub(crate) struct SplitMat {
    pub n: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl SplitMat {
    pub fn zeros(n: usize) -> Self {
        Self { n, re: vec![0.0; n * n], im: vec![0.0; n * n] }
    }

    pub fn from_complex(n: usize, data: &[Complex64]) -> Self {
        Self {
            n,
            re: data.iter().map(|z| z.re).collect(),
            im: data.iter().map(|z| z.im).collect(),
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)).collect()
    }

    fn clear(&mut self) {
        self.re.fill(0.0);
        self.im.fill(0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }
}

/// CSR matrix with split coefficient storage. Rows are additionally
/// partitioned into purely imaginary coefficients (handled four at a time)
/// and the rest. When every row holds at most one entry (oscillator ladder
/// operators), `single` caches a dense per-row copy for gather loops.
pub(crate) struct SplitCsr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
    imag_ptr: Vec<usize>,
    imag_cols: Vec<usize>,
    imag_vals: Vec<f64>,
    other_ptr: Vec<usize>,
    other: Vec<(usize, f64, f64)>,
    single: Option<SingleEntryRows>,
}

struct SingleEntryRows {
    cols: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
    real: bool,
}

impl SplitCsr {
    /// `alpha · s`.
    pub fn from_sparse(s: &SparseMatrix, alpha: Complex64) -> Self {
        let n = s.dim();
        let mut out = Self {
            row_ptr: vec![0],
            cols: Vec::with_capacity(s.nnz()),
            re: Vec::with_capacity(s.nnz()),
            im: Vec::with_capacity(s.nnz()),
            imag_ptr: vec![0],
            imag_cols: Vec::new(),
            imag_vals: Vec::new(),
            other_ptr: vec![0],
            other: Vec::new(),
            single: None,
        };
        for i in 0..n {
            for (j, v) in s.row(i) {
                let v = alpha * v;
                out.cols.push(j);
                out.re.push(v.re);
                out.im.push(v.im);
                if v.re == 0.0 {
                    out.imag_cols.push(j);
                    out.imag_vals.push(v.im);
                } else {
                    out.other.push((j, v.re, v.im));
                }
            }
            out.row_ptr.push(out.cols.len());
            out.imag_ptr.push(out.imag_cols.len());
            out.other_ptr.push(out.other.len());
        }
        if out.row_ptr.windows(2).all(|w| w[1] - w[0] <= 1) {
            let mut single = SingleEntryRows {
                cols: vec![0; n],
                re: vec![0.0; n],
                im: vec![0.0; n],
                real: out.im.iter().all(|&v| v == 0.0),
            };
            for i in 0..n {
                let p = out.row_ptr[i];
                if out.row_ptr[i + 1] > p {
                    single.cols[i] = out.cols[p];
                    single.re[i] = out.re[p];
                    single.im[i] = out.im[p];
                }
            }
            out.single = Some(single);
        }
        out
    }

    #[inline(always)]
    fn row(&self, i: usize) -> (&[usize], &[f64], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[s..e], &self.re[s..e], &self.im[s..e])
    }
}

/// `−iH_eff` and the rate-scaled jump operators `√γ L`.
pub(crate) struct SplitGenerator {
    pub minus_i_heff: SplitCsr,
    pub jumps: Vec<SplitCsr>,
}

#[inline(always)]
fn axpy(cr: f64, ci: f64, xr: &[f64], xi: &[f64], yr: &mut [f64], yi: &mut [f64]) {
    if ci == 0.0 {
        for ((yr, yi), (xr, xi)) in yr.iter_mut().zip(yi.iter_mut()).zip(xr.iter().zip(xi)) {
            *yr += cr * xr;
            *yi += cr * xi;
        }
    } else {
        for ((yr, yi), (xr, xi)) in yr.iter_mut().zip(yi.iter_mut()).zip(xr.iter().zip(xi)) {
            *yr += cr * xr - ci * xi;
            *yi += cr * xi + ci * xr;
        }
    }
}

/// y += Σ_k i·c_k·x_k over four rows of X at once.
#[inline(always)]
fn axpy_imag4(c: [f64; 4], rows: [usize; 4], x: &SplitMat, yr: &mut [f64], yi: &mut [f64]) {
    let n = x.n;
    let r = |k: usize| &x.re[rows[k] * n..rows[k] * n + n];
    let m = |k: usize| &x.im[rows[k] * n..rows[k] * n + n];
    let (r0, r1, r2, r3) = (r(0), r(1), r(2), r(3));
    let (m0, m1, m2, m3) = (m(0), m(1), m(2), m(3));
    let (yr, yi) = (&mut yr[..n], &mut yi[..n]);
    for j in 0..n {
        yr[j] -= c[0] * m0[j] + c[1] * m1[j] + c[2] * m2[j] + c[3] * m3[j];
        yi[j] += c[0] * r0[j] + c[1] * r1[j] + c[2] * r2[j] + c[3] * r3[j];
    }
}

#[inline(always)]
fn axpy_imag1(c: f64, row: usize, x: &SplitMat, yr: &mut [f64], yi: &mut [f64]) {
    let n = x.n;
    let (xr, xi) = (&x.re[row * n..row * n + n], &x.im[row * n..row * n + n]);
    for ((yr, yi), (xr, xi)) in yr.iter_mut().zip(yi.iter_mut()).zip(xr.iter().zip(xi)) {
        *yr -= c * xi;
        *yi += c * xr;
    }
}

/// out += A · X
#[inline(always)]
fn gemm_acc(a: &SplitCsr, x: &SplitMat, out: &mut SplitMat) {
    let n = x.n;
    for i in 0..n {
        let orow = i * n..(i + 1) * n;
        let (yr, yi) = (&mut out.re[orow.clone()], &mut out.im[orow]);
        for &(c, cr, ci) in &a.other[a.other_ptr[i]..a.other_ptr[i + 1]] {
            let xrow = c * n..(c + 1) * n;
            axpy(cr, ci, &x.re[xrow.clone()], &x.im[xrow], yr, yi);
        }
        let range = a.imag_ptr[i]..a.imag_ptr[i + 1];
        let (cols, vals) = (&a.imag_cols[range.clone()], &a.imag_vals[range]);
        let mut quads = cols.chunks_exact(4).zip(vals.chunks_exact(4));
        for (c, v) in &mut quads {
            axpy_imag4([v[0], v[1], v[2], v[3]], [c[0], c[1], c[2], c[3]], x, yr, yi);
        }
        let tail = cols.len() / 4 * 4;
        for (&c, &v) in cols[tail..].iter().zip(&vals[tail..]) {
            axpy_imag1(v, c, x, yr, yi);
        }
    }
}

/// out += s · J · X · J† for a Hermitian X.
#[inline(always)]
fn sandwich_acc(j: &SplitCsr, s: f64, x: &SplitMat, out: &mut SplitMat, scratch: &mut SplitMat) {
    let n = x.n;
    if let Some(one) = &j.single {
        // (J X J†)[i, k] = v_i X[c_i, c_k] conj(v_k)
        for i in 0..n {
            let (vr_i, vi_i) = (one.re[i], one.im[i]);
            if vr_i == 0.0 && vi_i == 0.0 {
                continue;
            }
            let src = one.cols[i] * n..(one.cols[i] + 1) * n;
            let (xr, xi) = (&x.re[src.clone()], &x.im[src]);
            let row = i * n..(i + 1) * n;
            let (yr, yi) = (&mut out.re[row.clone()], &mut out.im[row]);
            let entries = one.cols.iter().zip(&one.re).zip(&one.im);
            if one.real {
                let w = s * vr_i;
                for ((yr, yi), ((&c, &vr), _)) in yr.iter_mut().zip(yi.iter_mut()).zip(entries) {
                    *yr += w * vr * xr[c];
                    *yi += w * vr * xi[c];
                }
            } else {
                for ((yr, yi), ((&c, &vr), &vi)) in yr.iter_mut().zip(yi.iter_mut()).zip(entries) {
                    // t = X[c_i, c] conj(v), then y += s v_i t
                    let tr = xr[c] * vr + xi[c] * vi;
                    let ti = xi[c] * vr - xr[c] * vi;
                    *yr += s * (vr_i * tr - vi_i * ti);
                    *yi += s * (vr_i * ti + vi_i * tr);
                }
            }
        }
        return;
    }
    scratch.clear();
    gemm_acc_full(j, x, scratch);
    for i in 0..n {
        let row = i * n..(i + 1) * n;
        let (xr, xi) = (&scratch.re[row.clone()], &scratch.im[row.clone()]);
        let (yr, yi) = (&mut out.re[row.clone()], &mut out.im[row]);
        for k in 0..n {
            let (cols, vr, vi) = j.row(k);
            let (mut ar, mut ai) = (0.0, 0.0);
            for ((&c, &vr), &vi) in cols.iter().zip(vr).zip(vi) {
                ar += xr[c] * vr + xi[c] * vi;
                ai += xi[c] * vr - xr[c] * vi;
            }
            yr[k] += s * ar;
            yi[k] += s * ai;
        }
    }
}

/// out += A · X without the imaginary-entry partition.
#[inline(always)]
fn gemm_acc_full(a: &SplitCsr, x: &SplitMat, out: &mut SplitMat) {
    let n = x.n;
    for i in 0..n {
        let orow = i * n..(i + 1) * n;
        let (yr, yi) = (&mut out.re[orow.clone()], &mut out.im[orow]);
        let (cols, vr, vi) = a.row(i);
        for ((&c, &cr), &ci) in cols.iter().zip(vr).zip(vi) {
            let xrow = c * n..(c + 1) * n;
            axpy(cr, ci, &x.re[xrow.clone()], &x.im[xrow], yr, yi);
        }
    }
}

/// W ← W + W†, going through a blocked transpose in `t`.
#[inline(always)]
fn hermitize(w: &mut SplitMat, t: &mut SplitMat) {
    const B: usize = 16;
    let n = w.n;
    for ib in (0..n).step_by(B) {
        for kb in (0..n).step_by(B) {
            for i in ib..(ib + B).min(n) {
                for k in kb..(kb + B).min(n) {
                    t.re[k * n + i] = w.re[i * n + k];
                    t.im[k * n + i] = w.im[i * n + k];
                }
            }
        }
    }
    for (a, b) in w.re.iter_mut().zip(&t.re) {
        *a += b;
    }
    for (a, b) in w.im.iter_mut().zip(&t.im) {
        *a -= b;
    }
}

#[inline(always)]
fn rhs_body(g: &SplitGenerator, rho: &SplitMat, out: &mut SplitMat, scratch: &mut SplitMat) {
    out.clear();
    gemm_acc(&g.minus_i_heff, rho, out);
    hermitize(out, scratch);
    // J ρ J† is Hermitian already, so it is added after the completion.
    for j in &g.jumps {
        sandwich_acc(j, 1.0, rho, out, scratch);
    }
}

/// Reference entry point used by tests.
#[cfg(test)]
pub(crate) fn rhs(g: &SplitGenerator, rho: &SplitMat, out: &mut SplitMat, scratch: &mut SplitMat) {
    rhs_body(g, rho, out, scratch)
}

pub(crate) struct Rk4 {
    acc: SplitMat,
    stage: SplitMat,
    k: SplitMat,
    scratch: SplitMat,
}

/// y' = y + h·k, written into `dst`; also accumulates `acc += w·k`.
#[inline(always)]
fn combine(dst: &mut [f64], acc: &mut [f64], y: &[f64], k: &[f64], h: f64, w: f64) {
    for ((d, a), (y, k)) in dst.iter_mut().zip(acc.iter_mut()).zip(y.iter().zip(k)) {
        *d = y + h * k;
        *a += w * k;
    }
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self {
            acc: SplitMat::zeros(n),
            stage: SplitMat::zeros(n),
            k: SplitMat::zeros(n),
            scratch: SplitMat::zeros(n),
        }
    }

    #[inline(always)]
    fn step_body(&mut self, g: &SplitGenerator, y: &mut SplitMat, h: f64) {
        let Self { acc, stage, k, scratch } = self;
        acc.re.copy_from_slice(&y.re);
        acc.im.copy_from_slice(&y.im);
        let stages = [(h / 2.0, h / 6.0), (h / 2.0, h / 3.0), (h, h / 3.0)];
        rhs_body(g, y, k, scratch);
        for (idx, &(hs, w)) in stages.iter().enumerate() {
            if idx > 0 {
                rhs_body(g, stage, k, scratch);
            }
            combine(&mut stage.re, &mut acc.re, &y.re, &k.re, hs, w);
            combine(&mut stage.im, &mut acc.im, &y.im, &k.im, hs, w);
        }
        rhs_body(g, stage, k, scratch);
        for (a, k) in acc.re.iter_mut().zip(&k.re) {
            *a += h / 6.0 * k;
        }
        for (a, k) in acc.im.iter_mut().zip(&k.im) {
            *a += h / 6.0 * k;
        }
        std::mem::swap(&mut y.re, &mut acc.re);
        std::mem::swap(&mut y.im, &mut acc.im);
    }

    #[inline(always)]
    fn advance_body(&mut self, g: &SplitGenerator, y: &mut SplitMat, length: f64, dt: f64) {
        let mut remaining = length;
        while remaining > 1e-14 {
            let h = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
            self.step_body(g, y, h);
            remaining -= h;
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn advance_avx2(&mut self, g: &SplitGenerator, y: &mut SplitMat, length: f64, dt: f64) {
        self.advance_body(g, y, length, dt)
    }

    /// Steps of `dt`, the last one shortened to land exactly on `length`.
    pub fn advance(&mut self, g: &SplitGenerator, y: &mut SplitMat, length: f64, dt: f64) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected at runtime.
            return unsafe { self.advance_avx2(g, y, length, dt) };
        }
        self.advance_body(g, y, length, dt)
    }
}
