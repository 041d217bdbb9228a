//! Real-to-complex 3D FFT on x-fastest data.
//!
//! Spectral arrays hold the half spectrum along x: index `a + nxh * (b + ny * c)`
//! with `a in 0..=nx/2`, `nxh = nx/2 + 1`, and `b`, `c` the usual FFT ordering
//! along y and z. The forward transform carries the `1/N` factor so the
//! zero mode equals the sample mean.
//!
//! Both directions accept an optional band `[bx, by, bz]`: only modes with
//! `|m_i| <= b_i` are produced (forward) or read (inverse). Lines that lie
//! entirely outside the band are skipped, which is where dealiased transforms
//! save most of their time.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub type Band = Option<[usize; 3]>;

#[derive(Clone)]
pub struct RealFft3 {
    nx: usize,
    ny: usize,
    nz: usize,
    nxh: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    fwd_z: Arc<dyn Fft<f64>>,
    inv_z: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RealFft3({}x{}x{})", self.nx, self.ny, self.nz)
    }
}

/// Raw pointer that may cross threads; callers guarantee disjoint access.
#[derive(Clone, Copy)]
struct SharedMut(*mut Complex64);
unsafe impl Send for SharedMut {}
unsafe impl Sync for SharedMut {}

impl RealFft3 {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        RealFft3 {
            nx,
            ny,
            nz,
            nxh: nx / 2 + 1,
            r2c: rp.plan_fft_forward(nx),
            c2r: rp.plan_fft_inverse(nx),
            fwd_y: cp.plan_fft_forward(ny),
            inv_y: cp.plan_fft_inverse(ny),
            fwd_z: cp.plan_fft_forward(nz),
            inv_z: cp.plan_fft_inverse(nz),
        }
    }

    pub fn real_len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn spectral_len(&self) -> usize {
        self.nxh * self.ny * self.nz
    }

    pub fn spectral_dims(&self) -> [usize; 3] {
        [self.nxh, self.ny, self.nz]
    }

    #[inline]
    fn in_band(idx: usize, n: usize, b: usize) -> bool {
        idx <= b || idx >= n - b
    }

    fn x_limit(&self, band: Band) -> usize {
        band.map_or(self.nxh, |b| (b[0] + 1).min(self.nxh))
    }

    /// Forward transform of real samples into the half spectrum.
    pub fn forward(&self, input: &[f64], out: &mut [Complex64]) {
        self.forward_band(input, out, None);
    }

    /// Forward transform keeping only the modes inside `band`; the rest are zero.
    pub fn forward_band(&self, input: &[f64], out: &mut [Complex64], band: Band) {
        assert_eq!(input.len(), self.real_len());
        assert_eq!(out.len(), self.spectral_len());
        let (nx, ny, nxh) = (self.nx, self.ny, self.nxh);
        let na = self.x_limit(band);

        out.par_chunks_mut(nxh * ny)
            .zip(input.par_chunks(nx * ny))
            .for_each_init(
                || PlaneScratch::new(self),
                |s, (plane, src)| {
                    for j in 0..ny {
                        s.row.copy_from_slice(&src[j * nx..(j + 1) * nx]);
                        self.r2c
                            .process_with_scratch(
                                &mut s.row,
                                &mut plane[j * nxh..(j + 1) * nxh],
                                &mut s.real_scratch,
                            )
                            .expect("r2c length");
                    }
                    transform_columns(
                        plane,
                        nxh,
                        ny,
                        na,
                        &*self.fwd_y,
                        &mut s.lines,
                        &mut s.scratch,
                    );
                },
            );

        let scale = 1.0 / self.real_len() as f64;
        self.transform_z(out, &*self.fwd_z, scale, band);
        if let Some(b) = band {
            self.zero_outside(out, b);
        }
    }

    pub fn forward_alloc(&self, input: &[f64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.spectral_len()];
        self.forward(input, &mut out);
        out
    }

    /// Inverse transform. `spectrum` is used as workspace and left in an unspecified state.
    pub fn inverse_in_place(&self, spectrum: &mut [Complex64], out: &mut [f64]) {
        self.inverse_band_in_place(spectrum, out, None);
    }

    /// Inverse transform of a spectrum assumed to vanish outside `band`.
    pub fn inverse_band_in_place(&self, spectrum: &mut [Complex64], out: &mut [f64], band: Band) {
        assert_eq!(spectrum.len(), self.spectral_len());
        assert_eq!(out.len(), self.real_len());
        let (nx, ny, nxh) = (self.nx, self.ny, self.nxh);
        let na = self.x_limit(band);
        if let Some(b) = band {
            self.zero_outside(spectrum, b);
        }

        self.transform_z(spectrum, &*self.inv_z, 1.0, band);

        spectrum
            .par_chunks_mut(nxh * ny)
            .zip(out.par_chunks_mut(nx * ny))
            .for_each_init(
                || PlaneScratch::new(self),
                |s, (plane, dst)| {
                    transform_columns(
                        plane,
                        nxh,
                        ny,
                        na,
                        &*self.inv_y,
                        &mut s.lines,
                        &mut s.scratch,
                    );
                    for j in 0..ny {
                        let row = &mut plane[j * nxh..(j + 1) * nxh];
                        // A real signal has purely real DC and Nyquist bins.
                        row[0].im = 0.0;
                        if nx % 2 == 0 {
                            row[nxh - 1].im = 0.0;
                        }
                        self.c2r
                            .process_with_scratch(
                                row,
                                &mut dst[j * nx..(j + 1) * nx],
                                &mut s.complex_scratch,
                            )
                            .expect("c2r length");
                    }
                },
            );
    }

    pub fn inverse(&self, spectrum: &[Complex64], out: &mut [f64], work: &mut Vec<Complex64>) {
        work.clear();
        work.extend_from_slice(spectrum);
        self.inverse_in_place(work, out);
    }

    pub fn inverse_band(
        &self,
        spectrum: &[Complex64],
        out: &mut [f64],
        work: &mut Vec<Complex64>,
        band: Band,
    ) {
        work.clear();
        work.extend_from_slice(spectrum);
        self.inverse_band_in_place(work, out, band);
    }

    pub fn inverse_alloc(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.real_len()];
        let mut work = Vec::new();
        self.inverse(spectrum, &mut out, &mut work);
        out
    }

    fn zero_outside(&self, data: &mut [Complex64], b: [usize; 3]) {
        let (nxh, ny, nz) = (self.nxh, self.ny, self.nz);
        data.par_chunks_mut(nxh * ny)
            .enumerate()
            .for_each(|(c, plane)| {
                let keep_c = Self::in_band(c, nz, b[2]);
                for (bi, row) in plane.chunks_mut(nxh).enumerate() {
                    let keep_b = keep_c && Self::in_band(bi, ny, b[1]);
                    for (a, v) in row.iter_mut().enumerate() {
                        if !(keep_b && a <= b[0]) {
                            *v = ZERO;
                        }
                    }
                }
            });
    }

    /// Transforms along z one `(a, c)` slab per y index, scaling the result.
    fn transform_z(&self, data: &mut [Complex64], fft: &dyn Fft<f64>, scale: f64, band: Band) {
        let (ny, nz, nxh) = (self.ny, self.nz, self.nxh);
        let na = self.x_limit(band);
        let ptr = SharedMut(data.as_mut_ptr());
        let len = data.len();
        (0..ny).into_par_iter().for_each_init(
            || {
                (
                    vec![ZERO; nxh * nz],
                    vec![ZERO; fft.get_inplace_scratch_len()],
                )
            },
            |(lines, scratch), b| {
                if let Some(bd) = band {
                    if !Self::in_band(b, ny, bd[1]) {
                        return;
                    }
                }
                let p = ptr;
                // SAFETY: slab `b` touches only indices a + nxh*(b + ny*c), disjoint across b.
                let data = unsafe { std::slice::from_raw_parts_mut(p.0, len) };
                for c in 0..nz {
                    let base = nxh * (b + ny * c);
                    for a in 0..na {
                        lines[a * nz + c] = data[base + a];
                    }
                }
                fft.process_with_scratch(&mut lines[..na * nz], scratch);
                for c in 0..nz {
                    let base = nxh * (b + ny * c);
                    for a in 0..na {
                        data[base + a] = lines[a * nz + c] * scale;
                    }
                }
            },
        );
    }
}

struct PlaneScratch {
    row: Vec<f64>,
    real_scratch: Vec<Complex64>,
    complex_scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl PlaneScratch {
    fn new(p: &RealFft3) -> Self {
        let y_scratch = p
            .fwd_y
            .get_inplace_scratch_len()
            .max(p.inv_y.get_inplace_scratch_len());
        PlaneScratch {
            row: vec![0.0; p.nx],
            real_scratch: vec![ZERO; p.r2c.get_scratch_len()],
            complex_scratch: vec![ZERO; p.c2r.get_scratch_len()],
            lines: vec![ZERO; p.nxh * p.ny],
            scratch: vec![ZERO; y_scratch],
        }
    }
}

/// In-place FFT along y of the first `na` x-bins of an `nxh x ny` plane.
fn transform_columns(
    plane: &mut [Complex64],
    nxh: usize,
    ny: usize,
    na: usize,
    fft: &dyn Fft<f64>,
    lines: &mut [Complex64],
    scratch: &mut [Complex64],
) {
    for b in 0..ny {
        for a in 0..na {
            lines[a * ny + b] = plane[b * nxh + a];
        }
    }
    fft.process_with_scratch(&mut lines[..na * ny], scratch);
    for b in 0..ny {
        for a in 0..na {
            plane[b * nxh + a] = lines[a * ny + b];
        }
    }
}
