//! Discrete Fourier transforms and the spectral L1 distance.
//!
//! Forward convention: `X[k] = sum_j x[j] * exp(-2 pi i j k / n)`, no scaling.
//! The inverse carries the `1/n` factor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Difference bins with modulus below this get the zero subgradient.
pub const KINK_TOLERANCE: f64 = 1e-12;

/// Complex spectrum stored as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Spectrum {
    pub fn zeros(n: usize) -> Self {
        Self {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn modulus(&self, k: usize) -> f64 {
        self.re[k].hypot(self.im[k])
    }
}

/// How a complex difference bin contributes to the L1 distance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralNorm {
    /// `|re + i im|`
    #[default]
    Modulus,
    /// `|re| + |im|`
    Parts,
}

/// Direct `O(n^2)` summation.
pub fn dft_naive(x: &[f64]) -> Spectrum {
    let n = x.len();
    let mut out = Spectrum::zeros(n);
    for k in 0..n {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &v) in x.iter().enumerate() {
            // reduce jk mod n before scaling to keep the angle small
            let angle = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
            re += v * angle.cos();
            im += v * angle.sin();
        }
        out.re[k] = re;
        out.im[k] = im;
    }
    out
}

/// Forward transform of a real signal.
///
/// Radix-2 Cooley-Tukey when `n` is a power of two, direct summation otherwise.
pub fn fft_forward(x: &[f64]) -> Spectrum {
    let mut re = x.to_vec();
    let mut im = vec![0.0; x.len()];
    transform(&mut re, &mut im);
    Spectrum { re, im }
}

/// Inverse transform with `1/n` scaling, returning the real part.
pub fn fft_inverse(s: &Spectrum) -> Vec<f64> {
    let n = s.len();
    if n == 0 {
        return Vec::new();
    }
    // ifft(X) = conj(fft(conj(X))) / n
    let mut re = s.re.clone();
    let mut im: Vec<f64> = s.im.iter().map(|v| -v).collect();
    transform(&mut re, &mut im);
    let scale = 1.0 / n as f64;
    re.into_iter().map(|v| v * scale).collect()
}

/// In-place unnormalized forward transform of a complex sequence.
fn transform(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        radix2(re, im);
    } else {
        naive_complex(re, im);
    }
}

fn naive_complex(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    let (src_re, src_im) = (re.to_vec(), im.to_vec());
    for k in 0..n {
        let (mut acc_re, mut acc_im) = (0.0, 0.0);
        for j in 0..n {
            let angle = -2.0 * PI * ((j * k) % n) as f64 / n as f64;
            let (s, c) = angle.sin_cos();
            acc_re += src_re[j] * c - src_im[j] * s;
            acc_im += src_re[j] * s + src_im[j] * c;
        }
        re[k] = acc_re;
        im[k] = acc_im;
    }
}

fn radix2(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    // twiddles exp(-2 pi i k / n) for k < n/2, each evaluated directly
    let half = n / 2;
    let (tw_re, tw_im): (Vec<f64>, Vec<f64>) = (0..half)
        .map(|k| {
            let (s, c) = (-2.0 * PI * k as f64 / n as f64).sin_cos();
            (c, s)
        })
        .unzip();
    let mut size = 2;
    while size <= n {
        let step = n / size;
        let half_size = size / 2;
        for block in (0..n).step_by(size) {
            for k in 0..half_size {
                let (wr, wi) = (tw_re[k * step], tw_im[k * step]);
                let a = block + k;
                let b = a + half_size;
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        size *= 2;
    }
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(())
}

/// Per-bin spectrum of `y - x`. The transform is linear, so one pass suffices.
fn difference_spectrum(x: &[f64], y: &[f64]) -> Spectrum {
    let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    fft_forward(&diff)
}

/// L1 distance between the spectra of `x` and `y`, summed over all `n` bins.
pub fn spectral_l1(x: &[f64], y: &[f64]) -> Result<f64> {
    spectral_l1_with(x, y, SpectralNorm::Modulus)
}

pub fn spectral_l1_with(x: &[f64], y: &[f64], norm: SpectralNorm) -> Result<f64> {
    check_lengths(x, y)?;
    let d = difference_spectrum(x, y);
    Ok(bin_distance(&d, norm))
}

pub(crate) fn bin_distance(d: &Spectrum, norm: SpectralNorm) -> f64 {
    match norm {
        SpectralNorm::Modulus => (0..d.len()).map(|k| d.modulus(k)).sum(),
        SpectralNorm::Parts => d.re.iter().chain(&d.im).map(|v| v.abs()).sum(),
    }
}

/// Gradient of [`spectral_l1`] with respect to `y`.
pub fn spectral_l1_grad(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    spectral_l1_grad_with(x, y, SpectralNorm::Modulus)
}

/// Gradient of [`spectral_l1_with`] with respect to `y`.
///
/// With `u[k]` the derivative of the bin distance with respect to the
/// difference bin (unit phase for the modulus norm, componentwise signs for the
/// parts norm), the gradient is `g[j] = Re sum_k u[k] exp(+2 pi i j k / n)`,
/// i.e. the real part of the forward transform of `conj(u)`.
pub fn spectral_l1_grad_with(x: &[f64], y: &[f64], norm: SpectralNorm) -> Result<Vec<f64>> {
    check_lengths(x, y)?;
    let d = difference_spectrum(x, y);
    let n = d.len();
    let mut u_re = vec![0.0; n];
    let mut u_im = vec![0.0; n];
    for k in 0..n {
        match norm {
            SpectralNorm::Modulus => {
                let m = d.modulus(k);
                if m >= KINK_TOLERANCE {
                    u_re[k] = d.re[k] / m;
                    // conj(u)
                    u_im[k] = -d.im[k] / m;
                }
            }
            SpectralNorm::Parts => {
                u_re[k] = sign(d.re[k]);
                u_im[k] = -sign(d.im[k]);
            }
        }
    }
    transform(&mut u_re, &mut u_im);
    Ok(u_re)
}

fn sign(v: f64) -> f64 {
    if v.abs() < KINK_TOLERANCE {
        0.0
    } else {
        v.signum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn impulse_spectrum() {
        let s = dft_naive(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.re, vec![1.0; 4]);
        assert_eq!(s.im, vec![0.0; 4]);
        let f = fft_forward(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.re, vec![1.0; 4]);
    }

    #[test]
    fn constant_and_zero_signals() {
        let z = fft_forward(&[0.0; 8]);
        assert!(z.re.iter().chain(&z.im).all(|&v| v == 0.0));
        for n in [3usize, 8, 12] {
            let c = 2.5;
            let s = dft_naive(&vec![c; n]);
            assert!((s.re[0] - n as f64 * c).abs() < 1e-9);
            for k in 1..n {
                assert!(s.modulus(k) < 1e-9);
            }
            let back = fft_inverse(&fft_forward(&vec![c; n]));
            assert!(back.iter().all(|v| (v - c).abs() < 1e-9));
        }
        assert_eq!(fft_inverse(&Spectrum::zeros(4)), vec![0.0; 4]);
    }

    #[test]
    fn single_point_is_identity() {
        let s = fft_forward(&[3.25]);
        assert_eq!((s.re[0], s.im[0]), (3.25, 0.0));
    }

    #[test]
    fn shifted_impulse_unit_modulus() {
        for n in [5usize, 16] {
            for j in 0..n {
                let mut x = vec![0.0; n];
                x[j] = 1.0;
                let s = fft_forward(&x);
                for k in 0..n {
                    assert!((s.modulus(k) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conjugate_symmetry_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [7usize, 16, 30] {
            let x = random_vec(&mut rng, n);
            let y = random_vec(&mut rng, n);
            let sx = fft_forward(&x);
            for k in 1..n {
                assert!((sx.re[k] - sx.re[n - k]).abs() < 1e-9);
                assert!((sx.im[k] + sx.im[n - k]).abs() < 1e-9);
            }
            let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let sm = fft_forward(&mix);
            let sy = fft_forward(&y);
            for k in 0..n {
                assert!((sm.re[k] - (a * sx.re[k] + b * sy.re[k])).abs() < 1e-9);
                assert!((sm.im[k] - (a * sx.im[k] + b * sy.im[k])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn spectral_l1_examples() {
        assert_eq!(spectral_l1(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let v = spectral_l1(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4]).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        assert!(matches!(
            spectral_l1(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        let parts =
            spectral_l1_with(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4], SpectralNorm::Parts).unwrap();
        assert!((parts - 4.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_l1_symmetric_and_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..40 {
            let x = random_vec(&mut rng, n);
            let y = random_vec(&mut rng, n);
            let v = spectral_l1(&x, &y).unwrap();
            assert!((v - spectral_l1(&y, &x).unwrap()).abs() < 1e-9);
            let (sx, sy) = (dft_naive(&x), dft_naive(&y));
            let oracle: f64 = (0..n)
                .map(|k| (sx.re[k] - sy.re[k]).hypot(sx.im[k] - sy.im[k]))
                .sum();
            assert!((v - oracle).abs() < 1e-8, "n={n}");
        }
    }

    #[test]
    fn gradient_identity_and_shift_invariance() {
        let x = [0.3, -1.0, 2.0, 0.5, 0.1];
        assert!(spectral_l1_grad(&x, &x).unwrap().iter().all(|&g| g == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_vec(&mut rng, 16);
        let y = random_vec(&mut rng, 16);
        let g = spectral_l1_grad(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v + 4.0).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + 4.0).collect();
        let gs = spectral_l1_grad(&xs, &ys).unwrap();
        for (a, b) in g.iter().zip(&gs) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn fd_check(norm: SpectralNorm) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-5;
        for n in [3usize, 8, 13, 32] {
            let x = random_vec(&mut rng, n);
            let y = random_vec(&mut rng, n);
            let g = spectral_l1_grad_with(&x, &y, norm).unwrap();
            for j in 0..n {
                let mut yp = y.clone();
                yp[j] += h;
                let mut ym = y.clone();
                ym[j] -= h;
                let fd = (spectral_l1_with(&x, &yp, norm).unwrap()
                    - spectral_l1_with(&x, &ym, norm).unwrap())
                    / (2.0 * h);
                let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-4, "n={n} j={j} analytic={} fd={fd}", g[j]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        fd_check(SpectralNorm::Modulus);
    }

    #[test]
    fn parts_gradient_matches_finite_differences() {
        fd_check(SpectralNorm::Parts);
    }
}
