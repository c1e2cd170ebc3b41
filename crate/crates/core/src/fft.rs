//! Iterative radix-2 decimation-in-time FFT.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    /// `e^{i theta}`
    pub fn from_angle(theta: f64) -> Self {
        Complex::new(math::cos(theta), math::sin(theta))
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.re, self.im)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// Precomputed twiddle factors and bit-reversal permutation for one length.
///
/// Computes the forward transform `X[k] = sum_n x[n] e^{-2 pi i k n / N}`.
#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    twiddles: Vec<Complex>,
    bitrev: Vec<usize>,
}

impl Fft {
    /// Panics if `len` is not a power of two (length 1 is allowed).
    pub fn new(len: usize) -> Self {
        assert!(len.is_power_of_two(), "FFT length {len} is not a power of two");
        let twiddles = (0..len / 2)
            .map(|k| Complex::from_angle(-2.0 * PI * k as f64 / len as f64))
            .collect();
        let bits = len.trailing_zeros();
        let bitrev = (0..len)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Fft { len, twiddles, bitrev }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn process(&self, buf: &mut [Complex]) {
        assert_eq!(buf.len(), self.len, "buffer length does not match FFT plan");
        let n = self.len;
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let even = buf[start + k];
                    let odd = buf[start + k + half] * self.twiddles[k * stride];
                    buf[start + k] = even + odd;
                    buf[start + k + half] = even - odd;
                }
            }
            len <<= 1;
        }
    }
}

/// One-shot forward transform of a real sequence.
pub fn fft_real(input: &[f64]) -> Vec<Complex> {
    let mut buf: Vec<Complex> = input.iter().map(|&x| Complex::new(x, 0.0)).collect();
    Fft::new(input.len()).process(&mut buf);
    buf
}
