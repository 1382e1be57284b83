//! In-place iterative radix-2 FFT over split real/imaginary buffers.

use std::f64::consts::PI;

/// Forward transform `X_k = sum_j x_j exp(-2 pi i jk / n)`; `n` must be a power of two.
pub(crate) fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
    if n < 2 {
        return;
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = -2.0 * PI / len as f64;
        for k in 0..half {
            let (w_im, w_re) = (step * k as f64).sin_cos();
            let mut start = 0;
            while start < n {
                let a = start + k;
                let b = a + half;
                let t_re = re[b] * w_re - im[b] * w_im;
                let t_im = re[b] * w_im + im[b] * w_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                start += len;
            }
        }
        len <<= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = re.len();
        let mut out_re = vec![0.0; n];
        let mut out_im = vec![0.0; n];
        for k in 0..n {
            for j in 0..n {
                let ang = -2.0 * PI * (j * k % n) as f64 / n as f64;
                let (s, c) = ang.sin_cos();
                out_re[k] += re[j] * c - im[j] * s;
                out_im[k] += re[j] * s + im[j] * c;
            }
        }
        (out_re, out_im)
    }

    #[test]
    fn matches_naive_dft() {
        for &n in &[1usize, 2, 4, 8, 64, 256] {
            let re: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
            let im: Vec<f64> = (0..n).map(|i| ((i * 5 + 1) % 13) as f64 * 0.25).collect();
            let (want_re, want_im) = naive_dft(&re, &im);
            let (mut got_re, mut got_im) = (re.clone(), im.clone());
            fft_in_place(&mut got_re, &mut got_im);
            for k in 0..n {
                assert!((got_re[k] - want_re[k]).abs() < 1e-9 * n as f64, "n={n} k={k}");
                assert!((got_im[k] - want_im[k]).abs() < 1e-9 * n as f64, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut re = vec![0.0; 16];
        let mut im = vec![0.0; 16];
        re[0] = 1.0;
        fft_in_place(&mut re, &mut im);
        assert!(re.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(im.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    #[should_panic]
    fn rejects_non_power_of_two() {
        let mut re = vec![0.0; 6];
        let mut im = vec![0.0; 6];
        fft_in_place(&mut re, &mut im);
    }
}
