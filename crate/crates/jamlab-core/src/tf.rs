//! Time-frequency analysis: STFT magnitude and the smoothed pseudo
//! Wigner-Ville distribution, plus conversion to fixed-size normalized
//! images for the recognition network.
//!
//! Both transforms operate on complex baseband input (already analytic, no
//! Hilbert step). Frequency axes are centered: STFT rows span
//! [-fs/2, fs/2), SPWVD rows span [-fs/4, fs/4) (the usual factor of two
//! from the lag discretization).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::fft::fft;
use crate::signal::ComplexSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrogramKind {
    /// STFT magnitude: nonnegative.
    StftMag,
    /// Smoothed pseudo Wigner-Ville: real, may be negative.
    Spwvd,
}

/// Real-valued time-frequency grid, rows = frequency, columns = time.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// Row-major values, `values[row * n_time + col]`.
    pub values: Vec<f64>,
    pub n_freq: usize,
    pub n_time: usize,
    /// Center time of each column.
    pub time_axis_s: Vec<f64>,
    /// Frequency of each row (baseband offset).
    pub freq_axis_hz: Vec<f64>,
    pub kind: SpectrogramKind,
    /// Largest imaginary magnitude discarded when realizing the grid
    /// (SPWVD only; 0 for STFT).
    pub imag_residual: f64,
}

impl Spectrogram {
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_time + col]
    }

    /// Row index with the largest value in the given column.
    pub fn argmax_row(&self, col: usize) -> usize {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for r in 0..self.n_freq {
            let v = self.value(r, col);
            if v > best_v {
                best_v = v;
                best = r;
            }
        }
        best
    }
}

/// Symmetric Hamming window; a length of 1 is the identity weight.
pub fn hamming(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// STFT analysis parameters (window length, hop, FFT length).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub win_len: usize,
    pub hop: usize,
    pub fft_len: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        StftParams {
            win_len: 128,
            hop: 32,
            fft_len: 256,
        }
    }
}

/// Magnitude STFT with a Hamming analysis window.
///
/// Column `c` covers samples `[c*hop, c*hop + win_len)`; the column count is
/// `floor((len - win_len)/hop) + 1`. Rows are centered on zero frequency.
pub fn stft(x: &ComplexSeries, params: &StftParams) -> Result<Spectrogram> {
    let StftParams { win_len, hop, fft_len } = *params;
    if hop == 0 || hop > win_len || win_len > fft_len || fft_len > x.len() {
        return Err(Error::InvalidParams(format!(
            "stft needs 0 < hop <= win_len <= fft_len <= len, got hop={hop} win={win_len} fft={fft_len} len={}",
            x.len()
        )));
    }
    if !fft_len.is_power_of_two() {
        return Err(Error::InvalidParams(String::from("fft_len must be a power of two")));
    }
    let window = hamming(win_len);
    let n_time = (x.len() - win_len) / hop + 1;
    let n_freq = fft_len;
    let fs = x.sample_rate_hz;
    let mut values = vec![0.0; n_freq * n_time];
    let mut frame = vec![Complex64::new(0.0, 0.0); fft_len];
    for col in 0..n_time {
        let start = col * hop;
        for slot in frame.iter_mut() {
            *slot = Complex64::new(0.0, 0.0);
        }
        for (i, w) in window.iter().enumerate() {
            frame[i] = x.samples[start + i] * w;
        }
        let spec = fft(&frame);
        // fftshift rows so row 0 is -fs/2.
        for (k, v) in spec.iter().enumerate() {
            let row = (k + n_freq / 2) % n_freq;
            values[row * n_time + col] = v.norm();
        }
    }
    let time_axis_s = (0..n_time)
        .map(|c| x.t0_s + ((c * hop) as f64 + (win_len - 1) as f64 / 2.0) / fs)
        .collect();
    let freq_axis_hz = (0..n_freq)
        .map(|r| (r as f64 - (n_freq / 2) as f64) * fs / n_freq as f64)
        .collect();
    Ok(Spectrogram {
        values,
        n_freq,
        n_time,
        time_axis_s,
        freq_axis_hz,
        kind: SpectrogramKind::StftMag,
        imag_residual: 0.0,
    })
}

/// SPWVD parameters: lag window `h_len` (frequency smoothing), time window
/// `g_len`, FFT bins, and time decimation of the output columns.
///
/// A window length of 1 means "no smoothing" on that axis: `g_len = 1` is a
/// delta in time and `h_len = 1` is a delta in frequency (an all-ones lag
/// window), which together reduce the transform to the plain discrete
/// Wigner-Ville distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpwvdParams {
    pub h_len: usize,
    pub g_len: usize,
    pub nfft: usize,
    pub time_decim: usize,
}

impl Default for SpwvdParams {
    fn default() -> Self {
        SpwvdParams {
            h_len: 127,
            g_len: 31,
            nfft: 256,
            time_decim: 16,
        }
    }
}

/// Smoothed pseudo Wigner-Ville distribution.
///
/// For each output time `n`, the lag kernel is the time-smoothed
/// instantaneous autocorrelation sum_v g(v) x(n+v+tau) conj(x(n+v-tau)),
/// windowed over lag by `h` and Fourier-transformed over `tau`. The signal
/// is zero-extended at the edges. The output is real by Hermitian symmetry
/// of the kernel; the discarded imaginary residual is reported.
pub fn spwvd(x: &ComplexSeries, params: &SpwvdParams) -> Result<Spectrogram> {
    let SpwvdParams { h_len, g_len, nfft, time_decim } = *params;
    if h_len % 2 == 0 || g_len % 2 == 0 {
        return Err(Error::InvalidParams(String::from("h_len and g_len must be odd")));
    }
    if h_len > x.len() || g_len > x.len() {
        return Err(Error::InvalidParams(String::from("smoothing windows exceed signal length")));
    }
    if !nfft.is_power_of_two() || time_decim == 0 {
        return Err(Error::InvalidParams(String::from(
            "nfft must be a power of two and time_decim > 0",
        )));
    }
    let n = x.len();
    let fs = x.sample_rate_hz;
    // Lag range: the h window bounds it unless h_len == 1 (no smoothing),
    // in which case the FFT length does.
    let tau_max = if h_len == 1 {
        (nfft - 1) / 2
    } else {
        ((h_len - 1) / 2).min((nfft - 1) / 2)
    };
    let h_win = if h_len == 1 {
        vec![1.0; 2 * tau_max + 1]
    } else {
        hamming(h_len)
    };
    let h_half = h_win.len() / 2;
    // g normalized to unit sum so time smoothing is an average.
    let mut g_win = hamming(g_len);
    let g_sum: f64 = g_win.iter().sum();
    for g in g_win.iter_mut() {
        *g /= g_sum;
    }
    let g_half = g_win.len() / 2;

    let at = |i: isize| -> Complex64 {
        if i < 0 || i as usize >= n {
            Complex64::new(0.0, 0.0)
        } else {
            x.samples[i as usize]
        }
    };

    let n_time = (n + time_decim - 1) / time_decim;
    let mut values = vec![0.0; nfft * n_time];
    let mut imag_residual = 0.0f64;
    let mut kernel = vec![Complex64::new(0.0, 0.0); nfft];
    for col in 0..n_time {
        let t = (col * time_decim) as isize;
        for slot in kernel.iter_mut() {
            *slot = Complex64::new(0.0, 0.0);
        }
        for tau in -(tau_max as isize)..=(tau_max as isize) {
            let hw = h_win[(tau + h_half as isize) as usize];
            let mut r = Complex64::new(0.0, 0.0);
            for (vi, gw) in g_win.iter().enumerate() {
                let v = vi as isize - g_half as isize;
                let a = at(t + v + tau);
                let b = at(t + v - tau);
                r += gw * a * b.conj();
            }
            let bin = tau.rem_euclid(nfft as isize) as usize;
            kernel[bin] += hw * r;
        }
        let spec = fft(&kernel);
        for (k, v) in spec.iter().enumerate() {
            let row = (k + nfft / 2) % nfft;
            values[row * n_time + col] = v.re;
            imag_residual = imag_residual.max(v.im.abs());
        }
    }
    let time_axis_s = (0..n_time)
        .map(|c| x.t0_s + (c * time_decim) as f64 / fs)
        .collect();
    // Lag steps of one sample give a frequency axis spanning +-fs/4.
    let freq_axis_hz = (0..nfft)
        .map(|r| (r as f64 - (nfft / 2) as f64) * fs / (2.0 * nfft as f64))
        .collect();
    Ok(Spectrogram {
        values,
        n_freq: nfft,
        n_time,
        time_axis_s,
        freq_axis_hz,
        kind: SpectrogramKind::Spwvd,
        imag_residual,
    })
}

/// Fixed-size image in [0,1] with its normalization record.
#[derive(Debug, Clone)]
pub struct TfImage {
    /// Row-major `side * side` pixels.
    pub pixels: Vec<f64>,
    pub side: usize,
    /// Minimum of the resampled grid before normalization.
    pub norm_min: f64,
    /// Maximum of the resampled grid before normalization.
    pub norm_max: f64,
}

/// Bilinear resample of a row-major grid to `out_rows x out_cols`,
/// align-corners convention.
pub fn bilinear_resample(
    grid: &[f64],
    rows: usize,
    cols: usize,
    out_rows: usize,
    out_cols: usize,
) -> Vec<f64> {
    assert_eq!(grid.len(), rows * cols);
    let mut out = vec![0.0; out_rows * out_cols];
    let row_scale = if out_rows > 1 {
        (rows - 1) as f64 / (out_rows - 1) as f64
    } else {
        0.0
    };
    let col_scale = if out_cols > 1 {
        (cols - 1) as f64 / (out_cols - 1) as f64
    } else {
        0.0
    };
    for i in 0..out_rows {
        let y = i as f64 * row_scale;
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(rows - 1);
        let fy = y - y0 as f64;
        for j in 0..out_cols {
            let x = j as f64 * col_scale;
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(cols - 1);
            let fx = x - x0 as f64;
            let a00 = grid[y0 * cols + x0];
            let a01 = grid[y0 * cols + x1];
            let a10 = grid[y1 * cols + x0];
            let a11 = grid[y1 * cols + x1];
            // Factored form reproduces constant grids exactly.
            let top = a00 + fx * (a01 - a00);
            let bot = a10 + fx * (a11 - a10);
            out[i * out_cols + j] = top + fy * (bot - top);
        }
    }
    out
}

/// Resample a spectrogram to `side x side` and min-max normalize to [0,1].
/// A constant grid maps to all zeros.
pub fn to_image(s: &Spectrogram, side: usize) -> TfImage {
    assert!(side > 0 && s.n_freq > 0 && s.n_time > 0);
    let mut pixels = bilinear_resample(&s.values, s.n_freq, s.n_time, side, side);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &pixels {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi > lo {
        let inv = 1.0 / (hi - lo);
        for v in pixels.iter_mut() {
            *v = (*v - lo) * inv;
        }
    } else {
        for v in pixels.iter_mut() {
            *v = 0.0;
        }
    }
    TfImage {
        pixels,
        side,
        norm_min: lo,
        norm_max: hi,
    }
}
