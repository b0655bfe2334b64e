//! Unitary Fourier transforms on centered-DC grids.
//!
//! Both real-space and frequency-space arrays use the centered layout (origin at
//! index `n/2`), so the shift is folded into each 1D pass. Forward and inverse
//! transforms carry a `1/sqrt(n)` factor per axis, which keeps Parseval exact.

use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayBase, Axis, DataMut, Dimension, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

fn transform_axis<S, D>(data: &mut ArrayBase<S, D>, axis: usize, fft: &Arc<dyn Fft<f64>>)
where
    S: DataMut<Elem = Complex64>,
    D: Dimension,
{
    let n = data.shape()[axis];
    let half = n / 2;
    let norm = 1.0 / (n as f64).sqrt();
    Zip::from(data.lanes_mut(Axis(axis))).par_for_each(|mut lane| {
        let mut buf: Vec<Complex64> = (0..n).map(|j| lane[(j + half) % n]).collect();
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..n {
            lane[k] = buf[(k + half) % n] * norm;
        }
    });
}

fn transform_all<S, D>(data: &mut ArrayBase<S, D>, direction: FftDirection)
where
    S: DataMut<Elem = Complex64>,
    D: Dimension,
{
    let mut planner = FftPlanner::new();
    for axis in 0..data.ndim() {
        let n = data.shape()[axis];
        let fft = planner.plan_fft(n, direction);
        transform_axis(data, axis, &fft);
    }
}

pub fn fft3_inplace(data: &mut Array3<Complex64>) {
    transform_all(data, FftDirection::Forward);
}

pub fn ifft3_inplace(data: &mut Array3<Complex64>) {
    transform_all(data, FftDirection::Inverse);
}

pub fn fft3(data: &Array3<Complex64>) -> Array3<Complex64> {
    let mut out = data.clone();
    fft3_inplace(&mut out);
    out
}

pub fn ifft3(data: &Array3<Complex64>) -> Array3<Complex64> {
    let mut out = data.clone();
    ifft3_inplace(&mut out);
    out
}

pub fn fft3_real(data: &Array3<f64>) -> Array3<Complex64> {
    let mut out = data.mapv(|v| Complex64::new(v, 0.0));
    fft3_inplace(&mut out);
    out
}

pub fn fft2(data: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = data.clone();
    transform_all(&mut out, FftDirection::Forward);
    out
}

pub fn ifft2(data: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = data.clone();
    transform_all(&mut out, FftDirection::Inverse);
    out
}
