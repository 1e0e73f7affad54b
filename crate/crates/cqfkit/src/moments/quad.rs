//! Globally adaptive Gauss-Kronrod (G7/K15) quadrature for matrix-valued
//! integrands, used by the frequency-domain moment route.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::matcore::CMat;

// Kronrod-15 abscissae on the positive half of the symmetric rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];

// Gauss-7 weights, matching the odd Kronrod abscissae.
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

struct Segment {
    err: f64,
    seq: u64,
    lo: f64,
    hi: f64,
    value: CMat,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err && self.seq == other.seq
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        // Largest error first; the insertion sequence breaks ties so the
        // refinement order is deterministic.
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn kronrod_segment<F: Fn(f64) -> CMat>(f: &F, lo: f64, hi: f64, seq: u64) -> Segment {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let center = f(c);
    let dims = center.shape();
    let mut k15 = CMat::zeros(dims.0, dims.1);
    let mut g7 = CMat::zeros(dims.0, dims.1);
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        if x == 0.0 {
            k15 += &center * nalgebra::Complex::new(wk, 0.0);
            g7 += &center * nalgebra::Complex::new(WG[3], 0.0);
        } else {
            let v1 = f(c - h * x);
            let v2 = f(c + h * x);
            let sum = v1 + v2;
            k15 += &sum * nalgebra::Complex::new(wk, 0.0);
            if i % 2 == 1 {
                g7 += &sum * nalgebra::Complex::new(WG[i / 2], 0.0);
            }
        }
    }
    k15 *= nalgebra::Complex::new(h, 0.0);
    g7 *= nalgebra::Complex::new(h, 0.0);
    let err = (&k15 - &g7).norm();
    Segment { err, seq, lo, hi, value: k15 }
}

/// Integrates `f` over `[lo, hi]`, bisecting the worst segment until the
/// summed Kronrod error estimate drops below `tol` (absolute, Frobenius).
///
/// Returns the integral and the final error estimate.
pub(crate) fn integrate_adaptive<F: Fn(f64) -> CMat>(
    f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_segments: usize,
) -> Result<(CMat, f64)> {
    let mut seq = 0u64;
    let mut heap = BinaryHeap::new();
    // Seed with several panels so sharply peaked integrands are seen.
    let panels = 8;
    for i in 0..panels {
        let a = lo + (hi - lo) * i as f64 / panels as f64;
        let b = lo + (hi - lo) * (i + 1) as f64 / panels as f64;
        heap.push(kronrod_segment(&f, a, b, seq));
        seq += 1;
    }

    loop {
        let total_err: f64 = heap.iter().map(|s| s.err).sum();
        if total_err <= tol {
            break;
        }
        if heap.len() >= max_segments {
            return Err(Error::QuadratureNotConverged(format!(
                "error estimate {total_err:.3e} > {tol:.3e} after {} segments",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            return Err(Error::QuadratureNotConverged(
                "segment width reached machine precision".into(),
            ));
        }
        heap.push(kronrod_segment(&f, worst.lo, mid, seq));
        seq += 1;
        heap.push(kronrod_segment(&f, mid, worst.hi, seq));
        seq += 1;
    }

    // Deterministic summation order: left to right.
    let mut segments: Vec<Segment> = heap.into_vec();
    segments.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut total = CMat::zeros(segments[0].value.nrows(), segments[0].value.ncols());
    let mut err = 0.0;
    for s in &segments {
        total += &s.value;
        err += s.err;
    }
    Ok((total, err))
}
