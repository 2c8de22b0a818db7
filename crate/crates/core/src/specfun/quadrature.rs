#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// 21-point Kronrod extension of the 10-point Gauss rule, nodes in descending order.
const KRONROD_NODES: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const KRONROD_WEIGHTS: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_626_368_305,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const GAUSS_WEIGHTS: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_subdivisions: 1 << 16,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(abs_tol > 0.0) || !(rel_tol > 0.0) || max_subdivisions == 0 {
            return Err(Error::Argument(format!(
                "quadrature tolerances must be positive (abs {abs_tol}, rel {rel_tol}, subdivisions {max_subdivisions})"
            )));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        })
    }

    pub fn with_tolerances(self, abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
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
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = KRONROD_WEIGHTS[10] * fc;
    let mut gauss = 0.0;
    for (i, (&node, &weight)) in KRONROD_NODES[..10].iter().zip(&KRONROD_WEIGHTS[..10]).enumerate() {
        let pair = f(center - half * node) + f(center + half * node);
        kronrod += weight * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Integral> {
    integrate_with_breaks(f, &[a, b], spec)
}

/// Like [`integrate`], with the initial partition given by ascending `points`.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, points: &[f64], spec: &QuadratureSpec) -> Result<Integral> {
    if points.len() < 2 || points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Argument(
            "integration limits must be finite and strictly increasing".into(),
        ));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::Argument("integration limits must be finite".into()));
    }
    let mut heap: BinaryHeap<Segment> = points.windows(2).map(|w| kronrod(&f, w[0], w[1])).collect();
    let exact_totals = |heap: &BinaryHeap<Segment>, settled: (f64, f64)| {
        heap.iter().fold(settled, |(v, e), s| (v + s.value, e + s.error))
    };
    let mut settled = (0.0, 0.0);
    let (mut value, mut error) = exact_totals(&heap, settled);
    let mut subdivisions = 0;
    loop {
        if !value.is_finite() {
            return Err(Error::Accuracy { estimate: value, error });
        }
        if error <= spec.abs_tol.max(spec.rel_tol * value.abs()) {
            (value, error) = exact_totals(&heap, settled);
            if error <= spec.abs_tol.max(spec.rel_tol * value.abs()) {
                return Ok(Integral {
                    value,
                    abs_error: error,
                    intervals: heap.len() + subdivisions,
                });
            }
        }
        let Some(worst) = heap.pop() else {
            return Err(Error::Accuracy { estimate: value, error });
        };
        if subdivisions >= spec.max_subdivisions {
            let (value, error) = exact_totals(&heap, (settled.0 + worst.value, settled.1 + worst.error));
            return Err(Error::Accuracy { estimate: value, error });
        }
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(worst.lo < mid && mid < worst.hi) || (worst.hi - worst.lo) < 1e3 * f64::EPSILON * mid.abs() {
            settled = (settled.0 + worst.value, settled.1 + worst.error);
            continue;
        }
        let left = kronrod(&f, worst.lo, mid);
        let right = kronrod(&f, mid, worst.hi);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
        if subdivisions % 256 == 0 {
            (value, error) = exact_totals(&heap, settled);
        }
    }
}
