//! Layout generation: band-limited random patterns plus canonical test
//! structures (crosses, square, targets) on a configurable canvas.
//!
//! Random patterns are built in frequency space: a Hermitian-symmetric
//! spectrum supported on an annulus of radial frequencies is inverse
//! transformed to a real field, thresholded at the quantile that hits the
//! requested fill fraction, then cleaned with open/close morphology so no
//! features smaller than the minimum printable size survive.

use crate::morph;
use crate::raster::BitMask;
use crate::rng::RngSeed;
use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeLaw {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Canvas side in pixels.
    pub size: usize,
    /// Annulus bounds in cycles per image, inclusive.
    pub passband_low: f64,
    pub passband_high: f64,
    pub amplitude_law: AmplitudeLaw,
    /// Foreground fraction the threshold targets.
    pub fill_target: f64,
    /// Smallest feature the cleanup pass must preserve.
    pub min_feature_px: usize,
    pub cleanup_iterations: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            size: 256,
            passband_low: 2.0,
            passband_high: 16.0,
            amplitude_law: AmplitudeLaw::Uniform,
            fill_target: 0.5,
            min_feature_px: 5,
            cleanup_iterations: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.size < 4 {
            return Err(SynthError::InvalidSpec(format!("size {} too small", self.size)));
        }
        if !(self.passband_low >= 0.0
            && self.passband_low < self.passband_high
            && self.passband_high <= self.size as f64 / 2.0)
        {
            return Err(SynthError::InvalidSpec(format!(
                "passband [{}, {}] must satisfy 0 <= low < high <= size/2",
                self.passband_low, self.passband_high
            )));
        }
        if !(self.fill_target > 0.0 && self.fill_target < 1.0) {
            return Err(SynthError::InvalidSpec(format!(
                "fill_target {} must lie in (0,1)",
                self.fill_target
            )));
        }
        if self.min_feature_px < 1 {
            return Err(SynthError::InvalidSpec("min_feature_px must be >= 1".into()));
        }
        Ok(())
    }
}

/// Draw one random band-limited pattern. Deterministic in (spec, seed).
pub fn synth_fourier_pattern(spec: &SynthSpec, seed: RngSeed) -> Result<BitMask, SynthError> {
    spec.validate()?;
    let n = spec.size;
    let mut rng = seed.rng();
    let mut spectrum = vec![Complex::new(0.0, 0.0); n * n];
    let mut assigned = 0usize;

    // Fill the annulus in fixed scan order; each (k, -k) pair is drawn once
    // and mirrored so the inverse transform is exactly real.
    for ky in 0..n {
        for kx in 0..n {
            let cy = (n - ky) % n;
            let cx = (n - kx) % n;
            let idx = ky * n + kx;
            let cidx = cy * n + cx;
            if idx > cidx {
                continue; // mirrored half, already written
            }
            let fy = signed_freq(ky, n);
            let fx = signed_freq(kx, n);
            let r = ((fx * fx + fy * fy) as f64).sqrt();
            if r < spec.passband_low || r > spec.passband_high {
                continue;
            }
            let amp = match spec.amplitude_law {
                AmplitudeLaw::Uniform => rng.gen::<f64>(),
                AmplitudeLaw::Gaussian => {
                    let g: f64 = rand_distr::Distribution::sample(
                        &rand_distr::StandardNormal,
                        &mut rng,
                    );
                    g.abs()
                }
            };
            let phase = rng.gen::<f64>() * std::f64::consts::TAU;
            assigned += 1;
            if idx == cidx {
                // self-conjugate lattice point: must be real
                spectrum[idx] = Complex::new(amp * phase.cos(), 0.0);
            } else {
                let v = Complex::from_polar(amp, phase);
                spectrum[idx] = v;
                spectrum[cidx] = v.conj();
            }
        }
    }
    if assigned == 0 {
        return Err(SynthError::InvalidSpec(format!(
            "passband [{}, {}] contains no frequency lattice points at size {}",
            spec.passband_low, spec.passband_high, n
        )));
    }

    let field = ifft2_real(spectrum, n);
    let mask = threshold_to_fill(&field, n, spec.fill_target);

    // Open/close can annihilate sparse low-frequency masks outright; when a
    // radius erases one class entirely, retry with the next smaller disk so
    // the output always keeps both foreground and background.
    let mut radius = spec.min_feature_px.div_ceil(2);
    loop {
        if radius == 0 {
            return Ok(mask);
        }
        let mut cleaned = mask.clone();
        for _ in 0..spec.cleanup_iterations {
            cleaned = morph::close(&morph::open(&cleaned, radius), radius);
        }
        let fg = cleaned.foreground_count();
        if fg > 0 && fg < n * n {
            return Ok(cleaned);
        }
        radius -= 1;
    }
}

fn signed_freq(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Unnormalized inverse FFT over rows then columns; returns re/(n*n).
fn ifft2_real(mut data: Vec<Complex<f64>>, n: usize) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    for row in data.chunks_exact_mut(n) {
        ifft.process(row);
    }
    transpose_square(&mut data, n);
    for row in data.chunks_exact_mut(n) {
        ifft.process(row);
    }
    transpose_square(&mut data, n);
    let norm = (n * n) as f64;
    data.iter().map(|c| c.re / norm).collect()
}

fn transpose_square(data: &mut [Complex<f64>], n: usize) {
    for y in 0..n {
        for x in (y + 1)..n {
            data.swap(y * n + x, x * n + y);
        }
    }
}

/// Threshold at the order statistic that leaves ~fill foreground.
fn threshold_to_fill(field: &[f64], n: usize, fill: f64) -> BitMask {
    let mut sorted: Vec<f64> = field.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("field values are finite"));
    let len = sorted.len();
    let rank = (((1.0 - fill) * len as f64).round() as usize).min(len - 1);
    let thr = sorted[rank];
    let bits = field.iter().map(|&v| u8::from(v >= thr)).collect();
    BitMask::new(n, n, bits).expect("bits sized to canvas")
}

// ---------------------------------------------------------------------------
// Canonical test structures
// ---------------------------------------------------------------------------

/// Side of the working region the canonical structures are drawn in.
pub const STRUCTURE_REGION_PX: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Cross25,
    Cross50,
    Cross100,
    Square,
    Target50,
    Target100,
}

impl StructureKind {
    pub const ALL: [StructureKind; 6] = [
        StructureKind::Cross25,
        StructureKind::Cross50,
        StructureKind::Cross100,
        StructureKind::Square,
        StructureKind::Target50,
        StructureKind::Target100,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            StructureKind::Cross25 => "cross25",
            StructureKind::Cross50 => "cross50",
            StructureKind::Cross100 => "cross100",
            StructureKind::Square => "square",
            StructureKind::Target50 => "target50",
            StructureKind::Target100 => "target100",
        }
    }
}

impl std::str::FromStr for StructureKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cross25" => Ok(StructureKind::Cross25),
            "cross50" => Ok(StructureKind::Cross50),
            "cross100" => Ok(StructureKind::Cross100),
            "square" => Ok(StructureKind::Square),
            "target50" => Ok(StructureKind::Target50),
            "target100" => Ok(StructureKind::Target100),
            other => Err(SynthError::InvalidInput(format!("unknown structure kind: {other}"))),
        }
    }
}

impl std::fmt::Display for StructureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Render a canonical structure centered on a `canvas` x `canvas` mask.
pub fn make_eval_structure(kind: StructureKind, canvas: usize) -> Result<BitMask, SynthError> {
    if canvas < STRUCTURE_REGION_PX {
        return Err(SynthError::InvalidInput(format!(
            "canvas {canvas} smaller than structure region {STRUCTURE_REGION_PX}"
        )));
    }
    let r = STRUCTURE_REGION_PX;
    Ok(match kind {
        StructureKind::Cross25 => cross_structure(canvas, r, 25),
        StructureKind::Cross50 => cross_structure(canvas, r, 50),
        StructureKind::Cross100 => cross_structure(canvas, r, 100),
        StructureKind::Square => square_structure(canvas, 100),
        StructureKind::Target50 => target_structure(canvas, r, 50, 120, 50),
        StructureKind::Target100 => target_structure(canvas, r, 100, 120, 100),
    })
}

fn fill_rect(mask: &mut BitMask, x0: usize, y0: usize, w: usize, h: usize) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            mask.set(x, y, 1);
        }
    }
}

fn centered(canvas: usize, len: usize) -> usize {
    (canvas - len) / 2
}

/// Union of a horizontal `span` x `arm_w` bar and its vertical counterpart,
/// both centered. Odd lengths on an even canvas sit half a pixel off center.
pub fn cross_structure(canvas: usize, span: usize, arm_w: usize) -> BitMask {
    let mut m = BitMask::zeros(canvas, canvas);
    fill_rect(&mut m, centered(canvas, span), centered(canvas, arm_w), span, arm_w);
    fill_rect(&mut m, centered(canvas, arm_w), centered(canvas, span), arm_w, span);
    m
}

pub fn square_structure(canvas: usize, side: usize) -> BitMask {
    let mut m = BitMask::zeros(canvas, canvas);
    fill_rect(&mut m, centered(canvas, side), centered(canvas, side), side, side);
    m
}

/// Centered cross (arm length `arm_len`, width `arm_w`) inside a concentric
/// square ring of outer side `outer` and wall thickness `ring_th`.
pub fn target_structure(
    canvas: usize,
    outer: usize,
    ring_th: usize,
    arm_len: usize,
    arm_w: usize,
) -> BitMask {
    let mut m = cross_structure(canvas, arm_len, arm_w);
    let o = centered(canvas, outer);
    fill_rect(&mut m, o, o, outer, outer);
    if outer > 2 * ring_th {
        let inner = outer - 2 * ring_th;
        let i0 = centered(canvas, inner);
        for y in i0..i0 + inner {
            for x in i0..i0 + inner {
                m.set(x, y, 0);
            }
        }
        // re-draw the cross where the hole punched through it
        let cx0 = centered(canvas, arm_len);
        let cy0 = centered(canvas, arm_w);
        for y in cy0..cy0 + arm_w {
            for x in cx0..cx0 + arm_len {
                m.set(x, y, 1);
            }
        }
        for y in cx0..cx0 + arm_len {
            for x in cy0..cy0 + arm_w {
                m.set(x, y, 1);
            }
        }
    }
    m
}

/// The four axis-aligned orientations of a training pair: identity plus 90,
/// 180, 270 degree clockwise turns applied to both images.
pub fn augment_rotations(
    layout: &BitMask,
    fabricated: &BitMask,
) -> Result<[(BitMask, BitMask); 4], SynthError> {
    if layout.width() != layout.height() {
        return Err(SynthError::InvalidInput(format!(
            "rotation augmentation needs square images, got {}x{}",
            layout.width(),
            layout.height()
        )));
    }
    if (layout.width(), layout.height()) != (fabricated.width(), fabricated.height()) {
        return Err(SynthError::InvalidInput("pair dimensions differ".into()));
    }
    let r1 = (layout.rot90cw(), fabricated.rot90cw());
    let r2 = (layout.rot180(), fabricated.rot180());
    let r3 = (layout.rot270cw(), fabricated.rot270cw());
    Ok([(layout.clone(), fabricated.clone()), r1, r2, r3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_areas_match_formula() {
        // area = 2 * span * w - w^2 (the arms overlap in a w x w square)
        let c100 = make_eval_structure(StructureKind::Cross100, 256).unwrap();
        assert_eq!(c100.foreground_count(), 30_000);
        let c25 = make_eval_structure(StructureKind::Cross25, 256).unwrap();
        assert_eq!(c25.foreground_count(), 9_375);
        let c50 = make_eval_structure(StructureKind::Cross50, 256).unwrap();
        assert_eq!(c50.foreground_count(), 17_500);
    }

    #[test]
    fn square_area() {
        let s = make_eval_structure(StructureKind::Square, 256).unwrap();
        assert_eq!(s.foreground_count(), 10_000);
    }

    #[test]
    fn even_width_crosses_are_rot90_invariant() {
        for kind in [StructureKind::Cross50, StructureKind::Cross100] {
            let m = make_eval_structure(kind, 256).unwrap();
            assert_eq!(m.rot90cw(), m, "{kind} should be 4-fold symmetric");
        }
    }

    #[test]
    fn odd_width_cross_is_rot90_invariant_up_to_one_pixel() {
        // A 25 px arm cannot be centered exactly on an even canvas; the
        // rotated mask may differ, but only inside a 1 px boundary band.
        let m = make_eval_structure(StructureKind::Cross25, 256).unwrap();
        let r = m.rot90cw();
        let band = crate::morph::boundary_band(&m, 1);
        for y in 0..256 {
            for x in 0..256 {
                if m.get(x, y) != r.get(x, y) {
                    assert_eq!(band.get(x, y), 1, "difference at ({x},{y}) off the boundary");
                }
            }
        }
    }

    #[test]
    fn targets_render_and_ring_is_present() {
        let t = make_eval_structure(StructureKind::Target50, 256).unwrap();
        let o = centered(256, 200);
        assert_eq!(t.get(o, 128), 1, "ring wall");
        // inside the punched interior, clear of both cross arms
        assert_eq!(t.get(o + 60, o + 60), 0, "hole between ring and cross");
        assert_eq!(t.get(128, 128), 1, "cross center");
    }

    #[test]
    fn structure_needs_canvas_at_least_region() {
        assert!(make_eval_structure(StructureKind::Cross50, 128).is_err());
    }

    #[test]
    fn rotation_augment_yields_four_distinct_orientations() {
        let spec = SynthSpec { size: 64, ..SynthSpec::default() };
        let layout = synth_fourier_pattern(&spec, RngSeed(3)).unwrap();
        let fab = layout.shifted(1, 0);
        let pairs = augment_rotations(&layout, &fab).unwrap();
        assert_eq!(pairs.len(), 4);
        for (l, f) in &pairs {
            assert_eq!(l.foreground_count(), layout.foreground_count());
            assert_eq!(f.foreground_count(), fab.foreground_count());
        }
        assert_eq!(pairs[1].0, layout.rot90cw());
        assert_eq!(pairs[2].0, layout.rot180());
        assert_eq!(pairs[3].0, layout.rot270cw());
    }

    #[test]
    fn augment_rejects_non_square() {
        let a = BitMask::zeros(4, 8);
        let b = BitMask::zeros(4, 8);
        assert!(augment_rotations(&a, &b).is_err());
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec { size: 64, ..SynthSpec::default() };
        let a = synth_fourier_pattern(&spec, RngSeed(11)).unwrap();
        let b = synth_fourier_pattern(&spec, RngSeed(11)).unwrap();
        assert_eq!(a, b);
        let c = synth_fourier_pattern(&spec, RngSeed(12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn threshold_hits_fill_before_cleanup() {
        for &fill in &[0.3, 0.5, 0.7] {
            let spec = SynthSpec {
                size: 64,
                fill_target: fill,
                cleanup_iterations: 0,
                ..SynthSpec::default()
            };
            let m = synth_fourier_pattern(&spec, RngSeed(5)).unwrap();
            assert!(
                (m.foreground_fraction() - fill).abs() <= 0.02,
                "fill {} got {}",
                fill,
                m.foreground_fraction()
            );
        }
    }

    #[test]
    fn cleanup_keeps_fill_near_target() {
        let spec = SynthSpec { size: 128, passband_high: 8.0, ..SynthSpec::default() };
        let m = synth_fourier_pattern(&spec, RngSeed(21)).unwrap();
        let f = m.foreground_fraction();
        assert!((0.40..=0.60).contains(&f), "fill after cleanup: {f}");
    }

    #[test]
    fn empty_passband_is_an_error() {
        let spec = SynthSpec {
            size: 64,
            passband_low: 0.3,
            passband_high: 0.7,
            ..SynthSpec::default()
        };
        match synth_fourier_pattern(&spec, RngSeed(0)) {
            Err(SynthError::InvalidSpec(msg)) => assert!(msg.contains("no frequency lattice")),
            other => panic!("expected invalid spec, got {other:?}"),
        }
    }

    #[test]
    fn cleanup_enforces_min_feature() {
        // After opening with a radius-3 disk, every surviving component must
        // contain a pixel whose radius-1 disk lies inside the foreground,
        // i.e. no component has max inscribed-disk diameter below 3 px.
        let spec = SynthSpec {
            size: 96,
            passband_low: 4.0,
            passband_high: 24.0,
            min_feature_px: 5,
            cleanup_iterations: 1,
            ..SynthSpec::default()
        };
        let m = synth_fourier_pattern(&spec, RngSeed(9)).unwrap();
        let offsets = crate::morph::disk_offsets(1);
        for comp in crate::morph::connected_components(&m) {
            let ok = comp.iter().any(|&(x, y)| {
                offsets.iter().all(|&(dx, dy)| {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    nx >= 0
                        && ny >= 0
                        && (nx as usize) < m.width()
                        && (ny as usize) < m.height()
                        && m.get(nx as usize, ny as usize) == 1
                })
            });
            assert!(ok, "component of {} px thinner than the minimum feature", comp.len());
        }
    }

    #[test]
    fn patterns_are_nondegenerate_across_seeds() {
        for seed in 0..50u64 {
            for &fill in &[0.2, 0.5, 0.8] {
                let spec = SynthSpec {
                    size: 64,
                    passband_high: 8.0,
                    fill_target: fill,
                    ..SynthSpec::default()
                };
                let m = synth_fourier_pattern(&spec, RngSeed(seed)).unwrap();
                let n = m.foreground_count();
                assert!(n > 0 && n < 64 * 64, "degenerate mask at seed {seed} fill {fill}");
            }
        }
    }
}
