//! Sampling of the white-noise convolution field family on a window.
//!
//! One replica realizes iid standard Gaussians ξ on the lattice hZ^d and
//! couples, over that single realization,
//!
//!   the field           f(x) = h^{d/2} Σ_y q(x−y) ξ_y,
//!   its truncations     f_N, with q replaced by q·χ_N,
//!   cell coarsenings    f^ε, constant on ε-cells with the center as
//!                       representative,
//!   resampling noise    T_δ, a ternary flag per ε-cell that forces the
//!                       cell open (+) or closed (−) with probability δ/2
//!                       each.
//!
//! The occupied set at level ℓ is `{f^ε + T ≥ −ℓ}` over cells; the
//! percolation layer consumes it through [`FieldBundle`].
//!
//! White noise and ternary flags are keyed by lattice position, not by
//! draw order, so two models sharing the spacing h agree on shared sites
//! whatever the shapes of their grids. That is the entire coupling
//! mechanism between truncation ranges N and 2N and between a truncated
//! field and the full one.

use crate::fft::{good_size, ConvPlan};
use crate::grid::{AxisRange, GridGeom, Window};
use crate::kernel::{CutoffSpec, KernelSpec};
use crate::rng::{self, substream};
use std::sync::Arc;
use thiserror::Error;

/// Kernel taps below this amplitude are treated as zero.
pub const TAP_TOL: f64 = 1e-9;

/// Cap on cells per grid; keeps a misconfigured window from exhausting
/// memory before the error surfaces.
pub const CELL_BUDGET: usize = 1 << 24;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("window too large: {cells} cells exceeds the budget of {limit}")]
    WindowTooLarge { cells: usize, limit: usize },
    #[error("insufficient padding: noise grid must cover the evaluation grid padded by {needed} cells per side")]
    InsufficientPadding { needed: i64 },
    #[error("incompatible spacing: {0}")]
    IncompatibleSpacing(String),
}

/// Largest power of two ≤ `eps`. Coarsening scales are snapped down to
/// dyadics so that the scales of a coupled pair divide each other exactly.
pub fn snap_epsilon_down(eps: f64) -> f64 {
    assert!(eps > 0.0 && eps.is_finite());
    eps.log2().floor().exp2()
}

/// Evaluation spacing for a cell scale: `eps` split into equal parts no
/// coarser than 1/4.
pub fn default_spacing(eps: f64) -> f64 {
    eps / (eps / 0.25).ceil().max(1.0)
}

/// Deterministic context of one field model: kernel taps, grids, and the
/// convolution plan. Build once, sample many replicas.
pub struct FieldModel {
    pub spec: KernelSpec,
    /// Truncation range N; `None` evaluates the untruncated kernel.
    pub truncation: Option<f64>,
    pub h: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub window: Window,
    /// Field evaluation nodes, spacing `h`.
    pub eval: GridGeom,
    /// Cell centers of the coarsening, spacing `epsilon`.
    pub coarse: GridGeom,
    /// White-noise sites, the evaluation grid padded by the tap radius.
    pub noise: GridGeom,
    /// Substream for the ternary flags; lets the members of a coupled pair
    /// resample independently while sharing white noise.
    pub ternary_substream: u64,
    /// `epsilon / h`.
    m: i64,
    /// Tap radius in cells.
    pad: i64,
    taps: Vec<f64>,
    tap_geom: GridGeom,
    plan: ConvPlan,
    fft_dims: Vec<usize>,
}

/// One replica of a model: field values and ternary flags.
#[derive(Clone, Debug)]
pub struct FieldSample {
    /// Field at the evaluation nodes.
    pub fine: Vec<f64>,
    /// Field at the cell centers (the coarsening's representative values).
    pub coarse: Vec<f64>,
    /// Ternary flag per cell: `+1` forced open, `-1` forced closed, `0` none.
    pub ternary: Vec<i8>,
}

/// A sampled replica together with its model.
#[derive(Clone)]
pub struct FieldBundle {
    pub model: Arc<FieldModel>,
    pub sample: FieldSample,
    pub seed: u64,
    pub replica: u64,
}

impl FieldModel {
    pub fn new(
        spec: KernelSpec,
        truncation: Option<f64>,
        epsilon: f64,
        delta: f64,
        window: Window,
        h: f64,
        ternary_substream: u64,
    ) -> Result<Self, FieldError> {
        assert!(h > 0.0 && epsilon > 0.0, "spacings must be positive");
        assert!((0.0..=1.0).contains(&delta), "delta must lie in [0, 1]");
        assert_eq!(window.dim(), spec.d);
        if let Some(n) = truncation {
            assert!(n > 0.0, "truncation range must be positive");
        }
        let d = spec.d;
        let m = (epsilon / h).round() as i64;
        if m < 1 || (epsilon - m as f64 * h).abs() > 1e-9 * epsilon {
            return Err(FieldError::IncompatibleSpacing(format!(
                "cell scale {epsilon} is not an integer multiple of spacing {h}"
            )));
        }

        let coarse = window.cells(epsilon);
        if coarse.is_empty() {
            return Err(FieldError::WindowTooSmall(format!(
                "no cell centers at scale {epsilon} inside the window"
            )));
        }
        let fine = window.cells(h);
        let eval = GridGeom {
            spacing: h,
            ranges: (0..d)
                .map(|ax| AxisRange {
                    lo: fine.ranges[ax].lo.min(m * coarse.ranges[ax].lo),
                    hi: fine.ranges[ax].hi.max(m * coarse.ranges[ax].hi),
                })
                .collect(),
        };

        let radius = match truncation {
            Some(n) => spec.numeric_radius(TAP_TOL).min(n / 2.0),
            None => spec.numeric_radius(TAP_TOL),
        };
        let pad = (radius / h).ceil() as i64;
        let tap_geom = GridGeom {
            spacing: h,
            ranges: vec![AxisRange { lo: -pad, hi: pad }; d],
        };
        let cut = truncation.map(CutoffSpec::new);
        let amp = h.powf(d as f64 / 2.0);
        let mut taps = vec![0.0; tap_geom.len()];
        let mut x = vec![0.0; d];
        tap_geom.visit(|idx, flat| {
            for (a, v) in idx.iter().enumerate() {
                x[a] = *v as f64 * h;
            }
            let chi = cut.as_ref().map_or(1.0, |c| crate::kernel::eval_cutoff(c, &x));
            taps[flat] = amp * crate::kernel::eval_q(&spec, &x) * chi;
        });

        let noise = GridGeom {
            spacing: h,
            ranges: eval
                .ranges
                .iter()
                .map(|r| AxisRange { lo: r.lo - pad, hi: r.hi + pad })
                .collect(),
        };
        let fft_dims: Vec<usize> = noise.extents().iter().map(|&n| good_size(n)).collect();
        let fft_len: usize = fft_dims.iter().product();
        if fft_len > CELL_BUDGET || noise.len() > CELL_BUDGET {
            return Err(FieldError::WindowTooLarge {
                cells: fft_len.max(noise.len()),
                limit: CELL_BUDGET,
            });
        }

        let mut wrapped = vec![0.0; fft_len];
        tap_geom.visit(|idx, flat| {
            let mut pos = 0usize;
            for (a, t) in idx.iter().enumerate() {
                let l = fft_dims[a] as i64;
                pos = pos * fft_dims[a] + ((t % l + l) % l) as usize;
            }
            wrapped[pos] = taps[flat];
        });
        let plan = ConvPlan::new(&fft_dims, &wrapped);

        Ok(FieldModel {
            spec,
            truncation,
            h,
            epsilon,
            delta,
            window,
            eval,
            coarse,
            noise,
            ternary_substream,
            m,
            pad,
            taps,
            tap_geom,
            plan,
            fft_dims,
        })
    }

    pub fn into_shared(self) -> Arc<FieldModel> {
        Arc::new(self)
    }

    /// Tap radius in grid cells.
    pub fn pad_cells(&self) -> i64 {
        self.pad
    }

    /// White noise on [`FieldModel::noise`], keyed by lattice position.
    pub fn sample_noise(&self, seed: u64, replica: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.noise.len()];
        self.noise.visit(|idx, flat| {
            out[flat] = rng::site_gaussian(seed, replica, substream::NOISE, idx);
        });
        out
    }

    fn check_noise_cover(&self, noise_geom: &GridGeom, noise: &[f64]) -> Result<(), FieldError> {
        if (noise_geom.spacing - self.h).abs() > 1e-12 * self.h {
            return Err(FieldError::IncompatibleSpacing(format!(
                "noise spacing {} differs from model spacing {}",
                noise_geom.spacing, self.h
            )));
        }
        assert_eq!(noise.len(), noise_geom.len());
        let covered = self
            .eval
            .ranges
            .iter()
            .zip(&noise_geom.ranges)
            .all(|(e, n)| n.lo <= e.lo - self.pad && n.hi >= e.hi + self.pad);
        if !covered {
            return Err(FieldError::InsufficientPadding { needed: self.pad });
        }
        Ok(())
    }

    /// Field values on [`FieldModel::eval`] by circular FFT convolution.
    /// Exact (up to roundoff) because the noise grid pads the evaluation
    /// grid by the full tap radius.
    pub fn convolve(&self, noise_geom: &GridGeom, noise: &[f64]) -> Result<Vec<f64>, FieldError> {
        self.check_noise_cover(noise_geom, noise)?;
        let fft_len: usize = self.fft_dims.iter().product();
        let mut src = vec![0.0; fft_len];
        let dims = self.fft_dims.clone();
        let lo: Vec<i64> = self.noise.ranges.iter().map(|r| r.lo).collect();
        self.noise.visit(|idx, _| {
            let mut pos = 0usize;
            for a in 0..idx.len() {
                pos = pos * dims[a] + (idx[a] - lo[a]) as usize;
            }
            src[pos] = noise[noise_geom.flat(idx)];
        });
        let full = self.plan.apply(&src);
        let mut out = vec![0.0; self.eval.len()];
        self.eval.visit(|idx, flat| {
            let mut pos = 0usize;
            for a in 0..idx.len() {
                pos = pos * dims[a] + (idx[a] - lo[a]) as usize;
            }
            out[flat] = full[pos];
        });
        Ok(out)
    }

    /// Field values by the direct tap sum. Slow; the verification twin of
    /// [`FieldModel::convolve`].
    pub fn convolve_direct(&self, noise_geom: &GridGeom, noise: &[f64]) -> Result<Vec<f64>, FieldError> {
        self.check_noise_cover(noise_geom, noise)?;
        let entries: Vec<(Vec<i64>, f64)> = self
            .tap_geom
            .iter()
            .zip(self.taps.iter().copied())
            .filter(|(_, v)| *v != 0.0)
            .collect();
        let d = self.eval.dim();
        let mut out = vec![0.0; self.eval.len()];
        let mut shifted = vec![0i64; d];
        let mut flat = 0usize;
        for idx in self.eval.iter() {
            let mut acc = 0.0;
            for (t, w) in &entries {
                for a in 0..d {
                    shifted[a] = idx[a] - t[a];
                }
                acc += w * noise[noise_geom.flat(&shifted)];
            }
            out[flat] = acc;
            flat += 1;
        }
        Ok(out)
    }

    /// Ternary flags on [`FieldModel::coarse`], keyed by cell position.
    pub fn sample_ternary(&self, seed: u64, replica: u64) -> Vec<i8> {
        let mut out = vec![0i8; self.coarse.len()];
        if self.delta > 0.0 {
            let (half, full) = (self.delta / 2.0, self.delta);
            self.coarse.visit(|idx, flat| {
                let u = rng::site_uniform(seed, replica, self.ternary_substream, idx);
                out[flat] = if u < half {
                    1
                } else if u < full {
                    -1
                } else {
                    0
                };
            });
        }
        out
    }

    /// One full replica.
    pub fn sample(&self, seed: u64, replica: u64) -> FieldSample {
        let noise = self.sample_noise(seed, replica);
        let fine = self
            .convolve(&self.noise, &noise)
            .expect("model noise grid covers its own evaluation grid");
        let mut coarse = vec![0.0; self.coarse.len()];
        let m = self.m;
        let mut scaled = vec![0i64; self.coarse.dim()];
        self.coarse.visit(|idx, flat| {
            for a in 0..idx.len() {
                scaled[a] = m * idx[a];
            }
            coarse[flat] = fine[self.eval.flat(&scaled)];
        });
        let ternary = self.sample_ternary(seed, replica);
        FieldSample { fine, coarse, ternary }
    }

    /// Index of the cell whose half-open box `center + [−ε/2, ε/2)^d`
    /// contains `x`.
    pub fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.epsilon + 0.5).floor() as i64).collect()
    }
}

/// Builds the model and samples one replica.
#[allow(clippy::too_many_arguments)]
pub fn make_bundle(
    spec: &KernelSpec,
    truncation: Option<f64>,
    epsilon: f64,
    delta: f64,
    window: &Window,
    h: f64,
    seed: u64,
    replica: u64,
) -> Result<FieldBundle, FieldError> {
    let model = FieldModel::new(
        spec.clone(),
        truncation,
        epsilon,
        delta,
        window.clone(),
        h,
        substream::TERNARY,
    )?
    .into_shared();
    Ok(bundle_from(&model, seed, replica))
}

/// Samples one replica of an already-built model.
pub fn bundle_from(model: &Arc<FieldModel>, seed: u64, replica: u64) -> FieldBundle {
    FieldBundle {
        sample: model.sample(seed, replica),
        model: Arc::clone(model),
        seed,
        replica,
    }
}

/// Largest `|a − b|` over evaluation nodes in `center + [−radius, radius]^d`.
/// The models must share their spacing and both evaluation grids must
/// contain the box.
pub fn local_gap(a: &FieldBundle, b: &FieldBundle, center: &[f64], radius: f64) -> Result<f64, FieldError> {
    let (ma, mb) = (&a.model, &b.model);
    if (ma.h - mb.h).abs() > 1e-12 * ma.h {
        return Err(FieldError::IncompatibleSpacing(format!(
            "gap of models with spacings {} and {}",
            ma.h, mb.h
        )));
    }
    let window = Window::new(
        center.iter().map(|c| c - radius).collect(),
        center.iter().map(|c| c + radius).collect(),
    );
    let cells = window.cells(ma.h);
    if cells.is_empty() {
        return Err(FieldError::WindowTooSmall(format!(
            "gap box of radius {radius} holds no grid nodes at spacing {}",
            ma.h
        )));
    }
    let mut max = 0.0f64;
    for idx in cells.iter() {
        if !ma.eval.contains(&idx) || !mb.eval.contains(&idx) {
            return Err(FieldError::WindowTooSmall(format!(
                "gap box of radius {radius} around {center:?} leaves an evaluation window"
            )));
        }
        let gap = (a.sample.fine[ma.eval.flat(&idx)] - b.sample.fine[mb.eval.flat(&idx)]).abs();
        max = max.max(gap);
    }
    Ok(max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;

    fn bf_model(truncation: Option<f64>, epsilon: f64, delta: f64, half: f64, h: f64) -> Arc<FieldModel> {
        FieldModel::new(
            KernelSpec::bargmann_fock(2),
            truncation,
            epsilon,
            delta,
            Window::cube(2, half),
            h,
            substream::TERNARY,
        )
        .unwrap()
        .into_shared()
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = bf_model(Some(6.0), 0.25, 0.2, 2.0, 0.25);
        let a = model.sample(11, 4);
        let b = model.sample(11, 4);
        assert_eq!(a.fine, b.fine);
        assert_eq!(a.ternary, b.ternary);
        let c = model.sample(11, 5);
        assert_ne!(a.fine, c.fine);
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let model = bf_model(None, 0.25, 0.0, 1.5, 0.25);
        let noise = model.sample_noise(3, 0);
        let fast = model.convolve(&model.noise, &noise).unwrap();
        let slow = model.convolve_direct(&model.noise, &noise).unwrap();
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn coarse_values_sit_at_cell_centers() {
        let model = bf_model(Some(4.0), 0.5, 0.0, 2.0, 0.25);
        let s = model.sample(7, 1);
        let mut checked = 0;
        for idx in model.coarse.iter() {
            let scaled: Vec<i64> = idx.iter().map(|i| i * 2).collect();
            assert_eq!(s.coarse[model.coarse.flat(&idx)], s.fine[model.eval.flat(&scaled)]);
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn shared_spacing_means_shared_noise() {
        // different windows and truncations, same lattice: coupled
        let a = bf_model(Some(4.0), 0.25, 0.0, 2.0, 0.25);
        let b = bf_model(Some(8.0), 0.25, 0.0, 3.0, 0.25);
        let na = a.sample_noise(21, 9);
        let nb = b.sample_noise(21, 9);
        let idx = [3, -2];
        assert_eq!(na[a.noise.flat(&idx)], nb[b.noise.flat(&idx)]);
    }

    #[test]
    fn truncation_beyond_support_is_exact() {
        // χ_N ≡ 1 on the whole tap box (corners included) once N/4 exceeds
        // √d times the tap radius, so the truncated and full fields
        // coincide bitwise
        let full = bf_model(None, 0.25, 0.0, 1.0, 0.25);
        let trunc = bf_model(Some(30.0), 0.25, 0.0, 1.0, 0.25);
        assert_eq!(full.fft_dims, trunc.fft_dims);
        assert_eq!(full.pad, trunc.pad);
        assert_eq!(full.taps, trunc.taps);
        assert_eq!(full.noise.ranges, trunc.noise.ranges);
        let a = full.sample(5, 2);
        let b = trunc.sample(5, 2);
        assert_eq!(a.fine, b.fine);
    }

    #[test]
    fn ternary_frequencies_match_delta() {
        let model = bf_model(Some(4.0), 0.25, 0.3, 20.0, 0.25);
        let s = model.sample_ternary(13, 0);
        let n = s.len() as f64;
        let plus = s.iter().filter(|v| **v == 1).count() as f64 / n;
        let minus = s.iter().filter(|v| **v == -1).count() as f64 / n;
        assert!(n >= 25_000.0);
        assert!((plus - 0.15).abs() < 0.01, "plus {plus}");
        assert!((minus - 0.15).abs() < 0.01, "minus {minus}");
        let none = model.sample_ternary(13, 1);
        assert_eq!(none.len(), s.len());
    }

    #[test]
    fn delta_zero_has_no_flags() {
        let model = bf_model(Some(4.0), 0.25, 0.0, 5.0, 0.25);
        assert!(model.sample_ternary(1, 0).iter().all(|v| *v == 0));
    }

    #[test]
    fn field_variance_is_near_unit() {
        // Var f(0) = h^d Σ q(ht)² ≈ ∫ q² = 1 for the Bargmann–Fock kernel
        let model = bf_model(None, 0.25, 0.0, 0.5, 0.25);
        let center = model.eval.flat(&[0, 0]);
        let n = 400;
        let mut sum2 = 0.0;
        for r in 0..n {
            let v = model.sample(99, r).fine[center];
            sum2 += v * v;
        }
        let var = sum2 / n as f64;
        assert!((var - 1.0).abs() < 0.25, "var {var}");
    }

    #[test]
    fn unpadded_noise_is_rejected() {
        let model = bf_model(Some(4.0), 0.25, 0.0, 1.0, 0.25);
        let bad_geom = model.eval.clone();
        let bad = vec![0.0; bad_geom.len()];
        match model.convolve(&bad_geom, &bad) {
            Err(FieldError::InsufficientPadding { needed }) => assert!(needed > 0),
            other => panic!("expected InsufficientPadding, got {other:?}"),
        }
    }

    #[test]
    fn empty_window_is_rejected() {
        let err = FieldModel::new(
            KernelSpec::bargmann_fock(2),
            Some(4.0),
            1.0,
            0.0,
            Window::new(vec![0.3, 0.3], vec![0.4, 0.4]),
            0.5,
            substream::TERNARY,
        );
        assert!(matches!(err, Err(FieldError::WindowTooSmall(_))));
    }

    #[test]
    fn oversized_window_is_rejected() {
        let err = FieldModel::new(
            KernelSpec::bargmann_fock(2),
            None,
            0.25,
            0.0,
            Window::cube(2, 2000.0),
            0.25,
            substream::TERNARY,
        );
        assert!(matches!(err, Err(FieldError::WindowTooLarge { .. })));
    }

    #[test]
    fn incommensurate_scales_are_rejected() {
        let err = FieldModel::new(
            KernelSpec::bargmann_fock(2),
            Some(4.0),
            0.3,
            0.0,
            Window::cube(2, 2.0),
            0.25,
            substream::TERNARY,
        );
        assert!(matches!(err, Err(FieldError::IncompatibleSpacing(_))));
    }

    #[test]
    fn local_gap_vanishes_for_identical_models() {
        let model = bf_model(Some(30.0), 0.25, 0.0, 3.0, 0.25);
        let a = bundle_from(&model, 17, 0);
        let full = bf_model(None, 0.25, 0.0, 3.0, 0.25);
        let b = bundle_from(&full, 17, 0);
        let gap = local_gap(&a, &b, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(gap, 0.0);
        assert!(local_gap(&a, &b, &[0.0, 0.0], 50.0).is_err());
    }

    #[test]
    fn snapping_helpers() {
        assert_eq!(snap_epsilon_down(0.0743), 0.0625);
        assert_eq!(snap_epsilon_down(0.177), 0.125);
        assert_eq!(snap_epsilon_down(0.125), 0.125);
        assert_eq!(snap_epsilon_down(1.7), 1.0);
        assert_eq!(default_spacing(0.0625), 0.0625);
        assert_eq!(default_spacing(0.5), 0.25);
        assert_eq!(default_spacing(1.0), 0.25);
        assert_eq!(default_spacing(0.3), 0.15);
    }
}
