//! Stepwise interpolation between the coupled occupancy models of a
//! replica.
//!
//! The window is paved by boxes of side 2N centered on the lattice 2N·Z^d,
//! walked in a fixed order (distance shells, then lexicographic). Step n
//! swaps box n from the coarse model (range 2N, its own cells and flags)
//! to the fine model (range N) and pays for the swap with sprinkling: on
//! the half step the level rises by ½s on the swapped box, and on the full
//! step a further layer `s·τ((·−x_n)/2N)` spreads over every box, where τ
//! is the normalized profile `c_d (1 + |x|∞^{d+1})^{−1}` on unit cells.
//! The profile is constant on boxes, so the entire sprinkling state is one
//! scalar per box, and the profile sums to ½ over the unit lattice, which
//! makes the fully saturated level exactly ℓ + s.
//!
//! Endpoints: at k = 0 the occupancy is the coarse model at level ℓ; at
//! saturation it is the fine model at level ℓ + s. Half steps only add
//! sprinkling, so `I_{n+½} ⊆ I_{n+1}` cell by cell in every replica.
//! Integer steps swap a box and can lose cells; the sufficient-event rate
//! of [`inclusion_rate`] quantifies how rarely.

use crate::field::{FieldBundle, FieldModel, FieldSample};
use crate::grid::GridGeom;
use crate::perc::{self, Adjacency, EventSpec, OccupancyGrid, PercError};
use crate::stats::{wilson, Estimate};
use rayon::prelude::*;
use std::sync::{Arc, OnceLock};

/// Normalizer `c_d` of the spread profile: `Σ_{m ∈ Z^d} c_d (1 + |m|∞^{d+1})^{−1} = ½`.
pub fn tau_normalizer(d: usize) -> f64 {
    static CACHE: [OnceLock<f64>; 9] = [const { OnceLock::new() }; 9];
    assert!((1..=8).contains(&d), "profile normalizer supports d in 1..=8");
    *CACHE[d].get_or_init(|| compute_tau_normalizer(d))
}

fn compute_tau_normalizer(d: usize) -> f64 {
    let p = d as i32 + 1;
    // exact shell sum out to K, then the integral-plus-midpoint tail of
    // the decreasing shell weight g(t) = ((2t+1)^d − (2t−1)^d)/(1 + t^{d+1})
    let k_max = 100_000u32;
    let mut s = 1.0;
    for k in 1..=k_max {
        let kf = k as f64;
        let cnt = (2.0 * kf + 1.0).powi(d as i32) - (2.0 * kf - 1.0).powi(d as i32);
        s += cnt / (1.0 + kf.powi(p));
    }
    let t0 = (k_max + 1) as f64;
    // ∫_{t0}^∞ g dt under u = 1/t; the integrand extends continuously to
    // u = 0 with value d·2^d
    let f = |u: f64| -> f64 {
        if u == 0.0 {
            return d as f64 * 2f64.powi(d as i32);
        }
        ((2.0 + u).powi(d as i32) - (2.0 - u).powi(d as i32)) / (u * (u.powi(p) + 1.0))
    };
    let n = 2000;
    let h = (1.0 / t0) / n as f64;
    let mut integral = f(0.0) + f(1.0 / t0);
    for i in 1..n {
        integral += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    integral *= h / 3.0;
    let g_t0 = ((2.0 * t0 + 1.0).powi(d as i32) - (2.0 * t0 - 1.0).powi(d as i32)) / (1.0 + t0.powi(p));
    0.5 / (s + integral + 0.5 * g_t0)
}

/// Spread profile at `z`: constant `c_d (1 + |m|∞^{d+1})^{−1}` on each unit
/// cell `m + [−½, ½)^d`.
pub fn tau_base(d: usize, z: &[f64]) -> f64 {
    let m = z
        .iter()
        .map(|v| ((v + 0.5).floor() as i64).abs())
        .max()
        .expect("profile argument must be nonempty");
    tau_normalizer(d) / (1.0 + (m as f64).powi(d as i32 + 1))
}

/// Position on the interpolation path: after `n` full steps, optionally
/// mid-swap of box `n`; or fully saturated (every box fine, level ℓ + s).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpIndex {
    Step { n: usize, half: bool },
    Saturated,
}

impl InterpIndex {
    /// Parses `k ∈ {0, ½, 1, 3/2, …} ∪ {+∞}`.
    pub fn from_f64(k: f64) -> InterpIndex {
        if k.is_infinite() && k > 0.0 {
            return InterpIndex::Saturated;
        }
        assert!(
            k >= 0.0 && (2.0 * k).fract() == 0.0,
            "interpolation index must be a nonnegative half-integer or infinity, got {k}"
        );
        let twice = (2.0 * k) as u64;
        InterpIndex::Step {
            n: (twice / 2) as usize,
            half: twice % 2 == 1,
        }
    }

    /// Number of boxes reading the fine model at this index.
    pub fn processed(&self, total: usize) -> usize {
        match self {
            InterpIndex::Saturated => total,
            InterpIndex::Step { n, half } => n + usize::from(*half),
        }
    }
}

fn chebyshev_diff(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or(0)
}

/// A coupled (range N, range 2N) pair with its box paving.
pub struct HybridPair {
    pub fine: Arc<FieldModel>,
    pub coarse: Arc<FieldModel>,
    /// Box lattice coordinates in processing order; box `i` is centered at
    /// `2N·boxes[i]`.
    pub boxes: Vec<Vec<i64>>,
    /// Box half-side N.
    pub box_half: f64,
    /// Total sprinkling s.
    pub sprinkle: f64,
    pub c_d: f64,
    /// Processing-order box of each fine cell.
    cell_box: Vec<u32>,
    /// Coarse-model cell holding each fine cell's center.
    cell_coarse: Vec<u32>,
}

impl HybridPair {
    pub fn new(fine: Arc<FieldModel>, coarse: Arc<FieldModel>, sprinkle: f64) -> HybridPair {
        let n = fine.truncation.expect("fine member must be truncated");
        let n2 = coarse.truncation.expect("coarse member must be truncated");
        assert!((n2 - 2.0 * n).abs() <= 1e-9 * n, "coarse range must be twice the fine range");
        assert!((fine.h - coarse.h).abs() <= 1e-12 * fine.h, "pair must share its spacing");
        assert!(sprinkle > 0.0, "sprinkling must be positive");
        assert_ne!(
            fine.ternary_substream, coarse.ternary_substream,
            "pair members must resample independently"
        );
        let d = fine.spec.d;
        let side = 2.0 * n;
        let cells = fine.coarse.len();
        let mut coord_of_cell: Vec<Vec<i64>> = Vec::with_capacity(cells);
        let mut cell_coarse = vec![0u32; cells];
        fine.coarse.visit(|idx, flat| {
            let y: Vec<f64> = idx.iter().map(|i| *i as f64 * fine.epsilon).collect();
            let bx: Vec<i64> = y.iter().map(|v| ((v + n) / side).floor() as i64).collect();
            coord_of_cell.push(bx);
            let cc = coarse.cell_of(&y);
            assert!(
                coarse.coarse.contains(&cc),
                "fine cell {idx:?} maps outside the coarse grid"
            );
            cell_coarse[flat] = coarse.coarse.flat(&cc) as u32;
        });
        let mut boxes: Vec<Vec<i64>> = coord_of_cell.clone();
        boxes.sort();
        boxes.dedup();
        boxes.sort_by(|a, b| {
            let ka = a.iter().map(|v| v.abs()).max().unwrap();
            let kb = b.iter().map(|v| v.abs()).max().unwrap();
            ka.cmp(&kb).then_with(|| a.cmp(b))
        });
        let index_of: std::collections::HashMap<&[i64], u32> = boxes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_slice(), i as u32))
            .collect();
        let cell_box: Vec<u32> = coord_of_cell.iter().map(|c| index_of[c.as_slice()]).collect();
        let c_d = tau_normalizer(d);
        HybridPair {
            fine,
            coarse,
            boxes,
            box_half: n,
            sprinkle,
            c_d,
            cell_box,
            cell_coarse,
        }
    }

    /// Profile weight that step `m` deposits on box `j`.
    fn unit_coupling(&self, j: usize, m: usize) -> f64 {
        let d = self.fine.spec.d as i32;
        let dist = chebyshev_diff(&self.boxes[j], &self.boxes[m]) as f64;
        self.c_d / (1.0 + dist.powi(d + 1))
    }

    /// Per-box sprinkling levels at index `k`.
    pub fn tau_profile(&self, k: InterpIndex) -> Vec<f64> {
        let total = self.boxes.len();
        match k {
            InterpIndex::Saturated => vec![self.sprinkle; total],
            InterpIndex::Step { n, half } => {
                assert!(
                    n + usize::from(half) <= total,
                    "index past the final box (n = {n}, {total} boxes)"
                );
                let mut tau = vec![0.0; total];
                for (j, slot) in tau.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for m in 0..n {
                        acc += self.unit_coupling(j, m);
                    }
                    *slot = self.sprinkle * acc;
                    if j < n || (half && j == n) {
                        *slot += 0.5 * self.sprinkle;
                    }
                }
                tau
            }
        }
    }

    /// One half-step of the profile recursion; returns the next index.
    pub fn tau_step(&self, tau: &mut [f64], from: InterpIndex) -> InterpIndex {
        assert_eq!(tau.len(), self.boxes.len());
        match from {
            InterpIndex::Saturated => InterpIndex::Saturated,
            InterpIndex::Step { n, half: false } => {
                assert!(n < self.boxes.len(), "stepping past the final box");
                tau[n] += 0.5 * self.sprinkle;
                InterpIndex::Step { n, half: true }
            }
            InterpIndex::Step { n, half: true } => {
                for j in 0..tau.len() {
                    tau[j] += self.sprinkle * self.unit_coupling(j, n);
                }
                InterpIndex::Step { n: n + 1, half: false }
            }
        }
    }

    /// Hybrid occupancy at interpolation index `k` and base level ℓ: boxes
    /// before the processing frontier read the fine model, the rest read
    /// the coarse model, all at level ℓ + τ_k(box).
    pub fn occupancy(
        &self,
        fine_s: &FieldSample,
        coarse_s: &FieldSample,
        level: f64,
        k: InterpIndex,
    ) -> OccupancyGrid {
        let tau = self.tau_profile(k);
        self.occupancy_with_tau(fine_s, coarse_s, level, k.processed(self.boxes.len()), &tau)
    }

    /// Occupancy from an externally advanced profile.
    pub fn occupancy_with_tau(
        &self,
        fine_s: &FieldSample,
        coarse_s: &FieldSample,
        level: f64,
        processed: usize,
        tau: &[f64],
    ) -> OccupancyGrid {
        let cells = self.cell_box.len();
        let mut open = vec![false; cells];
        for (flat, slot) in open.iter_mut().enumerate() {
            let b = self.cell_box[flat] as usize;
            let lv = level + tau[b];
            *slot = if b < processed {
                perc::cell_open(fine_s.coarse[flat], fine_s.ternary[flat], lv)
            } else {
                let cf = self.cell_coarse[flat] as usize;
                perc::cell_open(coarse_s.coarse[cf], coarse_s.ternary[cf], lv)
            };
        }
        OccupancyGrid {
            geom: self.fine.coarse.clone(),
            open,
        }
    }

    /// Samples the coupled pair: one white-noise realization, independent
    /// ternary flags.
    pub fn sample(&self, seed: u64, replica: u64) -> (FieldSample, FieldSample) {
        (self.fine.sample(seed, replica), self.coarse.sample(seed, replica))
    }

    /// Geometry of the hybrid occupancy (the fine cell grid).
    pub fn cell_geom(&self) -> &GridGeom {
        &self.fine.coarse
    }
}

/// One-shot hybrid occupancy from two coupled bundles.
pub fn hybrid(fine: &FieldBundle, coarse: &FieldBundle, level: f64, k: f64, sprinkle: f64) -> OccupancyGrid {
    assert_eq!(
        (fine.seed, fine.replica),
        (coarse.seed, coarse.replica),
        "hybrid members must come from one replica"
    );
    let pair = HybridPair::new(Arc::clone(&fine.model), Arc::clone(&coarse.model), sprinkle);
    pair.occupancy(&fine.sample, &coarse.sample, level, InterpIndex::from_f64(k))
}

/// Inclusion statistics of the swap step `n → n+½` on box n.
#[derive(Clone, Copy, Debug)]
pub struct InclusionReport {
    /// Rate of `I_n ⊆ I_{n+½}` on the swapped box.
    pub included: Estimate,
    /// Rate of the sufficient event: field gap ≤ s/2 and no ternary flag
    /// on the box, in either model.
    pub sufficient: Estimate,
    /// Replicas where the sufficient event held yet inclusion failed.
    /// Provably impossible; kept as a live guard.
    pub sufficient_violations: u64,
}

/// Estimates how often the swap loses cells, against its sufficient event.
pub fn inclusion_rate(
    pair: &HybridPair,
    level: f64,
    step: usize,
    seed: u64,
    replicas: u64,
    z: f64,
) -> InclusionReport {
    assert!(step < pair.boxes.len());
    let box_cells: Vec<usize> = (0..pair.cell_box.len())
        .filter(|flat| pair.cell_box[*flat] as usize == step)
        .collect();
    assert!(!box_cells.is_empty());
    let tau_at_box: f64 = pair.sprinkle * (0..step).map(|m| pair.unit_coupling(step, m)).sum::<f64>();
    let lv_coarse = level + tau_at_box;
    let lv_fine = lv_coarse + 0.5 * pair.sprinkle;
    let half_s = 0.5 * pair.sprinkle;

    let (incl, suff, viol) = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let (fs, cs) = pair.sample(seed, r);
            let mut included = true;
            let mut gap_ok = true;
            let mut flags_ok = true;
            for &flat in &box_cells {
                let cf = pair.cell_coarse[flat] as usize;
                let open_before = perc::cell_open(cs.coarse[cf], cs.ternary[cf], lv_coarse);
                let open_after = perc::cell_open(fs.coarse[flat], fs.ternary[flat], lv_fine);
                if open_before && !open_after {
                    included = false;
                }
                if (fs.coarse[flat] - cs.coarse[cf]).abs() > half_s {
                    gap_ok = false;
                }
                if fs.ternary[flat] != 0 || cs.ternary[cf] != 0 {
                    flags_ok = false;
                }
            }
            let sufficient = gap_ok && flags_ok;
            (
                u64::from(included),
                u64::from(sufficient),
                u64::from(sufficient && !included),
            )
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    InclusionReport {
        included: wilson(incl, replicas, z),
        sufficient: wilson(suff, replicas, z),
        sufficient_violations: viol,
    }
}

/// Pivotality of one box scale L at the mid-swap state, plus the step and
/// sprinkle gains of the surrounding indices.
#[derive(Clone, Debug)]
pub struct SitePivotal {
    pub site: Vec<f64>,
    /// Opening `site + [−l, l]^d` realizes the event and closing it
    /// defeats it, on `I_{n+½}`.
    pub pivotal: Estimate,
    /// Opening realizes the event and `I_{n+½}` itself misses it.
    pub one_sided: Estimate,
}

#[derive(Clone, Debug)]
pub struct PivotalProfile {
    pub step: usize,
    /// `P[I_n ∈ A] − P[I_{n+½} ∈ A]`; the swap's cost, either sign.
    pub p_swap: f64,
    /// `P[I_{n+1} ∈ A] − P[I_{n+½} ∈ A]` by differencing.
    pub q_sprinkle: f64,
    /// The same gain measured pathwise as `P[I_{n+1} ∈ A, I_{n+½} ∉ A]`;
    /// equal to `q_sprinkle` replica by replica because half steps nest.
    pub q_sprinkle_coupled: f64,
    pub sites: Vec<SitePivotal>,
    pub replicas: u64,
}

/// Monte Carlo profile of the step `n → n+1` around the event `A`.
#[allow(clippy::too_many_arguments)]
pub fn pivotality_profile(
    pair: &HybridPair,
    level: f64,
    event: &EventSpec,
    adj: Adjacency,
    step: usize,
    l: f64,
    sites: &[Vec<f64>],
    seed: u64,
    replicas: u64,
    z: f64,
) -> Result<PivotalProfile, PercError> {
    assert!(step + 1 <= pair.boxes.len());
    // validate event geometry once, on an empty configuration
    let probe = OccupancyGrid {
        geom: pair.cell_geom().clone(),
        open: vec![false; pair.cell_box.len()],
    };
    perc::occurs(&probe, event, adj)?;

    let mut hits_n = 0u64;
    let mut hits_half = 0u64;
    let mut hits_next = 0u64;
    let mut coupled = 0u64;
    let mut piv = vec![0u64; sites.len()];
    let mut one_sided = vec![0u64; sites.len()];
    for r in 0..replicas {
        let (fs, cs) = pair.sample(seed, r);
        let occ_n = pair.occupancy(&fs, &cs, level, InterpIndex::Step { n: step, half: false });
        let occ_half = pair.occupancy(&fs, &cs, level, InterpIndex::Step { n: step, half: true });
        let occ_next = pair.occupancy(&fs, &cs, level, InterpIndex::Step { n: step + 1, half: false });
        let a_n = perc::occurs(&occ_n, event, adj).expect("geometry validated");
        let a_half = perc::occurs(&occ_half, event, adj).expect("geometry validated");
        let a_next = perc::occurs(&occ_next, event, adj).expect("geometry validated");
        hits_n += u64::from(a_n);
        hits_half += u64::from(a_half);
        hits_next += u64::from(a_next);
        coupled += u64::from(a_next && !a_half);
        for (i, site) in sites.iter().enumerate() {
            if perc::coarse_pivotal(&occ_half, event, adj, site, l).expect("geometry validated") {
                piv[i] += 1;
            }
            if perc::closed_pivotal(&occ_half, event, adj, site, l).expect("geometry validated") {
                one_sided[i] += 1;
            }
        }
    }
    let n = replicas as f64;
    Ok(PivotalProfile {
        step,
        p_swap: (hits_n as f64 - hits_half as f64) / n,
        q_sprinkle: (hits_next as f64 - hits_half as f64) / n,
        q_sprinkle_coupled: coupled as f64 / n,
        sites: sites
            .iter()
            .zip(piv.iter().zip(&one_sided))
            .map(|(site, (p, o))| SitePivotal {
                site: site.clone(),
                pivotal: wilson(*p, replicas, z),
                one_sided: wilson(*o, replicas, z),
            })
            .collect(),
        replicas,
    })
}
