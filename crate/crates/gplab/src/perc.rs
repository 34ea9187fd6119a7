//! Site percolation on the coarsened occupancy grid.
//!
//! A cell is open when its ternary flag forces it open, or when it is
//! unforced and the cell value clears the level: `f^ε + T ≥ −ℓ`. Default
//! connectivity is nearest-neighbor (2d neighbors); the star adjacency
//! (3^d − 1 neighbors) is the planar-dual companion in two dimensions.
//!
//! Connectivity events are measured inside the stored window: paths are not
//! allowed to leave the grid. The component labeling is the workhorse; the
//! depth-first path search is its independent verification twin.

use crate::field::FieldBundle;
use crate::grid::{GridGeom, Window};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PercError {
    #[error("window too small: {0}")]
    WindowTooSmall(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Adjacency {
    /// 2d nearest neighbors.
    Nearest,
    /// All 3^d − 1 neighbors whose index differs by at most one per axis.
    Star,
}

/// Open/closed state per cell of a cell grid.
#[derive(Clone, Debug)]
pub struct OccupancyGrid {
    /// Cell-center geometry; `spacing` is the cell scale ε.
    pub geom: GridGeom,
    pub open: Vec<bool>,
}

impl OccupancyGrid {
    pub fn complement(&self) -> OccupancyGrid {
        OccupancyGrid {
            geom: self.geom.clone(),
            open: self.open.iter().map(|b| !b).collect(),
        }
    }
}

/// Occupied set `{f^ε + T ≥ −level}` of a sampled replica.
pub fn threshold(bundle: &FieldBundle, level: f64) -> OccupancyGrid {
    let model = &bundle.model;
    let sample = &bundle.sample;
    let open = sample
        .coarse
        .iter()
        .zip(&sample.ternary)
        .map(|(v, t)| cell_open(*v, *t, level))
        .collect();
    OccupancyGrid { geom: model.coarse.clone(), open }
}

/// The per-cell open rule shared by every occupancy construction.
pub fn cell_open(value: f64, ternary: i8, level: f64) -> bool {
    match ternary {
        1 => true,
        -1 => false,
        _ => value >= -level,
    }
}

/// Neighbor offsets of an adjacency, in lexicographically increasing order.
fn offsets(d: usize, adj: Adjacency) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    match adj {
        Adjacency::Nearest => {
            for a in 0..d {
                for sgn in [-1i64, 1] {
                    let mut off = vec![0i64; d];
                    off[a] = sgn;
                    out.push(off);
                }
            }
        }
        Adjacency::Star => {
            let mut off = vec![-1i64; d];
            loop {
                if off.iter().any(|v| *v != 0) {
                    out.push(off.clone());
                }
                let mut ax = d;
                loop {
                    if ax == 0 {
                        out.sort();
                        return out;
                    }
                    ax -= 1;
                    if off[ax] < 1 {
                        off[ax] += 1;
                        break;
                    }
                    off[ax] = -1;
                }
            }
        }
    }
    out.sort();
    out
}

/// Component labels per cell; closed cells carry [`NO_COMP`]. Labels are
/// canonical: components are numbered by first appearance in flat order.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    pub comp: Vec<u32>,
    pub count: usize,
}

pub const NO_COMP: u32 = u32::MAX;

struct Dsu {
    parent: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let up = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = up;
            x = up;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins, keeping roots stable under scan order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Union-find labeling.
pub fn label(grid: &OccupancyGrid, adj: Adjacency) -> Labels {
    let geom = &grid.geom;
    let d = geom.dim();
    // forward offsets only (first nonzero component positive): each
    // undirected edge is inspected once
    let offs: Vec<Vec<i64>> = offsets(d, adj)
        .into_iter()
        .filter(|o| *o.iter().find(|v| **v != 0).unwrap() > 0)
        .collect();
    let mut dsu = Dsu::new(geom.len());
    let mut nb = vec![0i64; d];
    geom.visit(|idx, flat| {
        if !grid.open[flat] {
            return;
        }
        for off in &offs {
            for a in 0..d {
                nb[a] = idx[a] + off[a];
            }
            if geom.contains(&nb) {
                let nflat = geom.flat(&nb);
                if grid.open[nflat] {
                    dsu.union(flat as u32, nflat as u32);
                }
            }
        }
    });
    canonicalize(grid, |flat| dsu.find(flat as u32))
}

fn canonicalize(grid: &OccupancyGrid, mut root_of: impl FnMut(usize) -> u32) -> Labels {
    let mut names: Vec<u32> = vec![NO_COMP; grid.open.len()];
    let mut comp = vec![NO_COMP; grid.open.len()];
    let mut count = 0u32;
    for flat in 0..grid.open.len() {
        if !grid.open[flat] {
            continue;
        }
        let root = root_of(flat) as usize;
        if names[root] == NO_COMP {
            names[root] = count;
            count += 1;
        }
        comp[flat] = names[root];
    }
    Labels { comp, count: count as usize }
}

/// Breadth-first labeling; the verification twin of [`label`].
pub fn label_bfs(grid: &OccupancyGrid, adj: Adjacency) -> Labels {
    let geom = &grid.geom;
    let d = geom.dim();
    let offs = offsets(d, adj);
    let mut comp = vec![NO_COMP; grid.open.len()];
    let mut count = 0u32;
    let mut queue: Vec<usize> = Vec::new();
    let mut nb = vec![0i64; d];
    for start in 0..grid.open.len() {
        if !grid.open[start] || comp[start] != NO_COMP {
            continue;
        }
        comp[start] = count;
        queue.clear();
        queue.push(start);
        while let Some(flat) = queue.pop() {
            let idx = geom.unflat(flat);
            for off in &offs {
                for a in 0..d {
                    nb[a] = idx[a] + off[a];
                }
                if geom.contains(&nb) {
                    let nflat = geom.flat(&nb);
                    if grid.open[nflat] && comp[nflat] == NO_COMP {
                        comp[nflat] = count;
                        queue.push(nflat);
                    }
                }
            }
        }
        count += 1;
    }
    Labels { comp, count: count as usize }
}

/// Connectivity events on the occupied set, measured inside the window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EventSpec {
    /// An open path from the box `[−r, r]^d` to distance ≥ R.
    FullSpace { r: f64, big_r: f64 },
    /// The same crossing, restricted to cells with `|x_a| ≤ m` on axes
    /// a ≥ 2. Coincides with `FullSpace` in two dimensions.
    Slab { r: f64, big_r: f64, m: f64 },
    /// An open path between the two `axis`-faces of a box, inside the box.
    Crossing { rect: Window, axis: usize },
}

impl EventSpec {
    /// Left-right crossing of the centered square of side `side`.
    pub fn square_crossing(d: usize, side: f64) -> EventSpec {
        EventSpec::Crossing { rect: Window::cube(d, side / 2.0), axis: 0 }
    }
}

fn chebyshev(idx: &[i64]) -> i64 {
    idx.iter().map(|v| v.abs()).max().unwrap_or(0)
}

/// Whether the event occurs, decided through the component labeling.
pub fn occurs(grid: &OccupancyGrid, event: &EventSpec, adj: Adjacency) -> Result<bool, PercError> {
    match event {
        EventSpec::FullSpace { r, big_r } => occurs_annulus(grid, *r, *big_r, None, adj),
        EventSpec::Slab { r, big_r, m } => occurs_annulus(grid, *r, *big_r, Some(*m), adj),
        EventSpec::Crossing { rect, axis } => occurs_crossing(grid, rect, *axis, adj, false),
    }
}

fn annulus_indices(grid: &OccupancyGrid, r: f64, big_r: f64) -> Result<(i64, i64), PercError> {
    let eps = grid.geom.spacing;
    let seed_max = (r / eps + 1e-9).floor() as i64;
    let target = (big_r / eps - 1e-9).ceil() as i64;
    let covered = grid.geom.ranges.iter().all(|rg| rg.lo <= -target && rg.hi >= target);
    if !covered {
        return Err(PercError::WindowTooSmall(format!(
            "crossing to distance {big_r} needs cells out to index {target}, grid has {:?}",
            grid.geom.ranges
        )));
    }
    Ok((seed_max, target))
}

fn slab_ok(idx: &[i64], eps: f64, m: Option<f64>) -> bool {
    match m {
        None => true,
        Some(m) => idx.iter().skip(2).all(|v| (*v as f64 * eps).abs() <= m + 1e-9),
    }
}

fn occurs_annulus(grid: &OccupancyGrid, r: f64, big_r: f64, m: Option<f64>, adj: Adjacency) -> Result<bool, PercError> {
    let (seed_max, target) = annulus_indices(grid, r, big_r)?;
    let work;
    let grid = if m.is_some() {
        let eps = grid.geom.spacing;
        let mut open = grid.open.clone();
        grid.geom.visit(|idx, flat| {
            if !slab_ok(idx, eps, m) {
                open[flat] = false;
            }
        });
        work = OccupancyGrid { geom: grid.geom.clone(), open };
        &work
    } else {
        grid
    };
    let labels = label(grid, adj);
    let mut seeded = vec![false; labels.count];
    grid.geom.visit(|idx, flat| {
        if labels.comp[flat] != NO_COMP && chebyshev(idx) <= seed_max {
            seeded[labels.comp[flat] as usize] = true;
        }
    });
    let mut hit = false;
    grid.geom.visit(|idx, flat| {
        if labels.comp[flat] != NO_COMP && chebyshev(idx) >= target && seeded[labels.comp[flat] as usize] {
            hit = true;
        }
    });
    Ok(hit)
}

fn occurs_crossing(grid: &OccupancyGrid, rect: &Window, axis: usize, adj: Adjacency, _dual: bool) -> Result<bool, PercError> {
    let cells = rect.cells(grid.geom.spacing);
    if cells.is_empty() {
        return Err(PercError::WindowTooSmall("crossing box holds no cells".into()));
    }
    let inside = cells
        .ranges
        .iter()
        .zip(&grid.geom.ranges)
        .all(|(c, g)| g.lo <= c.lo && c.hi <= g.hi);
    if !inside {
        return Err(PercError::WindowTooSmall(format!(
            "crossing box {:?} leaves the grid {:?}",
            cells.ranges, grid.geom.ranges
        )));
    }
    // restricted labeling: connectivity inside the box only
    let mut open = vec![false; cells.len()];
    cells.visit(|idx, flat| {
        open[flat] = grid.open[grid.geom.flat(idx)];
    });
    let sub = OccupancyGrid { geom: cells, open };
    let labels = label(&sub, adj);
    let (lo, hi) = (sub.geom.ranges[axis].lo, sub.geom.ranges[axis].hi);
    let mut low_side = vec![false; labels.count];
    sub.geom.visit(|idx, flat| {
        if idx[axis] == lo && labels.comp[flat] != NO_COMP {
            low_side[labels.comp[flat] as usize] = true;
        }
    });
    let mut hit = false;
    sub.geom.visit(|idx, flat| {
        if idx[axis] == hi && labels.comp[flat] != NO_COMP && low_side[labels.comp[flat] as usize] {
            hit = true;
        }
    });
    Ok(hit)
}

/// Whether the event occurs, decided by depth-first path search. Slow; the
/// verification twin of [`occurs`].
pub fn occurs_path_search(grid: &OccupancyGrid, event: &EventSpec, adj: Adjacency) -> Result<bool, PercError> {
    let d = grid.geom.dim();
    let offs = offsets(d, adj);
    let eps = grid.geom.spacing;
    // per event: seed predicate, target predicate, walk restriction
    let (seeds, is_target, allowed): (Vec<usize>, Box<dyn Fn(&[i64]) -> bool>, Box<dyn Fn(&[i64]) -> bool>) = match event {
        EventSpec::FullSpace { r, big_r } | EventSpec::Slab { r, big_r, .. } => {
            let (seed_max, target) = annulus_indices(grid, *r, *big_r)?;
            let m = if let EventSpec::Slab { m, .. } = event { Some(*m) } else { None };
            let mut seeds = Vec::new();
            grid.geom.visit(|idx, flat| {
                if grid.open[flat] && chebyshev(idx) <= seed_max && slab_ok(idx, eps, m) {
                    seeds.push(flat);
                }
            });
            (
                seeds,
                Box::new(move |idx: &[i64]| chebyshev(idx) >= target),
                Box::new(move |idx: &[i64]| slab_ok(idx, eps, m)),
            )
        }
        EventSpec::Crossing { rect, axis } => {
            let cells = rect.cells(eps);
            if cells.is_empty() {
                return Err(PercError::WindowTooSmall("crossing box holds no cells".into()));
            }
            let inside = cells
                .ranges
                .iter()
                .zip(&grid.geom.ranges)
                .all(|(c, g)| g.lo <= c.lo && c.hi <= g.hi);
            if !inside {
                return Err(PercError::WindowTooSmall("crossing box leaves the grid".into()));
            }
            let axis = *axis;
            let (lo, hi) = (cells.ranges[axis].lo, cells.ranges[axis].hi);
            let mut seeds = Vec::new();
            grid.geom.visit(|idx, flat| {
                if grid.open[flat] && cells.contains(idx) && idx[axis] == lo {
                    seeds.push(flat);
                }
            });
            let cells_t = cells.clone();
            let cells_a = cells;
            (
                seeds,
                Box::new(move |idx: &[i64]| cells_t.contains(idx) && idx[axis] == hi),
                Box::new(move |idx: &[i64]| cells_a.contains(idx)),
            )
        }
    };
    let mut visited = vec![false; grid.open.len()];
    let mut stack: Vec<usize> = Vec::new();
    let mut nb = vec![0i64; d];
    for seed in seeds {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        stack.push(seed);
        while let Some(flat) = stack.pop() {
            let idx = grid.geom.unflat(flat);
            if is_target(&idx) {
                return Ok(true);
            }
            for off in &offs {
                for a in 0..d {
                    nb[a] = idx[a] + off[a];
                }
                if grid.geom.contains(&nb) && allowed(&nb) {
                    let nflat = grid.geom.flat(&nb);
                    if grid.open[nflat] && !visited[nflat] {
                        visited[nflat] = true;
                        stack.push(nflat);
                    }
                }
            }
        }
    }
    Ok(false)
}

/// Copy of the grid with all cells whose centers lie in
/// `y + [−l, l]^d` forced to `state`.
pub fn with_box_forced(grid: &OccupancyGrid, y: &[f64], l: f64, state: bool) -> OccupancyGrid {
    let eps = grid.geom.spacing;
    let mut open = grid.open.clone();
    grid.geom.visit(|idx, flat| {
        let inside = idx
            .iter()
            .zip(y)
            .all(|(i, c)| (*i as f64 * eps - c).abs() <= l + 1e-9);
        if inside {
            open[flat] = state;
        }
    });
    OccupancyGrid { geom: grid.geom.clone(), open }
}

/// Box pivotality: opening `y + [−l, l]^d` realizes the event and closing
/// it defeats the event.
pub fn coarse_pivotal(
    grid: &OccupancyGrid,
    event: &EventSpec,
    adj: Adjacency,
    y: &[f64],
    l: f64,
) -> Result<bool, PercError> {
    let with = occurs(&with_box_forced(grid, y, l, true), event, adj)?;
    if !with {
        return Ok(false);
    }
    let without = occurs(&with_box_forced(grid, y, l, false), event, adj)?;
    Ok(!without)
}

/// One-sided pivotality: opening the box realizes the event while the
/// unmodified configuration does not.
pub fn closed_pivotal(
    grid: &OccupancyGrid,
    event: &EventSpec,
    adj: Adjacency,
    y: &[f64],
    l: f64,
) -> Result<bool, PercError> {
    let with = occurs(&with_box_forced(grid, y, l, true), event, adj)?;
    if !with {
        return Ok(false);
    }
    Ok(!occurs(grid, event, adj)?)
}

/// Chebyshev distance (in real units) reached from the box `[−r, r]^d` by
/// open paths; `−∞` when the box holds no open cell.
pub fn one_arm_reach(grid: &OccupancyGrid, r: f64, adj: Adjacency) -> f64 {
    let eps = grid.geom.spacing;
    let seed_max = (r / eps + 1e-9).floor() as i64;
    let labels = label(grid, adj);
    let mut seeded = vec![false; labels.count];
    grid.geom.visit(|idx, flat| {
        if labels.comp[flat] != NO_COMP && chebyshev(idx) <= seed_max {
            seeded[labels.comp[flat] as usize] = true;
        }
    });
    let mut best = i64::MIN;
    grid.geom.visit(|idx, flat| {
        if labels.comp[flat] != NO_COMP && seeded[labels.comp[flat] as usize] {
            best = best.max(chebyshev(idx));
        }
    });
    if best == i64::MIN {
        f64::NEG_INFINITY
    } else {
        best as f64 * eps
    }
}
