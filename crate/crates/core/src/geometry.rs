//! Poisson cellular layout, nearest-BS association and resource-block
//! assignment.
//!
//! Coordinates are meters. After generation the test BS sits at the origin.
//! Users of the test cell come first in `user_positions`; every other user is
//! an interferer occupying one RB of its own cell.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{names, SimRng, Streams};

pub type Point = [f64; 2];

const MAX_POISSON_RETRIES: usize = 100;
const FILL_BATCHES: usize = 2;
const NEIGHBOUR_RINGS: usize = 3;
const CELL_ANGLES: usize = 720;
const CELL_MARGIN: f64 = 1.25;
const MAX_REJECTIONS: usize = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry config: {0}")]
    InvalidConfig(String),
    #[error("Poisson draw produced zero base stations in {0} attempts")]
    NoBaseStations(usize),
    #[error("could not place a user inside the test cell after {0} rejections")]
    RejectionLimit(usize),
    #[error("topology invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Base stations per square meter.
    pub bs_density: f64,
    pub area_side: f64,
    pub n_users_per_test_cell: usize,
    pub n_rb: usize,
    /// Probability that an interfering cell's RB carries an active user.
    pub rb_activity: f64,
    pub seed: u64,
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidConfig(m.to_string()));
        if !(self.bs_density > 0.0 && self.bs_density.is_finite()) {
            return bad("bs_density must be positive");
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return bad("area_side must be positive");
        }
        if self.n_rb == 0 {
            return bad("n_rb must be at least 1");
        }
        if self.n_users_per_test_cell == 0 {
            return bad("n_users_per_test_cell must be at least 1");
        }
        if self.n_users_per_test_cell > self.n_rb {
            return bad("n_users_per_test_cell must not exceed n_rb");
        }
        if !(0.0..=1.0).contains(&self.rb_activity) {
            return bad("rb_activity must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub area_side: f64,
    /// Lower-left corner of the simulation square in the (shifted) frame.
    pub area_min: Point,
    pub bs_density: f64,
    pub n_rb: usize,
    pub test_bs: usize,
    pub bs_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    pub association: Vec<usize>,
    pub distances: Vec<f64>,
    pub rb_assignment: Vec<usize>,
}

fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Uniform bucket grid over base stations for exact nearest-neighbour queries.
/// Ties resolve to the lowest BS index.
pub struct BsIndex<'a> {
    points: &'a [Point],
    min: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> BsIndex<'a> {
    pub fn new(points: &'a [Point]) -> Self {
        assert!(!points.is_empty(), "index needs at least one point");
        let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let w = (hi[0] - lo[0]).max(1e-9);
        let h = (hi[1] - lo[1]).max(1e-9);
        let cell = (0.7 * ((w * h) / points.len() as f64).sqrt()).max(1e-9);
        let nx = ((w / cell).ceil() as usize).clamp(1, 4096);
        let ny = ((h / cell).ceil() as usize).clamp(1, 4096);
        let cell = (w / nx as f64).max(h / ny as f64);
        let mut buckets = vec![Vec::new(); nx * ny];
        let mut idx = Self {
            points,
            min: lo,
            cell,
            nx,
            ny,
            buckets: Vec::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let (bx, by) = idx.bucket_of(*p);
            buckets[by * nx + bx].push(i);
        }
        idx.buckets = buckets;
        idx
    }

    fn bucket_of(&self, p: Point) -> (usize, usize) {
        let fx = ((p[0] - self.min[0]) / self.cell).floor();
        let fy = ((p[1] - self.min[1]) / self.cell).floor();
        let bx = fx.clamp(0.0, (self.nx - 1) as f64) as usize;
        let by = fy.clamp(0.0, (self.ny - 1) as f64) as usize;
        (bx, by)
    }

    /// Distance from `p` to the nearest edge of the grid rectangle (0 inside).
    fn outside_margin(&self, p: Point) -> f64 {
        let max_x = self.min[0] + self.cell * self.nx as f64;
        let max_y = self.min[1] + self.cell * self.ny as f64;
        let dx = (self.min[0] - p[0]).max(p[0] - max_x).max(0.0);
        let dy = (self.min[1] - p[1]).max(p[1] - max_y).max(0.0);
        dx.max(dy)
    }

    pub fn nearest(&self, p: Point) -> usize {
        let (cx, cy) = self.bucket_of(p);
        let margin = self.outside_margin(p);
        let mut best: Option<(f64, usize)> = None;
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            let r = ring as isize;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs() != r && dy.abs() != r {
                        continue;
                    }
                    let bx = cx as isize + dx;
                    let by = cy as isize + dy;
                    if bx < 0 || by < 0 || bx >= self.nx as isize || by >= self.ny as isize {
                        continue;
                    }
                    for &i in &self.buckets[by as usize * self.nx + bx as usize] {
                        let d = dist2(p, self.points[i]);
                        match best {
                            Some((bd, bi)) if d > bd || (d == bd && i > bi) => {}
                            _ => best = Some((d, i)),
                        }
                    }
                }
            }
            // Every unvisited bucket lies at least `ring * cell` away along one
            // axis and at least `margin` away along the off-grid axis.
            if let Some((bd, _)) = best {
                let reach = (ring as f64 * self.cell).hypot(margin);
                if bd.sqrt() < reach {
                    break;
                }
            }
        }
        best.expect("non-empty index").1
    }

    /// Points stored in buckets within `rings` Chebyshev rings of `p`'s bucket.
    pub fn near(&self, p: Point, rings: usize) -> Vec<usize> {
        let (cx, cy) = self.bucket_of(p);
        let (x0, x1) = (cx.saturating_sub(rings), (cx + rings).min(self.nx - 1));
        let (y0, y1) = (cy.saturating_sub(rings), (cy + rings).min(self.ny - 1));
        let mut out = Vec::new();
        for by in y0..=y1 {
            for bx in x0..=x1 {
                out.extend_from_slice(&self.buckets[by * self.nx + bx]);
            }
        }
        out
    }
}

impl NetworkTopology {
    /// Builds a topology from explicit positions. Association and distances
    /// are computed here; RB indices are taken as given and validated.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        bs_positions: Vec<Point>,
        user_positions: Vec<Point>,
        rb_assignment: Vec<usize>,
        test_bs: usize,
        n_rb: usize,
        area_side: f64,
        area_min: Point,
        bs_density: f64,
    ) -> Result<Self, GeometryError> {
        if bs_positions.is_empty() || test_bs >= bs_positions.len() {
            return Err(GeometryError::Invariant("test_bs out of range".into()));
        }
        if rb_assignment.len() != user_positions.len() {
            return Err(GeometryError::Invariant(
                "rb_assignment length differs from user count".into(),
            ));
        }
        let index = BsIndex::new(&bs_positions);
        let association: Vec<usize> = user_positions.iter().map(|p| index.nearest(*p)).collect();
        let distances = user_positions
            .iter()
            .zip(&association)
            .map(|(p, &b)| dist2(*p, bs_positions[b]).sqrt())
            .collect();
        let topo = Self {
            area_side,
            area_min,
            bs_density,
            n_rb,
            test_bs,
            bs_positions,
            user_positions,
            association,
            distances,
            rb_assignment,
        };
        topo.check_rb_invariants()?;
        Ok(topo)
    }

    pub fn n_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_positions.len()
    }

    /// Users served by the test BS, in user-index order.
    pub fn test_cell_users(&self) -> Vec<usize> {
        (0..self.n_users())
            .filter(|&u| self.association[u] == self.test_bs)
            .collect()
    }

    pub fn users_per_cell(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_bs()];
        for &b in &self.association {
            counts[b] += 1;
        }
        counts
    }

    fn check_rb_invariants(&self) -> Result<(), GeometryError> {
        let mut seen = std::collections::HashSet::new();
        for (u, (&b, &rb)) in self.association.iter().zip(&self.rb_assignment).enumerate() {
            if rb >= self.n_rb {
                return Err(GeometryError::Invariant(format!(
                    "user {u} has RB {rb} outside [0, {})",
                    self.n_rb
                )));
            }
            if !seen.insert((b, rb)) {
                return Err(GeometryError::Invariant(format!(
                    "RB {rb} reused inside cell {b}"
                )));
            }
        }
        Ok(())
    }

    /// Re-checks every structural invariant, including nearest-BS association
    /// by brute force.
    pub fn validate(&self) -> Result<(), GeometryError> {
        self.check_rb_invariants()?;
        for (u, p) in self.user_positions.iter().enumerate() {
            let served = self.association[u];
            let ds = dist2(*p, self.bs_positions[served]);
            for (b, q) in self.bs_positions.iter().enumerate() {
                let d = dist2(*p, *q);
                if d < ds || (d == ds && b < served) {
                    return Err(GeometryError::Invariant(format!(
                        "user {u} served by {served} but BS {b} is nearer"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Distances to the test BS of every user on `rb` served by another BS.
pub fn interferer_distances(topology: &NetworkTopology, rb: usize) -> Vec<f64> {
    let origin = topology.bs_positions[topology.test_bs];
    (0..topology.n_users())
        .filter(|&u| topology.rb_assignment[u] == rb && topology.association[u] != topology.test_bs)
        .map(|u| dist2(topology.user_positions[u], origin).sqrt())
        .collect()
}

fn uniform_point(rng: &mut SimRng, min: Point, side: f64) -> Point {
    [
        min[0] + rng.random::<f64>() * side,
        min[1] + rng.random::<f64>() * side,
    ]
}

/// Upper bound on the distance from BS `target` to any point of its cell
/// clipped to the simulation square. Using a subset of competing BSs only
/// enlarges the region, so the bound stays valid for any `rivals`.
fn cell_radius(bs: &[Point], target: usize, rivals: &[usize], area_min: Point, side: f64) -> f64 {
    let o = bs[target];
    let lo = [area_min[0] - o[0], area_min[1] - o[1]];
    let hi = [lo[0] + side, lo[1] + side];
    let rel: Vec<Point> = rivals
        .iter()
        .filter(|&&i| i != target)
        .map(|&i| [bs[i][0] - o[0], bs[i][1] - o[1]])
        .collect();
    let mut radius: f64 = 0.0;
    for k in 0..CELL_ANGLES {
        let theta = std::f64::consts::TAU * k as f64 / CELL_ANGLES as f64;
        let u = [theta.cos(), theta.sin()];
        // exit through the square boundary
        let mut t = f64::INFINITY;
        for d in 0..2 {
            if u[d] > 1e-15 {
                t = t.min(hi[d] / u[d]);
            } else if u[d] < -1e-15 {
                t = t.min(lo[d] / u[d]);
            }
        }
        // exit through a bisector with another BS
        for b in &rel {
            let proj = b[0] * u[0] + b[1] * u[1];
            if proj > 0.0 {
                t = t.min((b[0] * b[0] + b[1] * b[1]) / (2.0 * proj));
            }
        }
        radius = radius.max(t);
    }
    radius * CELL_MARGIN
}

/// Draws a point uniformly from the cell of `target` by rejection from a
/// square that contains the cell.
fn sample_in_cell(
    rng: &mut SimRng,
    index: &BsIndex<'_>,
    target: usize,
    radius: f64,
    area_min: Point,
    side: f64,
) -> Result<Point, GeometryError> {
    let o = index.points[target];
    let lo = [
        (o[0] - radius).max(area_min[0]),
        (o[1] - radius).max(area_min[1]),
    ];
    let hi = [
        (o[0] + radius).min(area_min[0] + side),
        (o[1] + radius).min(area_min[1] + side),
    ];
    for _ in 0..MAX_REJECTIONS {
        let p = [
            lo[0] + rng.random::<f64>() * (hi[0] - lo[0]),
            lo[1] + rng.random::<f64>() * (hi[1] - lo[1]),
        ];
        if index.nearest(p) == target {
            return Ok(p);
        }
    }
    Err(GeometryError::RejectionLimit(MAX_REJECTIONS))
}

pub fn generate_topology(cfg: &GeometryConfig) -> Result<NetworkTopology, GeometryError> {
    cfg.validate()?;
    let mut rng = Streams::new(cfg.seed).rng(names::TOPOLOGY, &[]);
    let area = cfg.area_side * cfg.area_side;
    let poisson = Poisson::new(cfg.bs_density * area)
        .map_err(|e| GeometryError::InvalidConfig(format!("Poisson mean: {e}")))?;

    let mut n_bs = 0usize;
    for _ in 0..MAX_POISSON_RETRIES {
        n_bs = poisson.sample(&mut rng) as usize;
        if n_bs > 0 {
            break;
        }
    }
    if n_bs == 0 {
        return Err(GeometryError::NoBaseStations(MAX_POISSON_RETRIES));
    }

    let half = cfg.area_side / 2.0;
    let mut bs: Vec<Point> = (0..n_bs)
        .map(|_| uniform_point(&mut rng, [-half, -half], cfg.area_side))
        .collect();
    let test_bs = (0..n_bs)
        .min_by(|&a, &b| dist2(bs[a], [0.0; 2]).total_cmp(&dist2(bs[b], [0.0; 2])))
        .expect("n_bs > 0");
    let shift = bs[test_bs];
    for p in &mut bs {
        p[0] -= shift[0];
        p[1] -= shift[1];
    }
    let area_min = [-half - shift[0], -half - shift[1]];
    let index = BsIndex::new(&bs);

    let mut users = Vec::new();
    let mut rbs = Vec::new();

    // Test cell: rejection sampling from a square that contains the cell.
    let all: Vec<usize> = (0..n_bs).collect();
    let radius = cell_radius(&bs, test_bs, &all, area_min, cfg.area_side);
    while users.len() < cfg.n_users_per_test_cell {
        let p = sample_in_cell(&mut rng, &index, test_bs, radius, area_min, cfg.area_side)?;
        rbs.push(users.len());
        users.push(p);
    }

    // Other cells: fill RBs in order from a stream of uniform points, which
    // leaves each accepted point uniform within its cell. Cells still short
    // after the stream are topped up by per-cell rejection sampling.
    if n_bs > 1 {
        let mut fill = vec![0usize; n_bs];
        fill[test_bs] = cfg.n_rb;
        let mut open = n_bs - 1;
        'batches: for _ in 0..FILL_BATCHES {
            for _ in 0..n_bs * cfg.n_rb {
                let p = uniform_point(&mut rng, area_min, cfg.area_side);
                let b = index.nearest(p);
                if fill[b] < cfg.n_rb {
                    rbs.push(fill[b]);
                    users.push(p);
                    fill[b] += 1;
                    if fill[b] == cfg.n_rb {
                        open -= 1;
                        if open == 0 {
                            break 'batches;
                        }
                    }
                }
            }
        }
        for b in 0..n_bs {
            if fill[b] == cfg.n_rb {
                continue;
            }
            let rivals = index.near(bs[b], NEIGHBOUR_RINGS);
            let radius = cell_radius(&bs, b, &rivals, area_min, cfg.area_side);
            while fill[b] < cfg.n_rb {
                let p = sample_in_cell(&mut rng, &index, b, radius, area_min, cfg.area_side)?;
                rbs.push(fill[b]);
                users.push(p);
                fill[b] += 1;
            }
        }
    }

    if cfg.rb_activity < 1.0 {
        let n_test = cfg.n_users_per_test_cell;
        let mut kept_users = users[..n_test].to_vec();
        let mut kept_rbs = rbs[..n_test].to_vec();
        for (p, rb) in users[n_test..].iter().zip(&rbs[n_test..]) {
            if rng.random::<f64>() < cfg.rb_activity {
                kept_users.push(*p);
                kept_rbs.push(*rb);
            }
        }
        users = kept_users;
        rbs = kept_rbs;
    }

    NetworkTopology::from_parts(
        bs,
        users,
        rbs,
        test_bs,
        cfg.n_rb,
        cfg.area_side,
        area_min,
        cfg.bs_density,
    )
}
