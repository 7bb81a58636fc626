//! Buildings, small cells, users and the SBS communication graph.
//!
//! Every building is a 120 m × 120 m single floor: two rows of five 24 m rooms,
//! an open 24 m corridor across the middle, then two more rows of rooms.
//! Positions of cells and users are building-local (origin at the building's
//! lower-left corner); `Building::origin` only places buildings for export.

use std::collections::VecDeque;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{LayoutKind, ScenarioConfig};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::traffic::{assign_mix, TrafficClass, TrafficMix};

pub const BUILDING_SIZE_M: f64 = 120.0;
pub const ROOM_SIZE_M: f64 = 24.0;
pub const ROOM_COLUMNS: usize = 5;
/// Lower and upper edge of the corridor (y coordinates).
pub const CORRIDOR_Y: (f64, f64) = (48.0, 72.0);
/// Spacing between building origins in the exported layout.
const BUILDING_PITCH_M: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn center(&self) -> Point {
        Point::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }
}

/// An axis-aligned interior wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Wall {
    /// `x = at` for `y` in `span`.
    Vertical { at: f64, span: (f64, f64) },
    /// `y = at` for `x` in `span`.
    Horizontal { at: f64, span: (f64, f64) },
}

impl Wall {
    /// Whether the segment `a → b` crosses this wall. A point lying exactly on
    /// the wall line counts as being on its high side.
    fn crossed_by(&self, a: &Point, b: &Point) -> bool {
        let (at, span, pa, pb, qa, qb) = match *self {
            Wall::Vertical { at, span } => (at, span, a.x, b.x, a.y, b.y),
            Wall::Horizontal { at, span } => (at, span, a.y, b.y, a.x, b.x),
        };
        if (pa >= at) == (pb >= at) {
            return false;
        }
        let t = (at - pa) / (pb - pa);
        let q = qa + t * (qb - qa);
        q >= span.0 && q <= span.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Room(usize),
    Corridor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub id: usize,
    pub origin: Point,
    pub size_m: f64,
    pub wall_attenuation_db: f64,
    pub rooms: Vec<Rect>,
    pub corridor: Rect,
    pub walls: Vec<Wall>,
}

impl Building {
    pub fn standard(id: usize, origin: Point, wall_attenuation_db: f64) -> Self {
        let row_bottoms = [0.0, ROOM_SIZE_M, CORRIDOR_Y.1, CORRIDOR_Y.1 + ROOM_SIZE_M];
        let mut rooms = Vec::with_capacity(4 * ROOM_COLUMNS);
        for &y in &row_bottoms {
            for c in 0..ROOM_COLUMNS {
                let x = c as f64 * ROOM_SIZE_M;
                rooms.push(Rect {
                    min: Point::new(x, y),
                    max: Point::new(x + ROOM_SIZE_M, y + ROOM_SIZE_M),
                });
            }
        }
        let corridor = Rect {
            min: Point::new(0.0, CORRIDOR_Y.0),
            max: Point::new(BUILDING_SIZE_M, CORRIDOR_Y.1),
        };
        let mut walls = Vec::new();
        for c in 1..ROOM_COLUMNS {
            let x = c as f64 * ROOM_SIZE_M;
            walls.push(Wall::Vertical { at: x, span: (0.0, CORRIDOR_Y.0) });
            walls.push(Wall::Vertical { at: x, span: (CORRIDOR_Y.1, BUILDING_SIZE_M) });
        }
        for y in [ROOM_SIZE_M, CORRIDOR_Y.0, CORRIDOR_Y.1, CORRIDOR_Y.1 + ROOM_SIZE_M] {
            walls.push(Wall::Horizontal { at: y, span: (0.0, BUILDING_SIZE_M) });
        }
        Building { id, origin, size_m: BUILDING_SIZE_M, wall_attenuation_db, rooms, corridor, walls }
    }

    pub fn footprint(&self) -> Rect {
        Rect { min: Point::new(0.0, 0.0), max: Point::new(self.size_m, self.size_m) }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.footprint().contains(p)
    }

    pub fn center(&self) -> Point {
        self.footprint().center()
    }

    /// Region containing `p`; `None` outside the footprint.
    pub fn region(&self, p: &Point) -> Option<Region> {
        if !self.contains(p) {
            return None;
        }
        if p.y > self.corridor.min.y && p.y < self.corridor.max.y {
            return Some(Region::Corridor);
        }
        self.rooms.iter().position(|r| r.contains(p)).map(Region::Room)
    }

    pub fn room_centers(&self) -> impl Iterator<Item = Point> + '_ {
        self.rooms.iter().map(Rect::center)
    }
}

/// Number of interior walls crossed by the straight path `a → b`.
pub fn count_walls(a: &Point, b: &Point, building: &Building) -> usize {
    building.walls.iter().filter(|w| w.crossed_by(a, b)).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operator {
    pub id: usize,
    pub sharing_factor: f64,
    /// Global PRB indices owned by this operator.
    pub band: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallCell {
    pub id: usize,
    pub operator_id: usize,
    pub building: usize,
    pub position: Point,
    pub tx_power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTerminal {
    pub id: usize,
    pub serving_cell_id: usize,
    pub building: usize,
    pub position: Point,
    pub traffic_class: TrafficClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub layout: LayoutKind,
    pub prbs_per_operator: usize,
    pub connectivity_threshold_m: f64,
    pub operators: Vec<Operator>,
    pub buildings: Vec<Building>,
    pub cells: Vec<SmallCell>,
    pub users: Vec<UserTerminal>,
}

impl Scenario {
    /// Builds the layout for one drop. Drop 0 with the config seed is what
    /// `build_fixed_layout`/`build_random_layout` produce for that seed.
    pub fn generate(cfg: &ScenarioConfig, drop: u64) -> Result<Self> {
        let mut rng = rng::stream(cfg.seed, Stream::Layout, &[drop]);
        match cfg.layout {
            LayoutKind::Fixed => build_fixed_layout(cfg, &mut rng),
            LayoutKind::Random => build_random_layout(cfg, &mut rng),
        }
    }

    pub fn total_prbs(&self) -> usize {
        self.operators.len() * self.prbs_per_operator
    }

    pub fn cells_in(&self, building: usize) -> Vec<&SmallCell> {
        self.cells.iter().filter(|c| c.building == building).collect()
    }

    pub fn users_in(&self, building: usize) -> Vec<&UserTerminal> {
        self.users.iter().filter(|u| u.building == building).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn operators(cfg: &ScenarioConfig) -> Vec<Operator> {
    let q = cfg.prbs_per_operator;
    cfg.resolved_sharing_factors()
        .into_iter()
        .enumerate()
        .map(|(id, s)| Operator { id, sharing_factor: s, band: id * q..(id + 1) * q })
        .collect()
}

fn buildings(cfg: &ScenarioConfig) -> Vec<Building> {
    let per_row = (cfg.buildings as f64).sqrt().ceil() as usize;
    (0..cfg.buildings)
        .map(|b| {
            let origin = Point::new((b % per_row) as f64 * BUILDING_PITCH_M, (b / per_row) as f64 * BUILDING_PITCH_M);
            Building::standard(b, origin, cfg.channel.wall_loss_db)
        })
        .collect()
}

fn user_count<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> usize {
    let [lo, hi] = cfg.users_per_sbs;
    rng.random_range(lo..=hi)
}

fn finish<R: Rng + ?Sized>(cfg: &ScenarioConfig, mut scenario: Scenario, rng: &mut R) -> Result<Scenario> {
    let mix = TrafficMix::from_config(&cfg.traffic)?;
    let classes = assign_mix(scenario.users.len(), &mix, rng);
    for (u, c) in scenario.users.iter_mut().zip(classes) {
        u.traffic_class = c;
    }
    Ok(scenario)
}

/// All operators colocated at every building centre, users spread uniformly
/// over the floor.
pub fn build_fixed_layout<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Scenario> {
    cfg.validate()?;
    let buildings = buildings(cfg);
    let mut cells = Vec::new();
    let mut users = Vec::new();
    for b in &buildings {
        for op in 0..cfg.operators {
            let cell_id = cells.len();
            cells.push(SmallCell {
                id: cell_id,
                operator_id: op,
                building: b.id,
                position: b.center(),
                tx_power_dbm: cfg.tx_power_dbm,
            });
            for _ in 0..user_count(cfg, rng) {
                let position = Point::new(rng.random_range(0.0..b.size_m), rng.random_range(0.0..b.size_m));
                users.push(UserTerminal {
                    id: users.len(),
                    serving_cell_id: cell_id,
                    building: b.id,
                    position,
                    traffic_class: TrafficClass::FullBuffer,
                });
            }
        }
    }
    let scenario = Scenario {
        layout: LayoutKind::Fixed,
        prbs_per_operator: cfg.prbs_per_operator,
        connectivity_threshold_m: cfg.connectivity_threshold(),
        operators: operators(cfg),
        buildings,
        cells,
        users,
    };
    finish(cfg, scenario, rng)
}

/// Each operator independently deploys an SBS at each room centre with the
/// configured probability; users fall uniformly inside the hotspot disc.
pub fn build_random_layout<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Scenario> {
    cfg.validate()?;
    let p = cfg.deployment_probability;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config("deployment_probability must be in [0, 1]"));
    }
    let buildings = buildings(cfg);
    let radius = cfg.hotspot_radius_m;
    let mut cells = Vec::new();
    let mut users = Vec::new();
    for b in &buildings {
        for site in b.room_centers() {
            for op in 0..cfg.operators {
                if rng.random::<f64>() >= p {
                    continue;
                }
                let cell_id = cells.len();
                cells.push(SmallCell {
                    id: cell_id,
                    operator_id: op,
                    building: b.id,
                    position: site,
                    tx_power_dbm: cfg.tx_power_dbm,
                });
                for _ in 0..user_count(cfg, rng) {
                    let position = loop {
                        let r = radius * rng.random::<f64>().sqrt();
                        let phi = rng.random_range(0.0..std::f64::consts::TAU);
                        let cand = Point::new(site.x + r * phi.cos(), site.y + r * phi.sin());
                        if b.contains(&cand) && cand.distance(&site) <= radius {
                            break cand;
                        }
                    };
                    users.push(UserTerminal {
                        id: users.len(),
                        serving_cell_id: cell_id,
                        building: b.id,
                        position,
                        traffic_class: TrafficClass::FullBuffer,
                    });
                }
            }
        }
    }
    let scenario = Scenario {
        layout: LayoutKind::Random,
        prbs_per_operator: cfg.prbs_per_operator,
        connectivity_threshold_m: cfg.connectivity_threshold(),
        operators: operators(cfg),
        buildings,
        cells,
        users,
    };
    finish(cfg, scenario, rng)
}

/// Symmetric 0/1 connectivity matrix over the SBSs of one building.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyMatrix {
    n: usize,
    cells: Vec<bool>,
}

impl AdjacencyMatrix {
    pub fn empty(n: usize) -> Self {
        AdjacencyMatrix { n, cells: vec![false; n * n] }
    }

    pub fn complete(n: usize) -> Self {
        let mut a = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    a.cells[i * n + j] = true;
                }
            }
        }
        a
    }

    /// Builds the matrix from an undirected edge list; self-loops are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut a = Self::empty(n);
        for &(i, j) in edges {
            a.set(i, j, true);
        }
        a
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, connected: bool) {
        if i != j {
            self.cells[i * self.n + j] = connected;
            self.cells[j * self.n + i] = connected;
        }
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.cells[i * self.n..(i + 1) * self.n]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().filter(|(_, c)| **c).map(|(j, _)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| !self.get(i, i) && (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// `A[i][j] = 1` iff `i != j` and the two SBSs are within `threshold_m`.
pub fn compute_adjacency(cells: &[&SmallCell], threshold_m: f64) -> AdjacencyMatrix {
    let n = cells.len();
    let mut a = AdjacencyMatrix::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if cells[i].position.distance(&cells[j].position) <= threshold_m {
                a.set(i, j, true);
            }
        }
    }
    a
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    /// Ascending vertex indices into the adjacency matrix.
    pub vertices: Vec<usize>,
    /// Undirected edges with `i < j`.
    pub edges: Vec<(usize, usize)>,
}

/// Maximal connected vertex sets, ordered by their lowest vertex.
pub fn connected_components(adjacency: &AdjacencyMatrix) -> Vec<Graph> {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut graphs = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut vertices = Vec::new();
        while let Some(v) = queue.pop_front() {
            vertices.push(v);
            for w in adjacency.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        vertices.sort_unstable();
        let edges = vertices
            .iter()
            .flat_map(|&i| adjacency.neighbors(i).filter(move |&j| j > i).map(move |j| (i, j)))
            .collect();
        graphs.push(Graph { vertices, edges });
    }
    graphs
}
