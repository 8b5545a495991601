use serde::{Deserialize, Serialize};

use super::grid::SpaceTimeGrid;
use crate::error::{DdvarError, Result};

/// Half-open integer range `[start, end)`. Longitude ranges may extend
/// past the grid edges and are wrapped when materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: isize,
    pub end: isize,
}

impl IndexRange {
    pub fn new(start: isize, end: isize) -> Self {
        IndexRange { start, end }
    }

    pub fn len(&self) -> usize {
        (self.end - self.start).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, k: isize) -> bool {
        k >= self.start && k < self.end
    }

    /// Inclusive `[first, last]` pair used in serialized geometry.
    pub fn inclusive(&self) -> [isize; 2] {
        [self.start, self.end - 1]
    }
}

/// Decomposition parameters as they appear in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecompositionSpec {
    pub q: usize,
    pub p1: usize,
    pub p2: usize,
    pub o_x: usize,
    pub o_y: usize,
    pub o_t: usize,
}

impl DecompositionSpec {
    /// The undecomposed domain.
    pub fn single() -> Self {
        DecompositionSpec {
            q: 1,
            p1: 1,
            p2: 1,
            o_x: 0,
            o_y: 0,
            o_t: 0,
        }
    }

    pub fn subdomain_count(&self) -> usize {
        self.q * self.p1 * self.p2
    }
}

impl Default for DecompositionSpec {
    fn default() -> Self {
        Self::single()
    }
}

/// One space-time subdomain `Δ_j × Ω_i`.
///
/// `j` is the temporal index and `(i1, i2)` the position in the `p1 × p2`
/// spatial layout, all zero-based. Halo-inclusive ranges are clamped in time
/// and latitude and periodic in longitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Subdomain {
    pub j: usize,
    pub i1: usize,
    pub i2: usize,
    /// Position in `Decomposition::subdomains`.
    pub id: usize,
    pub time_range: IndexRange,
    pub lon_range: IndexRange,
    pub lat_range: IndexRange,
    pub owned_time_range: IndexRange,
    pub owned_lon_range: IndexRange,
    pub owned_lat_range: IndexRange,
    /// Materialized halo-inclusive global indices.
    pub levels: Vec<usize>,
    pub lons: Vec<usize>,
    pub lats: Vec<usize>,
    /// Per-direction partition-of-unity factors along `levels`, `lons`,
    /// `lats`; the weight of a point is their product.
    pub w_t: Vec<f64>,
    pub w_x: Vec<f64>,
    pub w_y: Vec<f64>,
}

impl Subdomain {
    /// Row-major spatial index over the `p1 × p2` layout.
    pub fn spatial_index(&self, p2: usize) -> usize {
        self.i1 * p2 + self.i2
    }

    pub fn first_level(&self) -> usize {
        self.levels[0]
    }

    pub fn last_level(&self) -> usize {
        *self
            .levels
            .last()
            .expect("subdomain has at least one level")
    }

    /// Number of values of a local field over this subdomain.
    pub fn local_len(&self) -> usize {
        self.levels.len() * super::NVARS * self.lons.len() * self.lats.len()
    }

    /// Number of control values (one time level).
    pub fn control_len(&self) -> usize {
        super::NVARS * self.lons.len() * self.lats.len()
    }

    pub fn weight(&self, lt: usize, ly: usize, lx: usize) -> f64 {
        self.w_t[lt] * self.w_y[ly] * self.w_x[lx]
    }
}

/// Uniform overlapping decomposition of the space-time grid into
/// `q · p1 · p2` subdomains, ordered by `(j, i1, i2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub grid: SpaceTimeGrid,
    pub q: usize,
    pub p1: usize,
    pub p2: usize,
    /// Effective halo widths (zero along directions that are not split).
    pub o_x: usize,
    pub o_y: usize,
    pub o_t: usize,
    pub subdomains: Vec<Subdomain>,
}

fn check_split(key: &str, n: usize, parts: usize, halo: usize, what: &str) -> Result<usize> {
    if parts == 0 {
        return Err(DdvarError::config(
            key,
            "subdomain count must be at least 1",
        ));
    }
    if !n.is_multiple_of(parts) {
        return Err(DdvarError::config(
            key,
            format!("{parts} does not divide the {what} size {n} (uniform decomposition only)"),
        ));
    }
    if parts == 1 {
        return Ok(0);
    }
    let core = n / parts;
    if 2 * halo > core {
        return Err(DdvarError::config(
            key,
            format!(
                "{what} halo {halo} is too wide: twice the halo must not exceed the core width {core}"
            ),
        ));
    }
    if halo == 0 {
        return Err(DdvarError::config(
            key,
            format!("{what} halo must be at least 1 when the {what} direction is split"),
        ));
    }
    Ok(halo)
}

/// Build the uniform overlapping decomposition.
///
/// Halo widths along a direction that is not split are ignored (set to 0).
pub fn build_decomposition(
    grid: &SpaceTimeGrid,
    spec: &DecompositionSpec,
) -> Result<Decomposition> {
    grid.validate()?;
    let o_t = check_split("decomposition.o_t", grid.nt, spec.q, spec.o_t, "time")?;
    let o_x = check_split(
        "decomposition.o_x",
        grid.nlon,
        spec.p1,
        spec.o_x,
        "longitude",
    )?;
    let o_y = check_split(
        "decomposition.o_y",
        grid.nlat,
        spec.p2,
        spec.o_y,
        "latitude",
    )?;
    if spec.q == 0 || spec.p1 == 0 || spec.p2 == 0 {
        unreachable!("checked above");
    }
    let dt_core = (grid.nt / spec.q) as isize;
    let dx_core = (grid.nlon / spec.p1) as isize;
    let dy_core = (grid.nlat / spec.p2) as isize;
    let nt = grid.nt as isize;
    let nlat = grid.nlat as isize;

    let t_ranges: Vec<(IndexRange, IndexRange)> = (0..spec.q as isize)
        .map(|j| {
            let owned = IndexRange::new(j * dt_core, (j + 1) * dt_core);
            let halo = IndexRange::new(
                (owned.start - o_t as isize).max(0),
                (owned.end + o_t as isize).min(nt),
            );
            (owned, halo)
        })
        .collect();
    let x_ranges: Vec<(IndexRange, IndexRange)> = (0..spec.p1 as isize)
        .map(|i| {
            let owned = IndexRange::new(i * dx_core, (i + 1) * dx_core);
            let halo = IndexRange::new(owned.start - o_x as isize, owned.end + o_x as isize);
            (owned, halo)
        })
        .collect();
    let y_ranges: Vec<(IndexRange, IndexRange)> = (0..spec.p2 as isize)
        .map(|i| {
            let owned = IndexRange::new(i * dy_core, (i + 1) * dy_core);
            let halo = IndexRange::new(
                (owned.start - o_y as isize).max(0),
                (owned.end + o_y as isize).min(nlat),
            );
            (owned, halo)
        })
        .collect();

    let cover = |n: usize, ranges: &[(IndexRange, IndexRange)], periodic: bool| -> Vec<u32> {
        let mut c = vec![0u32; n];
        for (_, h) in ranges {
            for k in h.start..h.end {
                let idx = if periodic {
                    k.rem_euclid(n as isize) as usize
                } else {
                    k as usize
                };
                c[idx] += 1;
            }
        }
        c
    };
    let c_t = cover(grid.nt, &t_ranges, false);
    let c_x = cover(grid.nlon, &x_ranges, true);
    let c_y = cover(grid.nlat, &y_ranges, false);

    let mut subdomains = Vec::with_capacity(spec.subdomain_count());
    for (j, (ot, ht)) in t_ranges.iter().enumerate() {
        for (i1, (ox, hx)) in x_ranges.iter().enumerate() {
            for (i2, (oy, hy)) in y_ranges.iter().enumerate() {
                let levels: Vec<usize> = (ht.start..ht.end).map(|k| k as usize).collect();
                let lons: Vec<usize> = (hx.start..hx.end).map(|k| grid.wrap_lon(k)).collect();
                let lats: Vec<usize> = (hy.start..hy.end).map(|k| k as usize).collect();
                let w_t = levels.iter().map(|&k| 1.0 / c_t[k] as f64).collect();
                let w_x = lons.iter().map(|&k| 1.0 / c_x[k] as f64).collect();
                let w_y = lats.iter().map(|&k| 1.0 / c_y[k] as f64).collect();
                subdomains.push(Subdomain {
                    j,
                    i1,
                    i2,
                    id: subdomains.len(),
                    time_range: *ht,
                    lon_range: *hx,
                    lat_range: *hy,
                    owned_time_range: *ot,
                    owned_lon_range: *ox,
                    owned_lat_range: *oy,
                    levels,
                    lons,
                    lats,
                    w_t,
                    w_x,
                    w_y,
                });
            }
        }
    }

    Ok(Decomposition {
        grid: *grid,
        q: spec.q,
        p1: spec.p1,
        p2: spec.p2,
        o_x,
        o_y,
        o_t,
        subdomains,
    })
}

#[derive(Serialize)]
struct SubdomainDoc {
    j: usize,
    i: usize,
    i1: usize,
    i2: usize,
    time_range: [isize; 2],
    lon_range: [isize; 2],
    lat_range: [isize; 2],
    owned_time_range: [isize; 2],
    owned_lon_range: [isize; 2],
    owned_lat_range: [isize; 2],
}

#[derive(Serialize)]
struct GeometryDoc {
    q: usize,
    p1: usize,
    p2: usize,
    o_x: usize,
    o_y: usize,
    o_t: usize,
    subdomains: Vec<SubdomainDoc>,
}

impl Decomposition {
    pub fn p(&self) -> usize {
        self.p1 * self.p2
    }

    pub fn len(&self) -> usize {
        self.subdomains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subdomains.is_empty()
    }

    pub fn spec(&self) -> DecompositionSpec {
        DecompositionSpec {
            q: self.q,
            p1: self.p1,
            p2: self.p2,
            o_x: self.o_x,
            o_y: self.o_y,
            o_t: self.o_t,
        }
    }

    /// Subdomain at temporal index `j` and spatial position `(i1, i2)`.
    pub fn get(&self, j: usize, i1: usize, i2: usize) -> &Subdomain {
        &self.subdomains[(j * self.p1 + i1) * self.p2 + i2]
    }

    /// Ids of all other subdomains whose halo-inclusive region intersects `id`'s.
    pub fn neighbors(&self, id: usize) -> Vec<usize> {
        let a = &self.subdomains[id];
        self.subdomains
            .iter()
            .filter(|b| b.id != id && !super::overlap_region(a, b).is_empty())
            .map(|b| b.id)
            .collect()
    }

    /// Geometry document: parameters plus inclusive index ranges per
    /// subdomain. Indices `j` and `i` are 1-based; longitude ranges are
    /// unwrapped and may extend past the grid edges.
    pub fn geometry_json(&self) -> serde_json::Value {
        let doc = GeometryDoc {
            q: self.q,
            p1: self.p1,
            p2: self.p2,
            o_x: self.o_x,
            o_y: self.o_y,
            o_t: self.o_t,
            subdomains: self
                .subdomains
                .iter()
                .map(|s| SubdomainDoc {
                    j: s.j + 1,
                    i: s.spatial_index(self.p2) + 1,
                    i1: s.i1 + 1,
                    i2: s.i2 + 1,
                    time_range: s.time_range.inclusive(),
                    lon_range: s.lon_range.inclusive(),
                    lat_range: s.lat_range.inclusive(),
                    owned_time_range: s.owned_time_range.inclusive(),
                    owned_lon_range: s.owned_lon_range.inclusive(),
                    owned_lat_range: s.owned_lat_range.inclusive(),
                })
                .collect(),
        };
        serde_json::to_value(doc).expect("geometry document serializes")
    }
}
