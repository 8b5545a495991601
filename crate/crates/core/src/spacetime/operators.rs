use super::decomposition::{Decomposition, Subdomain};
use super::field::{LocalField, SpaceTimeField};
use super::grid::{SpaceTimeGrid, NVARS};
use crate::error::{DdvarError, Result};

/// Restriction flavour: `Plain` copies values for model and functional
/// evaluation, `Weighted` multiplies by the partition-of-unity weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestrictMode {
    Plain,
    Weighted,
}

/// Restriction operator RO onto the halo-inclusive region of `sub`.
pub fn restrict(field: &SpaceTimeField, sub: &Subdomain, mode: RestrictMode) -> LocalField {
    let mut out = LocalField::zeros(sub);
    for (lt, &t) in sub.levels.iter().enumerate() {
        for var in 0..NVARS {
            for (ly, &y) in sub.lats.iter().enumerate() {
                for (lx, &x) in sub.lons.iter().enumerate() {
                    let v = field.data[field.offset(t, var, y, x)];
                    let o = out.offset(lt, var, ly, lx);
                    out.data[o] = match mode {
                        RestrictMode::Plain => v,
                        RestrictMode::Weighted => v * sub.weight(lt, ly, lx),
                    };
                }
            }
        }
    }
    out
}

/// Extension operator EO: the local values on `sub`, zero elsewhere.
pub fn extend(local: &LocalField, sub: &Subdomain, grid: &SpaceTimeGrid) -> Result<SpaceTimeField> {
    if !local.matches(sub) {
        return Err(DdvarError::Dimension(format!(
            "local field does not match subdomain ({}, {}, {})",
            sub.j, sub.i1, sub.i2
        )));
    }
    let mut out = SpaceTimeField::zeros(grid);
    for (lt, &t) in sub.levels.iter().enumerate() {
        for var in 0..NVARS {
            for (ly, &y) in sub.lats.iter().enumerate() {
                for (lx, &x) in sub.lons.iter().enumerate() {
                    let o = out.offset(t, var, y, x);
                    out.data[o] = local.data[local.offset(lt, var, ly, lx)];
                }
            }
        }
    }
    Ok(out)
}

/// Sum of the extended, weight-restricted local fields.
///
/// Contributions to each point are added pairwise. Every point receives a
/// power-of-two number of contributions carrying equal power-of-two weights,
/// so consistent restrictions of one field reconstruct it bit for bit.
pub fn reconstruct(locals: &[LocalField], dec: &Decomposition) -> Result<SpaceTimeField> {
    if locals.len() != dec.subdomains.len() {
        return Err(DdvarError::Dimension(format!(
            "expected {} local fields, got {}",
            dec.subdomains.len(),
            locals.len()
        )));
    }
    const MAX_SHARE: usize = 8;
    let grid = &dec.grid;
    let n = grid.nt * grid.state_len();
    let mut parts = vec![[0.0f64; MAX_SHARE]; n];
    let mut count = vec![0u8; n];
    let mut out = SpaceTimeField::zeros(grid);
    for (local, sub) in locals.iter().zip(&dec.subdomains) {
        if !local.matches(sub) {
            return Err(DdvarError::Dimension(format!(
                "local field {} does not match its subdomain",
                sub.id
            )));
        }
        for (lt, &t) in sub.levels.iter().enumerate() {
            for var in 0..NVARS {
                for (ly, &y) in sub.lats.iter().enumerate() {
                    for (lx, &x) in sub.lons.iter().enumerate() {
                        let g = out.offset(t, var, y, x);
                        let c = count[g] as usize;
                        if c == MAX_SHARE {
                            return Err(DdvarError::Dimension(
                                "more than eight subdomains share a point".into(),
                            ));
                        }
                        parts[g][c] =
                            local.data[local.offset(lt, var, ly, lx)] * sub.weight(lt, ly, lx);
                        count[g] += 1;
                    }
                }
            }
        }
    }
    for (g, vals) in parts.iter_mut().enumerate() {
        let mut len = count[g] as usize;
        while len > 1 {
            let half = len / 2;
            for k in 0..half {
                vals[k] = vals[2 * k] + vals[2 * k + 1];
            }
            if len % 2 == 1 {
                vals[half] = vals[len - 1];
                len = half + 1;
            } else {
                len = half;
            }
        }
        out.data[g] = if count[g] == 0 { 0.0 } else { vals[0] };
    }
    Ok(out)
}

/// Intersection of two halo-inclusive regions as a product of sorted global
/// index lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OverlapRegion {
    pub levels: Vec<usize>,
    pub lons: Vec<usize>,
    pub lats: Vec<usize>,
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().copied().filter(|k| b.contains(k)).collect();
    v.sort_unstable();
    v
}

/// Shared points of the halo-inclusive regions of `a` and `b` (empty when
/// the subdomains are not adjacent).
pub fn overlap_region(a: &Subdomain, b: &Subdomain) -> OverlapRegion {
    let levels = intersect(&a.levels, &b.levels);
    let lons = intersect(&a.lons, &b.lons);
    let lats = intersect(&a.lats, &b.lats);
    if levels.is_empty() || lons.is_empty() || lats.is_empty() {
        return OverlapRegion::default();
    }
    OverlapRegion { levels, lons, lats }
}

impl OverlapRegion {
    pub fn is_empty(&self) -> bool {
        self.levels.is_empty() || self.lons.is_empty() || self.lats.is_empty()
    }

    /// Number of values (all variables) in the region.
    pub fn len(&self) -> usize {
        self.levels.len() * NVARS * self.lats.len() * self.lons.len()
    }

    /// Offsets into a local field of `sub` for every region value, in
    /// `[level][var][lat][lon]` order.
    pub fn local_offsets(&self, local: &LocalField) -> Result<Vec<usize>> {
        let pos = |list: &[usize], k: usize, what: &str| {
            list.iter().position(|&v| v == k).ok_or_else(|| {
                DdvarError::Dimension(format!("{what} index {k} is outside the local field"))
            })
        };
        let lts = self
            .levels
            .iter()
            .map(|&k| pos(&local.levels, k, "level"))
            .collect::<Result<Vec<_>>>()?;
        let lys = self
            .lats
            .iter()
            .map(|&k| pos(&local.lats, k, "latitude"))
            .collect::<Result<Vec<_>>>()?;
        let lxs = self
            .lons
            .iter()
            .map(|&k| pos(&local.lons, k, "longitude"))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(self.len());
        for &lt in &lts {
            for var in 0..NVARS {
                for &ly in &lys {
                    for &lx in &lxs {
                        out.push(local.offset(lt, var, ly, lx));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Plain restriction of a local field to the region.
    pub fn gather(&self, local: &LocalField) -> Result<Vec<f64>> {
        Ok(self
            .local_offsets(local)?
            .into_iter()
            .map(|o| local.data[o])
            .collect())
    }
}
