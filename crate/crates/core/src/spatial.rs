//! Uniform cell index for radius and nearest-neighbor queries.

/// Points bucketed into axis-aligned cubic cells.
#[derive(Clone, Debug)]
pub struct CellIndex {
    dim: usize,
    cell: f64,
    origin: Vec<f64>,
    shape: Vec<usize>,
    starts: Vec<usize>,
    items: Vec<usize>,
}

const MAX_CELLS_PER_POINT: usize = 8;

impl CellIndex {
    /// Builds an index over row-major `coords` with cells of (at least) `cell` width.
    pub fn new(dim: usize, coords: &[f64], cell: f64) -> Self {
        let n = coords.len() / dim.max(1);
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in coords.chunks_exact(dim) {
            for a in 0..dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if n == 0 {
            lo.fill(0.0);
            hi.fill(0.0);
        }
        let budget = MAX_CELLS_PER_POINT * n + 1024;
        let mut cell = if cell.is_finite() && cell > 0.0 {
            cell
        } else {
            1.0
        };
        let shape = loop {
            let shape: Vec<usize> = (0..dim)
                .map(|a| ((hi[a] - lo[a]) / cell).floor() as usize + 1)
                .collect();
            let total = shape
                .iter()
                .try_fold(1usize, |acc, &s| acc.checked_mul(s))
                .unwrap_or(usize::MAX);
            if total <= budget {
                break shape;
            }
            cell *= 2.0;
        };
        let ncells: usize = shape.iter().product();
        let mut index = Self {
            dim,
            cell,
            origin: lo,
            shape,
            starts: vec![0; ncells + 1],
            items: vec![0; n],
        };
        let keys: Vec<usize> = coords
            .chunks_exact(dim)
            .map(|p| index.linear_key(p))
            .collect();
        for &k in &keys {
            index.starts[k + 1] += 1;
        }
        for c in 0..ncells {
            index.starts[c + 1] += index.starts[c];
        }
        let mut fill = index.starts.clone();
        for (i, &k) in keys.iter().enumerate() {
            index.items[fill[k]] = i;
            fill[k] += 1;
        }
        index
    }

    pub fn cell_width(&self) -> f64 {
        self.cell
    }

    fn axis_cell(&self, a: usize, x: f64) -> isize {
        ((x - self.origin[a]) / self.cell).floor() as isize
    }

    fn linear_key(&self, p: &[f64]) -> usize {
        let mut key = 0usize;
        for a in 0..self.dim {
            let c = self.axis_cell(a, p[a]).clamp(0, self.shape[a] as isize - 1) as usize;
            key = key * self.shape[a] + c;
        }
        key
    }

    /// Calls `visit(i)` for every indexed point whose cell meets the cube of
    /// half-width `radius` around `center`. Callers filter by exact distance.
    pub fn for_each_candidate(&self, center: &[f64], radius: f64, mut visit: impl FnMut(usize)) {
        let mut lo = vec![0usize; self.dim];
        let mut hi = vec![0usize; self.dim];
        for a in 0..self.dim {
            let l = self.axis_cell(a, center[a] - radius);
            let h = self.axis_cell(a, center[a] + radius);
            let max = self.shape[a] as isize - 1;
            if h < 0 || l > max {
                return;
            }
            lo[a] = l.max(0) as usize;
            hi[a] = h.min(max) as usize;
        }
        let mut cur = lo.clone();
        loop {
            let mut key = 0usize;
            for a in 0..self.dim {
                key = key * self.shape[a] + cur[a];
            }
            for &i in &self.items[self.starts[key]..self.starts[key + 1]] {
                visit(i);
            }
            // odometer over the cell box, last axis fastest
            let mut a = self.dim;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                if cur[a] < hi[a] {
                    cur[a] += 1;
                    break;
                }
                cur[a] = lo[a];
            }
        }
    }

    /// Index and distance of the nearest point to `query`; ties go to the lowest index.
    pub fn nearest(&self, coords: &[f64], query: &[f64]) -> Option<(usize, f64)> {
        if self.items.is_empty() {
            return None;
        }
        let mut radius = self.cell;
        loop {
            let mut best: Option<(usize, f64)> = None;
            self.for_each_candidate(query, radius, |i| {
                let p = &coords[i * self.dim..(i + 1) * self.dim];
                let d2: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                let better = match best {
                    None => true,
                    Some((bi, bd)) => d2 < bd || (d2 == bd && i < bi),
                };
                if better {
                    best = Some((i, d2));
                }
            });
            if let Some((i, d2)) = best {
                if d2.sqrt() <= radius {
                    return Some((i, d2.sqrt()));
                }
            }
            radius *= 2.0;
        }
    }
}
