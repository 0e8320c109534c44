//! Uniform-cell decomposition: hashing particles to cells, ordering them by
//! cell with a bitonic network, and per-cell ranges into the sorted order.

use arrayvec::ArrayVec;
use rayon::prelude::*;

use crate::contacts::ContactTable;
use crate::physics::Vec3;
use crate::pipeline::ParticleSet;

/// Slack applied to the default cell size `2 r_max`.
pub const CELL_SIZE_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("cell size must be positive and finite, got {0}")]
    CellSize(f64),
    #[error("domain is degenerate on axis {0}")]
    Domain(usize),
    #[error("grid has too many cells for 32-bit cell keys")]
    TooManyCells,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformGrid {
    origin: Vec3,
    cell_size: f64,
    dims: [usize; 3],
}

impl UniformGrid {
    /// Covers the box `[min, max]` with cubic cells of edge `cell_size`.
    pub fn new(min: Vec3, max: Vec3, cell_size: f64) -> Result<Self, GridError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(GridError::CellSize(cell_size));
        }
        let mut dims = [1usize; 3];
        for axis in 0..3 {
            let extent = max[axis] - min[axis];
            if !(extent > 0.0 && extent.is_finite()) {
                return Err(GridError::Domain(axis));
            }
            dims[axis] = ((extent / cell_size).ceil() as usize).max(1);
        }
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        match count {
            Some(c) if c < u32::MAX as usize => Ok(UniformGrid {
                origin: min,
                cell_size,
                dims,
            }),
            _ => Err(GridError::TooManyCells),
        }
    }

    pub fn with_dims(origin: Vec3, cell_size: f64, dims: [usize; 3]) -> Self {
        assert!(dims.iter().all(|&d| d >= 1));
        UniformGrid {
            origin,
            cell_size,
            dims,
        }
    }

    /// Smallest cell edge for which the 27-cell neighborhood still finds
    /// every contact.
    pub fn default_cell_size(max_radius: f64) -> f64 {
        2.0 * max_radius * (1.0 + CELL_SIZE_SLACK)
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// True when a 27-cell search cannot miss a contact between spheres of
    /// radius up to `max_radius`.
    pub fn covers_radius(&self, max_radius: f64) -> bool {
        self.cell_size >= 2.0 * max_radius
    }

    /// Per-axis cell coordinates and whether any axis had to be clamped.
    pub fn cell_coords(&self, position: &Vec3) -> ([usize; 3], bool) {
        let mut coords = [0usize; 3];
        let mut clamped = false;
        for axis in 0..3 {
            let c = ((position[axis] - self.origin[axis]) / self.cell_size).floor();
            let hi = (self.dims[axis] - 1) as f64;
            // NaN lands in cell 0 and counts as clamped
            let inside = c >= 0.0 && c <= hi;
            clamped |= !inside;
            coords[axis] = if inside {
                c as usize
            } else if c > hi {
                hi as usize
            } else {
                0
            };
        }
        (coords, clamped)
    }

    pub fn linear_index(&self, [cx, cy, cz]: [usize; 3]) -> usize {
        cx + cy * self.dims[0] + cz * self.dims[0] * self.dims[1]
    }

    pub fn coords_of(&self, cell: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [cell % nx, (cell / nx) % ny, cell / (nx * ny)]
    }

    /// Linear cell index of `position` plus the clamp flag.
    pub fn calc_hash(&self, position: &Vec3) -> (u32, bool) {
        let (coords, clamped) = self.cell_coords(position);
        (self.linear_index(coords) as u32, clamped)
    }

    /// The 3×3×3 block around `cell`, clipped at the domain boundary, in
    /// z-major then y then x order (ascending linear index).
    pub fn neighbor_cells(&self, cell: usize) -> ArrayVec<u32, 27> {
        let [cx, cy, cz] = self.coords_of(cell);
        let range = |c: usize, n: usize| c.saturating_sub(1)..=(c + 1).min(n - 1);
        let mut out = ArrayVec::new();
        for z in range(cz, self.dims[2]) {
            for y in range(cy, self.dims[1]) {
                for x in range(cx, self.dims[0]) {
                    out.push(self.linear_index([x, y, z]) as u32);
                }
            }
        }
        out
    }
}

/// Hashes every position into `keys`; returns the number of clamped particles.
pub fn calc_hashes(grid: &UniformGrid, positions: &[Vec3], keys: &mut Vec<u32>) -> usize {
    keys.resize(positions.len(), 0);
    keys.par_iter_mut()
        .zip(positions.par_iter())
        .map(|(key, p)| {
            let (k, clamped) = grid.calc_hash(p);
            *key = k;
            clamped as usize
        })
        .sum()
}

/// Shape of one bitonic network execution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SortStats {
    pub padded_len: usize,
    pub stages: usize,
    pub passes: usize,
    pub compare_exchanges: usize,
}

const PARALLEL_PASS_LEN: usize = 1 << 14;

/// Sorts `(key, value)` pairs by key with a full bitonic compare-exchange
/// network. The input is padded to a power of two with a sentinel larger
/// than every key; padding is stripped before returning. Equal keys are
/// never exchanged, so ties resolve deterministically by network position.
pub fn bitonic_sort(keys: &[u32], values: &[u32]) -> (Vec<u32>, Vec<u32>, SortStats) {
    assert_eq!(keys.len(), values.len(), "keys and values differ in length");
    let n = keys.len();
    if n == 0 {
        return (Vec::new(), Vec::new(), SortStats::default());
    }
    let padded = n.next_power_of_two();
    let mut k64: Vec<u64> = keys.iter().map(|&k| k as u64).collect();
    k64.resize(padded, u64::MAX);
    let mut vals = values.to_vec();
    vals.resize(padded, u32::MAX);

    let mut stats = SortStats {
        padded_len: padded,
        ..SortStats::default()
    };
    let mut block = 2;
    while block <= padded {
        stats.stages += 1;
        let mut stride = block / 2;
        while stride > 0 {
            bitonic_pass(&mut k64, &mut vals, block, stride);
            stats.passes += 1;
            stats.compare_exchanges += padded / 2;
            stride /= 2;
        }
        block *= 2;
    }

    k64.truncate(n);
    vals.truncate(n);
    (k64.into_iter().map(|k| k as u32).collect(), vals, stats)
}

/// One pass of the network: element `i` is compared with `i ^ stride`,
/// ascending where bit `block` of `i` is clear. The pairs of a pass live in
/// disjoint aligned chunks of `2 * stride`, which run independently.
fn bitonic_pass(keys: &mut [u64], vals: &mut [u32], block: usize, stride: usize) {
    let chunk = 2 * stride;
    let run = |(c, (k, v)): (usize, (&mut [u64], &mut [u32]))| {
        let ascending = (c * chunk) & block == 0;
        let (lo_k, hi_k) = k.split_at_mut(stride);
        let (lo_v, hi_v) = v.split_at_mut(stride);
        for t in 0..stride {
            let out_of_order = if ascending {
                lo_k[t] > hi_k[t]
            } else {
                lo_k[t] < hi_k[t]
            };
            if out_of_order {
                std::mem::swap(&mut lo_k[t], &mut hi_k[t]);
                std::mem::swap(&mut lo_v[t], &mut hi_v[t]);
            }
        }
    };
    if keys.len() >= PARALLEL_PASS_LEN {
        keys.par_chunks_mut(chunk)
            .zip(vals.par_chunks_mut(chunk))
            .enumerate()
            .for_each(run);
    } else {
        keys.chunks_mut(chunk)
            .zip(vals.chunks_mut(chunk))
            .enumerate()
            .for_each(run);
    }
}

/// Particles in cell order plus the half-open slot range of every cell.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SortedOrder {
    pub sorted_keys: Vec<u32>,
    /// `permutation[slot]` is the pre-sort index of the particle now in `slot`.
    pub permutation: Vec<u32>,
    pub cell_start: Vec<u32>,
    pub cell_end: Vec<u32>,
}

impl SortedOrder {
    pub fn cell_range(&self, cell: usize) -> std::ops::Range<usize> {
        self.cell_start[cell] as usize..self.cell_end[cell] as usize
    }
}

/// Boundary scan over nondecreasing keys. Empty cells get `start = end = 0`.
pub fn find_cell_bounds(sorted_keys: &[u32], cell_count: usize) -> (Vec<u32>, Vec<u32>) {
    let mut start = vec![0u32; cell_count];
    let mut end = vec![0u32; cell_count];
    let n = sorted_keys.len();
    for (i, &k) in sorted_keys.iter().enumerate() {
        if i == 0 || sorted_keys[i - 1] != k {
            start[k as usize] = i as u32;
        }
        if i + 1 == n || sorted_keys[i + 1] != k {
            end[k as usize] = i as u32 + 1;
        }
    }
    (start, end)
}

/// Builds the per-cell ranges, gathers every particle array into sorted
/// order and relabels the contact table to match.
pub fn find_cell_bounds_and_reorder(
    sorted_keys: Vec<u32>,
    permutation: Vec<u32>,
    cell_count: usize,
    particles: &ParticleSet,
    table: &mut ContactTable,
) -> (SortedOrder, ParticleSet) {
    let (cell_start, cell_end) = find_cell_bounds(&sorted_keys, cell_count);
    let reordered = particles.permuted(&permutation);
    table.remap_ids(&permutation);
    (
        SortedOrder {
            sorted_keys,
            permutation,
            cell_start,
            cell_end,
        },
        reordered,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contacts::Partner;
    use proptest::prelude::*;

    fn grid4() -> UniformGrid {
        UniformGrid::new(Vec3::zeros(), Vec3::new(4.0, 4.0, 4.0), 1.0).unwrap()
    }

    #[test]
    fn hash_examples() {
        let g = grid4();
        assert_eq!(g.dims(), [4, 4, 4]);
        assert_eq!(g.calc_hash(&Vec3::new(1.5, 0.5, 2.5)), (33, false));
        assert_eq!(g.calc_hash(&Vec3::zeros()), (0, false));
        assert_eq!(g.calc_hash(&Vec3::new(-3.0, 0.0, 0.0)), (0, true));
        assert_eq!(g.calc_hash(&Vec3::new(9.0, 9.0, 9.0)), (63, true));
        let mut keys = Vec::new();
        let clamps = calc_hashes(
            &g,
            &[Vec3::new(-3.0, 0.0, 0.0), Vec3::new(1.5, 0.5, 2.5)],
            &mut keys,
        );
        assert_eq!((keys, clamps), (vec![0, 33], 1));
    }

    #[test]
    fn neighbor_examples() {
        let g = grid4();
        let interior = g.neighbor_cells(g.linear_index([1, 1, 1]));
        assert_eq!(interior.len(), 27);
        assert!(interior.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(interior[0], 0);
        assert_eq!(g.neighbor_cells(0).len(), 8);
        let single = UniformGrid::with_dims(Vec3::zeros(), 1.0, [1, 1, 1]);
        assert_eq!(single.neighbor_cells(0).as_slice(), &[0]);
    }

    #[test]
    fn sort_examples() {
        let (k, v, _) = bitonic_sort(&[3, 1, 2, 0], &[0, 1, 2, 3]);
        assert_eq!(k, vec![0, 1, 2, 3]);
        assert_eq!(v, vec![3, 1, 2, 0]);

        let (k, v, _) = bitonic_sort(&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 4]);
        assert_eq!(k, vec![0, 1, 2, 3, 4]);
        assert_eq!(v, vec![0, 1, 2, 3, 4]);

        let (k, mut v, _) = bitonic_sort(&[5; 7], &[0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(k, vec![5; 7]);
        // equal keys never swap, so the network leaves them in place
        assert_eq!(v, vec![0, 1, 2, 3, 4, 5, 6]);
        v.sort();
        assert_eq!(v, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn sort_stats_count_the_network() {
        let (_, _, s) = bitonic_sort(&[0; 5], &[0; 5]);
        assert_eq!(s.padded_len, 8);
        assert_eq!(s.stages, 3);
        assert_eq!(s.passes, 6);
        assert_eq!(s.compare_exchanges, 24);
    }

    #[test]
    fn cell_bounds_examples() {
        let (s, e) = find_cell_bounds(&[0, 0, 1, 3], 4);
        assert_eq!((s[0], e[0]), (0, 2));
        assert_eq!((s[1], e[1]), (2, 3));
        assert_eq!(s[2], e[2]);
        assert_eq!((s[3], e[3]), (3, 4));

        let mut particles = ParticleSet::default();
        particles.push(
            Vec3::new(0.5, 0.5, 0.5),
            Vec3::zeros(),
            Vec3::zeros(),
            0.1,
            1.0,
            0,
        );
        let mut table = ContactTable::new(1, 2);
        let (order, p) = find_cell_bounds_and_reorder(vec![0], vec![0], 1, &particles, &mut table);
        assert_eq!(order.cell_range(0), 0..1);
        assert_eq!(order.permutation, vec![0]);
        assert!(p.bitwise_eq(&particles));
    }

    #[test]
    fn reorder_round_trips_and_remaps_table() {
        let mut particles = ParticleSet::default();
        for i in 0..5 {
            let x = i as f64;
            particles.push(
                Vec3::new(x, 0.0, 0.0),
                Vec3::new(0.0, x, 0.0),
                Vec3::zeros(),
                1.0 + x,
                2.0 + x,
                0,
            );
        }
        let mut table = ContactTable::new(5, 4);
        *table.lookup_or_insert(0, Partner::Particle(4)).unwrap() = Vec3::new(1.0, 0.0, 0.0);
        let (keys, perm, _) = bitonic_sort(&[4, 3, 2, 1, 0], &[0, 1, 2, 3, 4]);
        let (order, sorted) =
            find_cell_bounds_and_reorder(keys, perm.clone(), 5, &particles, &mut table);
        assert_eq!(order.permutation, vec![4, 3, 2, 1, 0]);
        // old 0 is new 4, old 4 is new 0
        assert_eq!(
            table.get(4, Partner::Particle(0)),
            Some(Vec3::new(1.0, 0.0, 0.0))
        );

        let mut inverse = vec![0u32; 5];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old as usize] = new as u32;
        }
        assert!(sorted.permuted(&inverse).bitwise_eq(&particles));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn bitonic_matches_reference_sort(keys in proptest::collection::vec(0u32..64, 1..=4096)) {
            let values: Vec<u32> = (0..keys.len() as u32).collect();
            let (k, v, _) = bitonic_sort(&keys, &values);
            let mut reference = keys.clone();
            reference.sort();
            prop_assert_eq!(&k, &reference);
            // values stay attached to their keys and form a permutation
            let mut seen = vec![false; keys.len()];
            for (slot, &orig) in v.iter().enumerate() {
                prop_assert_eq!(keys[orig as usize], k[slot]);
                prop_assert!(!seen[orig as usize]);
                seen[orig as usize] = true;
            }
        }
    }

    proptest! {
        #[test]
        fn bounds_cover_every_slot(mut keys in proptest::collection::vec(0u32..20, 0..200)) {
            keys.sort();
            let (s, e) = find_cell_bounds(&keys, 20);
            for c in 0..20 {
                for &key in &keys[s[c] as usize..e[c] as usize] {
                    prop_assert_eq!(key, c as u32);
                }
            }
            let covered: usize = (0..20).map(|c| (e[c] - s[c]) as usize).sum();
            prop_assert_eq!(covered, keys.len());
        }
    }
}
