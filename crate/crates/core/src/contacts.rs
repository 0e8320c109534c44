//! Per-pair tangential displacement storage.
//!
//! Every particle owns a fixed-capacity row of slots; both particles of a
//! pair keep their own copy of `δ_t`, so a force thread only ever touches its
//! own row. Rows follow a mark/sweep lifecycle: a contact marks its slot
//! touched, and the sweep between steps deletes untouched slots.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::physics::Vec3;

pub const DEFAULT_CAPACITY: usize = 16;

/// Contact partner id. Particle and wall ids live in separate spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partner {
    Particle(u32),
    Rectangle(u32),
    Line(u32),
}

impl Partner {
    pub fn is_wall(self) -> bool {
        !matches!(self, Partner::Particle(_))
    }
}

impl fmt::Display for Partner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Partner::Particle(id) => write!(f, "particle {id}"),
            Partner::Rectangle(id) => write!(f, "rectangle wall {id}"),
            Partner::Line(id) => write!(f, "line wall {id}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactSlot {
    pub partner: Partner,
    pub delta_t: Vec3,
    pub touched: bool,
}

impl ContactSlot {
    const EMPTY: ContactSlot = ContactSlot {
        partner: Partner::Particle(u32::MAX),
        delta_t: Vec3::new(0.0, 0.0, 0.0),
        touched: false,
    };

    fn bits(&self) -> (Partner, [u64; 3], bool) {
        (
            self.partner,
            [
                self.delta_t.x.to_bits(),
                self.delta_t.y.to_bits(),
                self.delta_t.z.to_bits(),
            ],
            self.touched,
        )
    }
}

#[derive(Debug)]
pub struct ContactTable {
    capacity: usize,
    slots: Vec<ContactSlot>,
    live: Vec<u32>,
    /// Reused destination buffer for [`ContactTable::remap_ids`].
    spare: Vec<ContactSlot>,
}

impl Clone for ContactTable {
    fn clone(&self) -> Self {
        ContactTable {
            capacity: self.capacity,
            slots: self.slots.clone(),
            live: self.live.clone(),
            spare: Vec::new(),
        }
    }
}

/// Equal when every row holds the same live slots; storage past a row's
/// live count is ignored.
impl PartialEq for ContactTable {
    fn eq(&self, other: &Self) -> bool {
        self.capacity == other.capacity
            && self.live == other.live
            && (0..self.particle_count()).all(|p| self.row(p) == other.row(p))
    }
}

/// Mutable view of one particle's row.
pub struct ContactRow<'a> {
    particle: usize,
    slots: &'a mut [ContactSlot],
    live: &'a mut u32,
}

fn touch_slot(
    particle: usize,
    slots: &mut [ContactSlot],
    live: &mut u32,
    partner: Partner,
) -> Result<usize> {
    let n = *live as usize;
    let index = match slots[..n].iter().position(|s| s.partner == partner) {
        Some(i) => i,
        None => {
            if n == slots.len() {
                return Err(Error::CapacityExceeded {
                    particle,
                    capacity: slots.len(),
                });
            }
            slots[n] = ContactSlot {
                partner,
                delta_t: Vec3::zeros(),
                touched: false,
            };
            *live += 1;
            n
        }
    };
    slots[index].touched = true;
    Ok(index)
}

impl<'a> ContactRow<'a> {
    pub fn particle(&self) -> usize {
        self.particle
    }

    pub fn len(&self) -> usize {
        *self.live as usize
    }

    pub fn is_empty(&self) -> bool {
        *self.live == 0
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    /// Returns the stored displacement for `partner`, inserting a zero entry
    /// on first contact. The slot is marked touched either way.
    pub fn lookup_or_insert(&mut self, partner: Partner) -> Result<&mut Vec3> {
        let index = touch_slot(self.particle, self.slots, self.live, partner)?;
        Ok(&mut self.slots[index].delta_t)
    }

    fn sweep(&mut self) {
        let live = *self.live as usize;
        let mut kept = 0;
        for i in 0..live {
            if self.slots[i].touched {
                let mut slot = self.slots[i];
                slot.touched = false;
                self.slots[kept] = slot;
                kept += 1;
            }
        }
        for slot in &mut self.slots[kept..live] {
            *slot = ContactSlot::EMPTY;
        }
        *self.live = kept as u32;
    }
}

impl ContactTable {
    pub fn new(particles: usize, capacity: usize) -> Self {
        assert!(capacity > 0, "contact capacity must be positive");
        ContactTable {
            capacity,
            slots: vec![ContactSlot::EMPTY; particles * capacity],
            live: vec![0; particles],
            spare: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn particle_count(&self) -> usize {
        self.live.len()
    }

    /// Total live slots over all rows.
    pub fn live_count(&self) -> usize {
        self.live.iter().map(|&l| l as usize).sum()
    }

    pub fn row(&self, particle: usize) -> &[ContactSlot] {
        let start = particle * self.capacity;
        &self.slots[start..start + self.live[particle] as usize]
    }

    pub fn row_mut(&mut self, particle: usize) -> ContactRow<'_> {
        let start = particle * self.capacity;
        ContactRow {
            particle,
            slots: &mut self.slots[start..start + self.capacity],
            live: &mut self.live[particle],
        }
    }

    pub fn rows_mut(&mut self) -> impl Iterator<Item = ContactRow<'_>> {
        self.slots
            .chunks_mut(self.capacity)
            .zip(self.live.iter_mut())
            .enumerate()
            .map(|(particle, (slots, live))| ContactRow {
                particle,
                slots,
                live,
            })
    }

    pub fn par_rows_mut(&mut self) -> impl IndexedParallelIterator<Item = ContactRow<'_>> {
        self.slots
            .par_chunks_mut(self.capacity)
            .zip(self.live.par_iter_mut())
            .enumerate()
            .map(|(particle, (slots, live))| ContactRow {
                particle,
                slots,
                live,
            })
    }

    pub fn lookup_or_insert(&mut self, particle: usize, partner: Partner) -> Result<&mut Vec3> {
        let start = particle * self.capacity;
        let slots = &mut self.slots[start..start + self.capacity];
        let index = touch_slot(particle, slots, &mut self.live[particle], partner)?;
        Ok(&mut slots[index].delta_t)
    }

    pub fn get(&self, particle: usize, partner: Partner) -> Option<Vec3> {
        self.row(particle)
            .iter()
            .find(|s| s.partner == partner)
            .map(|s| s.delta_t)
    }

    /// Deletes every slot not touched since the previous sweep and clears the
    /// touched flag on the survivors.
    pub fn initialize_contact_ids(&mut self) {
        self.par_rows_mut().for_each(|mut row| row.sweep());
    }

    /// Relabels particle ids after a reorder. `permutation[new] = old`, the
    /// same convention as [`crate::grid::SortedOrder::permutation`]. Rows
    /// move to their owner's new index and particle partners are mapped to
    /// their new ids; wall partners are untouched.
    pub fn remap_ids(&mut self, permutation: &[u32]) {
        assert_eq!(permutation.len(), self.particle_count());
        let mut new_of_old = vec![0u32; permutation.len()];
        for (new, &old) in permutation.iter().enumerate() {
            new_of_old[old as usize] = new as u32;
        }
        let k = self.capacity;
        let old_slots = std::mem::take(&mut self.slots);
        let old_live = std::mem::take(&mut self.live);
        let mut slots = std::mem::take(&mut self.spare);
        slots.resize(old_slots.len(), ContactSlot::EMPTY);
        let live: Vec<u32> = permutation
            .iter()
            .map(|&old| old_live[old as usize])
            .collect();
        slots
            .par_chunks_mut(k)
            .zip(permutation.par_iter())
            .for_each(|(row, &old)| {
                let old = old as usize;
                let n = old_live[old] as usize;
                for (dst, src) in row.iter_mut().zip(&old_slots[old * k..old * k + n]) {
                    let mut slot = *src;
                    if let Partner::Particle(p) = slot.partner {
                        slot.partner = Partner::Particle(new_of_old[p as usize]);
                    }
                    *dst = slot;
                }
            });
        self.slots = slots;
        self.live = live;
        self.spare = old_slots;
    }

    /// Bit-level equality of every live slot, including the sign of zero.
    pub fn bitwise_eq(&self, other: &ContactTable) -> bool {
        self.capacity == other.capacity
            && self.live == other.live
            && (0..self.particle_count()).all(|p| {
                self.row(p)
                    .iter()
                    .zip(other.row(p))
                    .all(|(a, b)| a.bits() == b.bits())
            })
    }

    /// Live slots as `(owner, slot)` pairs in row order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &ContactSlot)> {
        (0..self.particle_count()).flat_map(move |p| self.row(p).iter().map(move |s| (p, s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_contact_starts_at_zero() {
        let mut t = ContactTable::new(10, 4);
        let d = t.lookup_or_insert(3, Partner::Particle(7)).unwrap();
        assert_eq!(*d, Vec3::zeros());
        assert!(t.row(3)[0].touched);
    }

    #[test]
    fn stored_value_round_trips() {
        let mut t = ContactTable::new(10, 4);
        *t.lookup_or_insert(3, Partner::Particle(7)).unwrap() = Vec3::new(0.1, 0.0, 0.0);
        assert_eq!(
            *t.lookup_or_insert(3, Partner::Particle(7)).unwrap(),
            Vec3::new(0.1, 0.0, 0.0)
        );
        assert_eq!(t.row(3).len(), 1);
    }

    #[test]
    fn capacity_overflow_names_the_particle() {
        let mut t = ContactTable::new(10, 1);
        t.lookup_or_insert(3, Partner::Particle(7)).unwrap();
        match t.lookup_or_insert(3, Partner::Particle(9)) {
            Err(Error::CapacityExceeded {
                particle: 3,
                capacity: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sweep_deletes_untouched_and_clears_flags() {
        let mut t = ContactTable::new(10, 4);
        t.lookup_or_insert(3, Partner::Particle(7)).unwrap();
        t.lookup_or_insert(3, Partner::Particle(9)).unwrap();
        t.initialize_contact_ids();
        // only (3,7) is touched in the next step
        *t.lookup_or_insert(3, Partner::Particle(7)).unwrap() = Vec3::new(1.0, 2.0, 3.0);
        t.initialize_contact_ids();
        assert_eq!(t.row(3).len(), 1);
        assert_eq!(t.row(3)[0].partner, Partner::Particle(7));
        assert!(!t.row(3)[0].touched);
        assert_eq!(
            t.get(3, Partner::Particle(7)),
            Some(Vec3::new(1.0, 2.0, 3.0))
        );

        let mut empty = ContactTable::new(4, 2);
        empty.initialize_contact_ids();
        assert_eq!(empty.live_count(), 0);
    }

    #[test]
    fn sweep_keeps_all_touched() {
        let mut t = ContactTable::new(3, 4);
        for p in 0..3 {
            t.lookup_or_insert(p, Partner::Rectangle(0)).unwrap();
        }
        t.initialize_contact_ids();
        assert_eq!(t.live_count(), 3);
        assert!(t.entries().all(|(_, s)| !s.touched));
        // a second sweep without contacts empties the table
        t.initialize_contact_ids();
        assert_eq!(t.live_count(), 0);
    }

    #[test]
    fn recontact_restarts_from_zero() {
        let mut t = ContactTable::new(2, 2);
        *t.lookup_or_insert(0, Partner::Particle(1)).unwrap() = Vec3::new(0.5, 0.0, 0.0);
        t.initialize_contact_ids();
        t.initialize_contact_ids();
        assert_eq!(
            *t.lookup_or_insert(0, Partner::Particle(1)).unwrap(),
            Vec3::zeros()
        );
    }

    #[test]
    fn remap_swap_and_walls() {
        let mut t = ContactTable::new(3, 2);
        let d = Vec3::new(0.1, 0.2, 0.3);
        *t.lookup_or_insert(0, Partner::Particle(1)).unwrap() = d;
        *t.lookup_or_insert(0, Partner::Line(1)).unwrap() = -d;
        t.remap_ids(&[1, 0, 2]);
        assert_eq!(t.get(1, Partner::Particle(0)), Some(d));
        assert_eq!(t.get(1, Partner::Line(1)), Some(-d));
        assert_eq!(t.row(0).len(), 0);

        let before = t.clone();
        t.remap_ids(&[0, 1, 2]);
        assert!(t.bitwise_eq(&before));
    }

    fn arb_table() -> impl Strategy<Value = (ContactTable, Vec<u32>)> {
        (1usize..24).prop_flat_map(|n| {
            (
                proptest::collection::vec((0..n, 0..n, -1.0..1.0f64), 0..60),
                Just((0..n as u32).collect::<Vec<_>>()).prop_shuffle(),
            )
                .prop_map(move |(pairs, perm)| {
                    let mut t = ContactTable::new(n, 8);
                    for (a, b, v) in pairs {
                        let partner = if a == b {
                            Partner::Rectangle(b as u32)
                        } else {
                            Partner::Particle(b as u32)
                        };
                        if let Ok(d) = t.lookup_or_insert(a, partner) {
                            *d += Vec3::new(v, -v, 0.5 * v);
                        }
                    }
                    (t, perm)
                })
        })
    }

    proptest! {
        #[test]
        fn remap_then_inverse_is_identity((table, perm) in arb_table()) {
            let mut inverse = vec![0u32; perm.len()];
            for (new, &old) in perm.iter().enumerate() {
                inverse[old as usize] = new as u32;
            }
            let mut t = table.clone();
            t.remap_ids(&perm);
            prop_assert_eq!(t.live_count(), table.live_count());
            t.remap_ids(&inverse);
            prop_assert!(t.bitwise_eq(&table));
        }

        #[test]
        fn steady_contacts_are_a_sweep_fixed_point((table, _) in arb_table()) {
            let mut t = table.clone();
            t.initialize_contact_ids();
            let after_one = t.clone();
            // re-touch exactly the survivors, as a step with unchanged contacts does
            let survivors: Vec<(usize, Partner)> = t.entries().map(|(p, s)| (p, s.partner)).collect();
            for (p, partner) in survivors {
                t.lookup_or_insert(p, partner).unwrap();
            }
            t.initialize_contact_ids();
            prop_assert!(t.bitwise_eq(&after_one));
            prop_assert!(t.entries().all(|(_, s)| !s.touched));
        }
    }
}
