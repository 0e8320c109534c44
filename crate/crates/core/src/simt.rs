//! Lockstep warp cost model for the Collide kernel.
//!
//! Each particle is a lane. A lane's trace is the ordered list of candidate
//! checks it performs (one "loop block" per candidate), flagged where the
//! candidate is in contact. Consecutive lanes form warps that advance one
//! loop iteration at a time: an iteration costs the whole warp whatever its
//! slowest lane spends in it.
//!
//! The baseline kernel computes a force inside the iteration that finds the
//! contact, so any contacting lane charges `c_force` to the warp. The
//! two-phase kernel only stores the partner id during the scan and computes
//! forces in a second loop whose length is the warp's largest contact count.

use crate::pipeline::CollideVariant;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpCostParams {
    pub warp_size: usize,
    pub c_check: f64,
    pub c_force: f64,
    pub c_store: f64,
    pub c_load: f64,
}

impl Default for WarpCostParams {
    fn default() -> Self {
        WarpCostParams {
            warp_size: 32,
            c_check: 1.0,
            c_force: 20.0,
            c_store: 1.0,
            c_load: 1.0,
        }
    }
}

impl WarpCostParams {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.warp_size == 0 {
            return Err(("warp_size", "must be at least 1".into()));
        }
        for (name, v) in [
            ("c_check", self.c_check),
            ("c_force", self.c_force),
            ("c_store", self.c_store),
            ("c_load", self.c_load),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err((name, format!("must be a non-negative cost, got {v}")));
            }
        }
        if self.c_force <= self.c_check {
            return Err(("c_force", "must exceed c_check".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CandidateEvent {
    pub candidate: u32,
    pub is_contact: bool,
}

/// Candidate traces of every lane, stored flat.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceSet {
    offsets: Vec<usize>,
    events: Vec<CandidateEvent>,
}

impl TraceSet {
    pub fn new() -> Self {
        TraceSet {
            offsets: vec![0],
            events: Vec::new(),
        }
    }

    pub fn from_lanes<I, L>(lanes: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: AsRef<[CandidateEvent]>,
    {
        let mut set = TraceSet::new();
        for lane in lanes {
            set.push_lane(lane.as_ref());
        }
        set
    }

    pub fn push_lane(&mut self, events: &[CandidateEvent]) {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.events.extend_from_slice(events);
        self.offsets.push(self.events.len());
    }

    pub fn lane_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn lane(&self, i: usize) -> &[CandidateEvent] {
        &self.events[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn lanes(&self) -> impl Iterator<Item = &[CandidateEvent]> {
        (0..self.lane_count()).map(move |i| self.lane(i))
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn contact_count(&self) -> usize {
        self.events.iter().filter(|e| e.is_contact).count()
    }
}

fn contacts(lane: &[CandidateEvent]) -> usize {
    lane.iter().filter(|e| e.is_contact).count()
}

/// One warp: consecutive lanes of a trace set.
#[derive(Clone, Copy, Debug)]
pub struct Warp<'a> {
    traces: &'a TraceSet,
    first: usize,
    len: usize,
}

impl<'a> Warp<'a> {
    pub fn lanes(&self) -> impl Iterator<Item = &'a [CandidateEvent]> + '_ {
        let traces = self.traces;
        (self.first..self.first + self.len).map(move |i| traces.lane(i))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn max_events(&self) -> usize {
        self.lanes().map(<[_]>::len).max().unwrap_or(0)
    }

    fn max_contacts(&self) -> usize {
        self.lanes().map(contacts).max().unwrap_or(0)
    }

    /// Number of iterations in which at least one lane sees a contact.
    fn contact_iterations(&self) -> usize {
        let mut any = vec![false; self.max_events()];
        for lane in self.lanes() {
            for (j, e) in lane.iter().enumerate() {
                any[j] |= e.is_contact;
            }
        }
        any.into_iter().filter(|&a| a).count()
    }
}

/// Chunks lanes into warps of `warp_size`; the last warp may be partial.
pub fn group_warps(traces: &TraceSet, warp_size: usize) -> Vec<Warp<'_>> {
    assert!(warp_size >= 1);
    let n = traces.lane_count();
    (0..n)
        .step_by(warp_size)
        .map(|first| Warp {
            traces,
            first,
            len: warp_size.min(n - first),
        })
        .collect()
}

pub fn warp_cycles_baseline(warp: &Warp<'_>, params: &WarpCostParams) -> f64 {
    warp.max_events() as f64 * params.c_check + warp.contact_iterations() as f64 * params.c_force
}

pub fn warp_cycles_two_phase(warp: &Warp<'_>, params: &WarpCostParams) -> f64 {
    let scan = warp.max_events() as f64 * params.c_check
        + warp.contact_iterations() as f64 * params.c_store;
    let forces = warp.max_contacts() as f64 * (params.c_load + params.c_force);
    scan + forces
}

pub fn warp_cycles(warp: &Warp<'_>, params: &WarpCostParams, variant: CollideVariant) -> f64 {
    match variant {
        CollideVariant::Baseline => warp_cycles_baseline(warp, params),
        CollideVariant::TwoPhase => warp_cycles_two_phase(warp, params),
    }
}

/// Cycles a lane spends doing its own work, with no lockstep stalls.
pub fn lane_useful_cycles(
    lane: &[CandidateEvent],
    params: &WarpCostParams,
    variant: CollideVariant,
) -> f64 {
    let checks = lane.len() as f64 * params.c_check;
    let c = contacts(lane) as f64;
    match variant {
        CollideVariant::Baseline => checks + c * params.c_force,
        CollideVariant::TwoPhase => checks + c * (params.c_force + params.c_store + params.c_load),
    }
}

fn useful_cycles(warp: &Warp<'_>, params: &WarpCostParams, variant: CollideVariant) -> f64 {
    warp.lanes()
        .map(|l| lane_useful_cycles(l, params, variant))
        .sum()
}

/// Fraction of occupied lane-cycles spent on useful work. A warp with zero
/// cost counts as fully utilized.
pub fn utilization(warp: &Warp<'_>, params: &WarpCostParams, variant: CollideVariant) -> f64 {
    let cycles = warp_cycles(warp, params, variant);
    if cycles == 0.0 {
        return 1.0;
    }
    useful_cycles(warp, params, variant) / (warp.len() as f64 * cycles)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WarpStats {
    pub lanes: usize,
    pub cycles_baseline: f64,
    pub cycles_two_phase: f64,
    pub useful_baseline: f64,
    pub useful_two_phase: f64,
    /// Occupied lane-cycles, `Σ lanes · cycles` over the warps.
    pub lane_cycles_baseline: f64,
    pub lane_cycles_two_phase: f64,
}

impl WarpStats {
    pub fn utilization_baseline(&self) -> f64 {
        ratio_or_one(self.useful_baseline, self.lane_cycles_baseline)
    }

    pub fn utilization_two_phase(&self) -> f64 {
        ratio_or_one(self.useful_two_phase, self.lane_cycles_two_phase)
    }

    /// Baseline over two-phase cycles; 1 when both are zero.
    pub fn speedup(&self) -> f64 {
        ratio_or_one(self.cycles_baseline, self.cycles_two_phase)
    }

    pub fn add(&mut self, other: &WarpStats) {
        self.lanes += other.lanes;
        self.cycles_baseline += other.cycles_baseline;
        self.cycles_two_phase += other.cycles_two_phase;
        self.useful_baseline += other.useful_baseline;
        self.useful_two_phase += other.useful_two_phase;
        self.lane_cycles_baseline += other.lane_cycles_baseline;
        self.lane_cycles_two_phase += other.lane_cycles_two_phase;
    }
}

fn ratio_or_one(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Per-warp costs for both variants and their aggregate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WarpReport {
    pub warps: Vec<WarpStats>,
    pub aggregate: WarpStats,
}

impl WarpReport {
    pub fn cycles_baseline(&self) -> f64 {
        self.aggregate.cycles_baseline
    }

    pub fn cycles_two_phase(&self) -> f64 {
        self.aggregate.cycles_two_phase
    }

    pub fn utilization_baseline(&self) -> f64 {
        self.aggregate.utilization_baseline()
    }

    pub fn utilization_two_phase(&self) -> f64 {
        self.aggregate.utilization_two_phase()
    }

    /// Baseline over two-phase cycles; 1 when both are zero.
    pub fn speedup(&self) -> f64 {
        self.aggregate.speedup()
    }

    /// Adds another report's warps (e.g. from another step).
    pub fn merge(&mut self, other: &WarpReport) {
        self.warps.extend_from_slice(&other.warps);
        self.aggregate.add(&other.aggregate);
    }
}

pub fn analyze(traces: &TraceSet, params: &WarpCostParams) -> WarpReport {
    let warps: Vec<WarpStats> = group_warps(traces, params.warp_size)
        .iter()
        .map(|w| {
            let lanes = w.len();
            let cycles_baseline = warp_cycles_baseline(w, params);
            let cycles_two_phase = warp_cycles_two_phase(w, params);
            WarpStats {
                lanes,
                cycles_baseline,
                cycles_two_phase,
                useful_baseline: useful_cycles(w, params, CollideVariant::Baseline),
                useful_two_phase: useful_cycles(w, params, CollideVariant::TwoPhase),
                lane_cycles_baseline: lanes as f64 * cycles_baseline,
                lane_cycles_two_phase: lanes as f64 * cycles_two_phase,
            }
        })
        .collect();
    let aggregate = warps.iter().fold(WarpStats::default(), |mut acc, w| {
        acc.add(w);
        acc
    });
    WarpReport { warps, aggregate }
}
