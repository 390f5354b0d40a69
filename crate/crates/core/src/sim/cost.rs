use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    LutBuild,
    PartialSums,
    Distance,
    TopK,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::LutBuild, Stage::PartialSums, Stage::Distance, Stage::TopK];

    pub fn name(self) -> &'static str {
        match self {
            Stage::LutBuild => "lut_build",
            Stage::PartialSums => "partial_sums",
            Stage::Distance => "distance_calc",
            Stage::TopK => "topk",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCost {
    pub cycles: f64,
    pub mram_reads: u64,
    pub mram_bytes: u64,
    pub wram_lookups: u64,
}

impl StageCost {
    pub fn add(&mut self, o: &StageCost) {
        self.cycles += o.cycles;
        self.mram_reads += o.mram_reads;
        self.mram_bytes += o.mram_bytes;
        self.wram_lookups += o.wram_lookups;
    }
}

/// Costs indexed by [`Stage`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSet(pub [StageCost; 4]);

impl StageSet {
    pub fn get(&self, s: Stage) -> &StageCost {
        &self.0[s.index()]
    }

    pub fn get_mut(&mut self, s: Stage) -> &mut StageCost {
        &mut self.0[s.index()]
    }

    pub fn add(&mut self, o: &StageSet) {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            a.add(b);
        }
    }

    pub fn total_cycles(&self) -> f64 {
        self.0.iter().map(|c| c.cycles).sum()
    }

    pub fn total_lookups(&self) -> u64 {
        self.0.iter().map(|c| c.wram_lookups).sum()
    }
}

/// One costed step: a stage of one cluster scan, a top-k merge, or a host
/// transfer (`query`/`cluster` absent where they do not apply).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub dpu: u32,
    pub query: Option<u32>,
    pub cluster: Option<u32>,
    pub stage: Stage,
    pub cost: StageCost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub nqueries: usize,
    pub clock_hz: f64,
    pub per_dpu: Vec<StageSet>,
    pub events: Vec<Event>,
    /// Slowest DPU's total cycles.
    pub makespan: f64,
    pub qps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub nqueries: usize,
    pub ndpu: usize,
    pub makespan_cycles: f64,
    pub qps: f64,
    pub stage_totals: BTreeMap<String, StageCost>,
    pub breakdown: BTreeMap<String, f64>,
    pub distance_lookups: u64,
}

impl CostReport {
    /// Aggregates an event log in order.
    pub fn from_events(ndpu: usize, nqueries: usize, clock_hz: f64, events: Vec<Event>) -> Self {
        let mut per_dpu = vec![StageSet::default(); ndpu];
        for e in &events {
            per_dpu[e.dpu as usize].get_mut(e.stage).add(&e.cost);
        }
        let makespan = per_dpu.iter().map(StageSet::total_cycles).fold(0.0, f64::max);
        let qps = if makespan > 0.0 {
            nqueries as f64 * clock_hz / makespan
        } else {
            0.0
        };
        Self {
            nqueries,
            clock_hz,
            per_dpu,
            events,
            makespan,
            qps,
        }
    }

    pub fn ndpu(&self) -> usize {
        self.per_dpu.len()
    }

    pub fn stage_totals(&self) -> StageSet {
        let mut t = StageSet::default();
        for d in &self.per_dpu {
            t.add(d);
        }
        t
    }

    /// Share of summed DPU cycles spent in each stage.
    pub fn breakdown(&self) -> [f64; 4] {
        let t = self.stage_totals();
        let total = t.total_cycles();
        let mut out = [0.0; 4];
        if total > 0.0 {
            for s in Stage::ALL {
                out[s.index()] = t.get(s).cycles / total;
            }
        }
        out
    }

    pub fn distance_lookups(&self) -> u64 {
        self.stage_totals().get(Stage::Distance).wram_lookups
    }

    pub fn lookups_per_query(&self) -> f64 {
        if self.nqueries == 0 {
            0.0
        } else {
            self.distance_lookups() as f64 / self.nqueries as f64
        }
    }

    /// One row per DPU per stage.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dpu_id,stage,cycles,mram_reads,mram_bytes,wram_lookups\n");
        for (d, set) in self.per_dpu.iter().enumerate() {
            for st in Stage::ALL {
                let c = set.get(st);
                let _ = writeln!(
                    s,
                    "{d},{},{:.3},{},{},{}",
                    st.name(),
                    c.cycles,
                    c.mram_reads,
                    c.mram_bytes,
                    c.wram_lookups
                );
            }
        }
        s
    }

    pub fn summary(&self) -> CostSummary {
        let totals = self.stage_totals();
        let breakdown = self.breakdown();
        CostSummary {
            nqueries: self.nqueries,
            ndpu: self.ndpu(),
            makespan_cycles: self.makespan,
            qps: self.qps,
            stage_totals: Stage::ALL.iter().map(|s| (s.name().to_string(), *totals.get(*s))).collect(),
            breakdown: Stage::ALL.iter().map(|s| (s.name().to_string(), breakdown[s.index()])).collect(),
            distance_lookups: totals.get(Stage::Distance).wram_lookups,
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }
}
