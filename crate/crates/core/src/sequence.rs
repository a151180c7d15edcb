//! Candidate pick-sequence construction.
//!
//! Fruits are carved into vertical strips, merged left-to-right into zones
//! of one fruit per arm, split by height into one cluster per row, and then
//! claimed by the cells of each row under one of two strategies. The result
//! is a small set of harvester-wide candidates whose per-arm sequences all
//! have the same length (short zones are padded with skips), so the
//! scheduler can walk every arm in lockstep zone by zone.

use serde::Serialize;

use crate::model::{ArmId, ClaimOrder, Fruit, FruitId, FruitMap, HarvesterConfig};

/// Which fruit a cell claims from its row's cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Highest remaining fruit first (ties: larger x, then larger id).
    Topmost,
    /// Furthest-forward remaining fruit first (ties: higher z, then larger id).
    Rightmost,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Topmost => "topmost",
            Strategy::Rightmost => "rightmost",
        }
    }
}

/// One slot of an arm sequence: either a fruit or a skip for that zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SequenceEntry {
    pub zone: u32,
    /// `None` marks a skip: the arm stays parked for this zone.
    pub fruit: Option<FruitId>,
}

/// Ordered work list of a single arm, one entry per zone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArmSequence {
    pub arm: ArmId,
    pub entries: Vec<SequenceEntry>,
}

/// One harvester-wide candidate: every arm's sequence, equal lengths.
/// Arms are ordered cell-major (cell 1 rows bottom-up, then cell 2, ...).
#[derive(Debug, Clone, Serialize)]
pub struct HarvesterSequence {
    pub strategy: Strategy,
    pub arms: Vec<ArmSequence>,
}

impl HarvesterSequence {
    /// Sequences of one cell, ordered bottom row first.
    pub fn cell_rows(&self, cell: u32, rows: u32) -> &[ArmSequence] {
        let start = ((cell - 1) * rows) as usize;
        &self.arms[start..start + rows as usize]
    }
}

/// A group of `rows * cells` consecutive fruits along x (the last zone may
/// be smaller). `x_interval` spans from the midpoint shared with the
/// previous zone to the midpoint shared with the next.
#[derive(Debug, Clone, Serialize)]
pub struct Zone {
    pub index: u32,
    pub x_interval: (f64, f64),
    /// Fruit ids in map (x) order.
    pub fruits: Vec<FruitId>,
}

/// The slice of a zone owned by one row: its `cells` lowest unassigned
/// fruits, bottom rows first.
#[derive(Debug, Clone, Serialize)]
pub struct Cluster {
    pub row: u32,
    pub fruits: Vec<FruitId>,
}

/// Chunk the x-sorted map into zones of one fruit per arm. Zone boundaries
/// sit at the x-midpoint between the adjacent fruits of consecutive zones;
/// the outermost edges sit at the first and last fruit.
pub fn build_zones(map: &FruitMap, cfg: &HarvesterConfig) -> Vec<Zone> {
    let m = (cfg.rows * cfg.cells) as usize;
    assert!(m > 0, "build_zones requires at least one arm");
    let fruits = map.fruits();
    if fruits.is_empty() {
        return Vec::new();
    }
    let chunks: Vec<&[Fruit]> = fruits.chunks(m).collect();
    let mut zones = Vec::with_capacity(chunks.len());
    for (i, chunk) in chunks.iter().enumerate() {
        let left = if i == 0 {
            chunk[0].x
        } else {
            let prev = chunks[i - 1];
            0.5 * (prev[prev.len() - 1].x + chunk[0].x)
        };
        let right = if i + 1 == chunks.len() {
            chunk[chunk.len() - 1].x
        } else {
            0.5 * (chunk[chunk.len() - 1].x + chunks[i + 1][0].x)
        };
        zones.push(Zone {
            index: i as u32,
            x_interval: (left, right),
            fruits: chunk.iter().map(|f| f.id).collect(),
        });
    }
    zones
}

/// Split a zone into one cluster per row by height: sort ascending by z
/// (ties by x, then id) and hand out `cells` fruits per row from the bottom
/// up. Short zones leave the upper clusters short or empty.
pub fn split_clusters(zone: &Zone, map: &FruitMap, rows: u32, cells: u32) -> Vec<Cluster> {
    let mut sorted: Vec<&Fruit> = zone
        .fruits
        .iter()
        .map(|&id| map.get(id).expect("zone references a fruit missing from the map"))
        .collect();
    sorted.sort_by(|a, b| {
        a.z.total_cmp(&b.z)
            .then(a.x.total_cmp(&b.x))
            .then(a.id.cmp(&b.id))
    });
    let per_row = cells as usize;
    (0..rows)
        .map(|r| {
            let start = (r as usize * per_row).min(sorted.len());
            let end = ((r as usize + 1) * per_row).min(sorted.len());
            Cluster { row: r + 1, fruits: sorted[start..end].iter().map(|f| f.id).collect() }
        })
        .collect()
}

fn claim_beats(strategy: Strategy, a: &Fruit, b: &Fruit) -> bool {
    // "Beats" = claimed earlier. Both orders are total for finite coords.
    let ord = match strategy {
        Strategy::Topmost => a.z.total_cmp(&b.z).then(a.x.total_cmp(&b.x)).then(a.id.cmp(&b.id)),
        Strategy::Rightmost => a.x.total_cmp(&b.x).then(a.z.total_cmp(&b.z)).then(a.id.cmp(&b.id)),
    };
    ord.is_gt()
}

/// Build the harvester-level candidates: one where every row claims its
/// topmost remaining fruit first, one where it claims its rightmost. Each
/// zone contributes exactly one entry per arm; rows with an exhausted
/// cluster get skips. Identical candidates are deduplicated.
pub fn generate_candidates(map: &FruitMap, cfg: &HarvesterConfig) -> Vec<HarvesterSequence> {
    let zones = build_zones(map, cfg);
    let zone_count = zones.len();
    let mut out: Vec<HarvesterSequence> = Vec::with_capacity(2);
    for strategy in [Strategy::Topmost, Strategy::Rightmost] {
        let mut arms: Vec<ArmSequence> = (1..=cfg.cells)
            .flat_map(|cell| {
                (1..=cfg.rows).map(move |row| ArmSequence {
                    arm: ArmId { cell, row },
                    entries: Vec::with_capacity(zone_count),
                })
            })
            .collect();
        let claim_cells: Vec<u32> = match cfg.claim_order {
            ClaimOrder::FrontFirst => (1..=cfg.cells).collect(),
            ClaimOrder::RearFirst => (1..=cfg.cells).rev().collect(),
        };
        for zone in &zones {
            let clusters = split_clusters(zone, map, cfg.rows, cfg.cells);
            for (row_idx, cluster) in clusters.iter().enumerate() {
                let row = row_idx as u32 + 1;
                let mut remaining: Vec<&Fruit> =
                    cluster.fruits.iter().map(|&id| map.get(id).unwrap()).collect();
                for &cell in &claim_cells {
                    let best = remaining
                        .iter()
                        .enumerate()
                        .max_by(|(_, a), (_, b)| {
                            if claim_beats(strategy, a, b) {
                                std::cmp::Ordering::Greater
                            } else {
                                std::cmp::Ordering::Less
                            }
                        })
                        .map(|(i, _)| i);
                    let fruit = best.map(|i| remaining.remove(i).id);
                    let arm = cfg.arm_index(cell, row);
                    arms[arm].entries.push(SequenceEntry { zone: zone.index, fruit });
                }
            }
        }
        out.push(HarvesterSequence { strategy, arms });
    }
    if out.len() == 2 && out[0].arms == out[1].arms {
        out.truncate(1);
    }
    out
}
