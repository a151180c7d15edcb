//! Geometry, machine configuration, and fruit maps.
//!
//! Conventions used throughout the crate: the world frame is fixed to the
//! ground, `x` runs along the tree row in the direction of vehicle travel,
//! `z` is vertical, and `y` is canopy depth. Cells are numbered 1 (front)
//! to `cells` (rear); rows are numbered 1 (bottom) to `rows` (top). The
//! front edge of cell 1 starts at `x_front_init` and the whole frame slides
//! in `+x` at the vehicle speed chosen by the planner.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Identifier of one fruit within a map.
pub type FruitId = u64;

/// Address of one arm: cell 1 is the front frame, row 1 the bottom arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ArmId {
    pub cell: u32,
    pub row: u32,
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cell {} row {}", self.cell, self.row)
    }
}

/// Per-axis kinematic limits shared by every prismatic joint.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KinematicLimits {
    /// Peak joint speed in m/s, relative to the vehicle frame.
    pub v_max: f64,
    /// Peak joint acceleration in m/s^2.
    pub a_max: f64,
}

/// How long a pick pins the arm at the fruit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PickingDurationMode {
    /// Reach in to depth `y` and retract, plus the fixed grasp time.
    DepthAware,
    /// Fixed grasp time only.
    Constant,
}

/// Order in which the cells of a row claim fruits during sequence generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimOrder {
    /// Cell 1 claims first.
    FrontFirst,
    /// Cell `cells` claims first.
    RearFirst,
}

/// Initial velocity of an arm at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InitialVelocity {
    /// Move with the vehicle: `(v, 0)` once the plan's speed `v` is known.
    RideWithVehicle,
    Fixed { vx: f64, vz: f64 },
}

/// World-frame state of one arm at t = 0.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InitialArmState {
    pub x: f64,
    pub z: f64,
    pub velocity: InitialVelocity,
}

impl InitialArmState {
    /// Concrete initial velocity once the vehicle speed is fixed.
    pub fn velocity_at(&self, vehicle_speed: f64) -> (f64, f64) {
        match self.velocity {
            InitialVelocity::RideWithVehicle => (vehicle_speed, 0.0),
            InitialVelocity::Fixed { vx, vz } => (vx, vz),
        }
    }
}

/// Full machine description: geometry, limits, timing, and mode switches.
#[derive(Debug, Clone, Serialize)]
pub struct HarvesterConfig {
    /// Vertically stacked arms per cell (R).
    pub rows: u32,
    /// Cells along the row (C).
    pub cells: u32,
    /// Along-row width of one cell in meters (l).
    pub cell_length: f64,
    /// Vertical workspace height in meters (H).
    pub frame_height: f64,
    pub limits: KinematicLimits,
    /// Trajectory discretization step in seconds.
    pub dt: f64,
    /// Fixed grasp/detach time in seconds.
    pub td_grasp: f64,
    /// Termination width of the vehicle-speed binary search in m/s.
    pub epsilon_v: f64,
    /// World x of cell 1's front edge at t = 0.
    pub x_front_init: f64,
    /// Distance to the front edge below which an arm counts as pinned
    /// against it when timing a horizontal move.
    pub front_clearance: f64,
    pub picking_duration_mode: PickingDurationMode,
    pub claim_order: ClaimOrder,
    /// One state per arm, indexed cell-major: `(cell-1)*rows + (row-1)`.
    pub initial_arm_states: Vec<InitialArmState>,
}

/// One failed configuration check, naming the offending field.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigViolation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl HarvesterConfig {
    /// Configuration with the benchmark defaults: 0.6 m cells, 2 m frame,
    /// 1 m/s and 1 m/s^2 limits, dt = 0.1 s, 2 s grasp time, and arms
    /// parked at evenly spaced heights in the middle of their cells.
    pub fn new(rows: u32, cells: u32) -> Self {
        let limits = KinematicLimits { v_max: 1.0, a_max: 1.0 };
        let mut cfg = HarvesterConfig {
            rows,
            cells,
            cell_length: 0.6,
            frame_height: 2.0,
            limits,
            dt: 0.1,
            td_grasp: 2.0,
            epsilon_v: 1e-3,
            x_front_init: 0.0,
            front_clearance: limits.v_max * limits.v_max / (2.0 * limits.a_max),
            picking_duration_mode: PickingDurationMode::DepthAware,
            claim_order: ClaimOrder::FrontFirst,
            initial_arm_states: Vec::new(),
        };
        cfg.initial_arm_states = cfg.default_arm_states();
        cfg
    }

    /// Evenly spaced rest states: each arm sits at the x-center of its cell
    /// and at the center of its row's share of the frame height, riding with
    /// the vehicle.
    pub fn default_arm_states(&self) -> Vec<InitialArmState> {
        let mut states = Vec::with_capacity((self.rows * self.cells) as usize);
        for cell in 1..=self.cells {
            for row in 1..=self.rows {
                states.push(InitialArmState {
                    x: self.x_front_init - (cell as f64 - 0.5) * self.cell_length,
                    z: (row as f64 - 0.5) * self.frame_height / self.rows as f64,
                    velocity: InitialVelocity::RideWithVehicle,
                });
            }
        }
        states
    }

    /// Index of an arm's state in `initial_arm_states`.
    pub fn arm_index(&self, cell: u32, row: u32) -> usize {
        debug_assert!(cell >= 1 && cell <= self.cells && row >= 1 && row <= self.rows);
        ((cell - 1) * self.rows + (row - 1)) as usize
    }

    pub fn arm_count(&self) -> u32 {
        self.rows * self.cells
    }

    /// World x of cell `c`'s front edge at time `t` under vehicle speed `v`.
    pub fn x_front(&self, cell: u32, vehicle_speed: f64, t: f64) -> f64 {
        self.x_front_init - (cell as f64 - 1.0) * self.cell_length + vehicle_speed * t
    }

    /// World x of cell `c`'s rear edge at time `t` under vehicle speed `v`.
    pub fn x_rear(&self, cell: u32, vehicle_speed: f64, t: f64) -> f64 {
        self.x_front_init - cell as f64 * self.cell_length + vehicle_speed * t
    }

    /// `(x_rear, x_front)` interval of cell `c` at time `t`.
    pub fn cell_bounds(&self, cell: u32, vehicle_speed: f64, t: f64) -> (f64, f64) {
        (self.x_rear(cell, vehicle_speed, t), self.x_front(cell, vehicle_speed, t))
    }

    /// All violated checks; an empty list means the configuration is usable.
    pub fn validate(&self) -> Vec<ConfigViolation> {
        let mut out = Vec::new();
        if self.rows == 0 {
            fail(&mut out, "rows", "must be at least 1".into());
        }
        if self.cells == 0 {
            fail(&mut out, "cells", "must be at least 1".into());
        }
        for (field, value) in [
            ("cell_length", self.cell_length),
            ("frame_height", self.frame_height),
            ("v_max", self.limits.v_max),
            ("a_max", self.limits.a_max),
            ("dt", self.dt),
            ("epsilon_v", self.epsilon_v),
        ] {
            if !(value.is_finite() && value > 0.0) {
                fail(&mut out, field, format!("must be positive and finite (got {value})"));
            }
        }
        for (field, value) in [
            ("td_grasp", self.td_grasp),
            ("front_clearance", self.front_clearance),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                fail(&mut out, field, format!("must be nonnegative and finite (got {value})"));
            }
        }
        if !self.x_front_init.is_finite() {
            fail(&mut out, "x_front_init", format!("must be finite (got {})", self.x_front_init));
        }
        let expected = (self.rows as usize) * (self.cells as usize);
        if self.initial_arm_states.len() != expected {
            fail(
                &mut out,
                "initial_arm_states",
                format!("expected {} states (rows*cells), got {}", expected, self.initial_arm_states.len()),
            );
            return out;
        }
        if self.rows == 0 || self.cells == 0 {
            return out;
        }
        for cell in 1..=self.cells {
            for row in 1..=self.rows {
                let st = &self.initial_arm_states[self.arm_index(cell, row)];
                if !st.x.is_finite() || !st.z.is_finite() {
                    fail(&mut out, "initial_arm_states", format!("arm at cell {cell} row {row} has non-finite position"));
                }
                if row > 1 {
                    let below = &self.initial_arm_states[self.arm_index(cell, row - 1)];
                    // Non-finite z already failed above, so <= is exact here.
                    if st.z <= below.z {
                        fail(
                            &mut out,
                            "initial_arm_states",
                            format!(
                                "initial z must strictly increase with row; cell {cell} row {row} has z = {} below row {}'s z = {}",
                                st.z,
                                row - 1,
                                below.z
                            ),
                        );
                    }
                }
            }
        }
        out
    }

    /// Parse a flat `key = value` configuration file. `rows` and `cells` are
    /// required; every other key falls back to the defaults of
    /// [`HarvesterConfig::new`]. Lines starting with `#` and blank lines are
    /// ignored. Initial arm states are always derived, not parsed.
    pub fn from_key_values(text: &str) -> Result<Self, ConfigParseError> {
        let mut seen: HashMap<&str, (usize, &str)> = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigParseError {
                line: lineno + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if let Some((first, _)) = seen.insert(key, (lineno + 1, value)) {
                return Err(ConfigParseError {
                    line: lineno + 1,
                    message: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
        }
        let parse_u32 = |seen: &HashMap<&str, (usize, &str)>, key: &str| -> Result<Option<u32>, ConfigParseError> {
            match seen.get(key) {
                None => Ok(None),
                Some(&(line, v)) => v.parse::<u32>().map(Some).map_err(|e| ConfigParseError {
                    line,
                    message: format!("invalid value for `{key}`: {e}"),
                }),
            }
        };
        let parse_f64 = |seen: &HashMap<&str, (usize, &str)>, key: &str| -> Result<Option<f64>, ConfigParseError> {
            match seen.get(key) {
                None => Ok(None),
                Some(&(line, v)) => v.parse::<f64>().map(Some).map_err(|e| ConfigParseError {
                    line,
                    message: format!("invalid value for `{key}`: {e}"),
                }),
            }
        };

        let rows = parse_u32(&seen, "rows")?.ok_or_else(|| ConfigParseError {
            line: 0,
            message: "missing required key `rows`".into(),
        })?;
        let cells = parse_u32(&seen, "cells")?.ok_or_else(|| ConfigParseError {
            line: 0,
            message: "missing required key `cells`".into(),
        })?;
        let mut cfg = HarvesterConfig::new(rows, cells);
        if let Some(v) = parse_f64(&seen, "cell_length")? {
            cfg.cell_length = v;
        }
        if let Some(v) = parse_f64(&seen, "frame_height")? {
            cfg.frame_height = v;
        }
        if let Some(v) = parse_f64(&seen, "v_max")? {
            cfg.limits.v_max = v;
        }
        if let Some(v) = parse_f64(&seen, "a_max")? {
            cfg.limits.a_max = v;
        }
        if let Some(v) = parse_f64(&seen, "dt")? {
            cfg.dt = v;
        }
        if let Some(v) = parse_f64(&seen, "td_grasp")? {
            cfg.td_grasp = v;
        }
        if let Some(v) = parse_f64(&seen, "epsilon_v")? {
            cfg.epsilon_v = v;
        }
        if let Some(v) = parse_f64(&seen, "x_front_init")? {
            cfg.x_front_init = v;
        }
        match seen.get("front_clearance") {
            Some(_) => cfg.front_clearance = parse_f64(&seen, "front_clearance")?.unwrap(),
            // Not given: re-derive from possibly overridden limits.
            None => cfg.front_clearance = cfg.limits.v_max * cfg.limits.v_max / (2.0 * cfg.limits.a_max),
        }
        if let Some(&(line, v)) = seen.get("picking_duration_mode") {
            cfg.picking_duration_mode = match v {
                "depth-aware" => PickingDurationMode::DepthAware,
                "constant" => PickingDurationMode::Constant,
                other => {
                    return Err(ConfigParseError {
                        line,
                        message: format!("picking_duration_mode must be `depth-aware` or `constant`, got `{other}`"),
                    })
                }
            };
        }
        if let Some(&(line, v)) = seen.get("claim_order") {
            cfg.claim_order = match v {
                "front-first" => ClaimOrder::FrontFirst,
                "rear-first" => ClaimOrder::RearFirst,
                other => {
                    return Err(ConfigParseError {
                        line,
                        message: format!("claim_order must be `front-first` or `rear-first`, got `{other}`"),
                    })
                }
            };
        }
        const KNOWN: &[&str] = &[
            "rows",
            "cells",
            "cell_length",
            "frame_height",
            "v_max",
            "a_max",
            "dt",
            "td_grasp",
            "epsilon_v",
            "x_front_init",
            "front_clearance",
            "picking_duration_mode",
            "claim_order",
        ];
        for (key, &(line, _)) in &seen {
            if !KNOWN.contains(key) {
                return Err(ConfigParseError {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
        }
        // Positions were derived with default geometry; re-derive with overrides.
        cfg.initial_arm_states = cfg.default_arm_states();
        Ok(cfg)
    }

    pub fn load_key_values(path: &Path) -> Result<Self, ModelError> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Ok(Self::from_key_values(&text)?)
    }
}

fn fail(out: &mut Vec<ConfigViolation>, field: &'static str, message: String) {
    out.push(ConfigViolation { field, message });
}

/// Error from the flat key-value configuration parser. `line` is 1-based;
/// 0 means the problem is file-wide (e.g. a missing required key).
#[derive(Debug, Clone, thiserror::Error)]
#[error("config parse error (line {line}): {message}")]
pub struct ConfigParseError {
    pub line: usize,
    pub message: String,
}

/// One fruit: world-frame position at t = 0. Fruits do not move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fruit {
    pub id: FruitId,
    pub x: f64,
    /// Canopy depth, measured inward from the picking plane.
    pub y: f64,
    pub z: f64,
}

/// Validated fruit collection, sorted ascending by `x` (ties by `z`, then id).
#[derive(Debug, Clone)]
pub struct FruitMap {
    fruits: Vec<Fruit>,
    by_id: HashMap<FruitId, usize>,
}

impl FruitMap {
    /// Validate and sort a raw fruit list. Rejects duplicate ids, non-finite
    /// coordinates, negative depth, and z outside `[0, frame_height]`.
    pub fn from_fruits(mut fruits: Vec<Fruit>, cfg: &HarvesterConfig) -> Result<Self, ModelError> {
        let mut ids = HashSet::with_capacity(fruits.len());
        for f in &fruits {
            if !ids.insert(f.id) {
                return Err(ModelError::DuplicateId { id: f.id });
            }
            if !f.x.is_finite() || !f.y.is_finite() || !f.z.is_finite() {
                return Err(ModelError::InvalidFruit {
                    id: f.id,
                    reason: format!("non-finite coordinates ({}, {}, {})", f.x, f.y, f.z),
                });
            }
            if f.y < 0.0 {
                return Err(ModelError::InvalidFruit {
                    id: f.id,
                    reason: format!("depth y = {} is negative", f.y),
                });
            }
            if f.z < 0.0 || f.z > cfg.frame_height {
                return Err(ModelError::InvalidFruit {
                    id: f.id,
                    reason: format!("z = {} outside [0, {}]", f.z, cfg.frame_height),
                });
            }
        }
        fruits.sort_by(|a, b| {
            a.x.total_cmp(&b.x)
                .then(a.z.total_cmp(&b.z))
                .then(a.id.cmp(&b.id))
        });
        let by_id = fruits.iter().enumerate().map(|(i, f)| (f.id, i)).collect();
        Ok(FruitMap { fruits, by_id })
    }

    pub fn len(&self) -> usize {
        self.fruits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fruits.is_empty()
    }

    /// Fruits in x order.
    pub fn fruits(&self) -> &[Fruit] {
        &self.fruits
    }

    pub fn get(&self, id: FruitId) -> Option<&Fruit> {
        self.by_id.get(&id).map(|&i| &self.fruits[i])
    }

    /// Parse `id,x,y,z` CSV with a header row.
    pub fn from_csv_reader<R: Read>(reader: R, cfg: &HarvesterConfig) -> Result<Self, ModelError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut fruits = Vec::new();
        for record in rdr.deserialize::<Fruit>() {
            let fruit = record.map_err(|e| ModelError::Csv {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            fruits.push(fruit);
        }
        Self::from_fruits(fruits, cfg)
    }

    /// Parse a JSON array of `{id, x, y, z}` objects.
    pub fn from_json_reader<R: Read>(reader: R, cfg: &HarvesterConfig) -> Result<Self, ModelError> {
        let fruits: Vec<Fruit> = serde_json::from_reader(reader).map_err(|e| ModelError::Json {
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::from_fruits(fruits, cfg)
    }

    /// Load a map by file extension: `.csv` or `.json`.
    pub fn load_path(path: &Path, cfg: &HarvesterConfig) -> Result<Self, ModelError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let file = BufReader::new(File::open(path)?);
        match ext {
            "csv" => Self::from_csv_reader(file, cfg),
            "json" => Self::from_json_reader(file, cfg),
            other => Err(ModelError::UnknownFormat { extension: other.to_string() }),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for fruit in &self.fruits {
            wtr.serialize(fruit).map_err(|e| ModelError::Csv { line: 0, message: e.to_string() })?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        serde_json::to_writer_pretty(writer, &self.fruits)
            .map_err(|e| ModelError::Json { line: e.line(), message: e.to_string() })
    }

    pub fn save_path(&self, path: &Path) -> Result<(), ModelError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let file = BufWriter::new(File::create(path)?);
        match ext {
            "csv" => self.write_csv(file),
            "json" => self.write_json(file),
            other => Err(ModelError::UnknownFormat { extension: other.to_string() }),
        }
    }
}

/// Errors from loading or validating model inputs.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error (line {line}): {message}")]
    Csv { line: u64, message: String },
    #[error("json error (line {line}): {message}")]
    Json { line: usize, message: String },
    #[error("unrecognized map format `.{extension}` (expected .csv or .json)")]
    UnknownFormat { extension: String },
    #[error("duplicate fruit id {id}")]
    DuplicateId { id: FruitId },
    #[error("invalid fruit {id}: {reason}")]
    InvalidFruit { id: FruitId, reason: String },
    #[error(transparent)]
    ConfigParse(#[from] ConfigParseError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        for (r, c) in [(1, 1), (2, 1), (3, 1), (3, 2), (3, 3), (3, 4)] {
            let cfg = HarvesterConfig::new(r, c);
            assert!(cfg.validate().is_empty(), "({r},{c}): {:?}", cfg.validate());
            assert_eq!(cfg.initial_arm_states.len(), (r * c) as usize);
        }
    }

    #[test]
    fn validate_flags_zero_cell_length_and_bad_state_count() {
        let mut cfg = HarvesterConfig::new(2, 1);
        cfg.cell_length = 0.0;
        cfg.initial_arm_states.pop();
        let violations = cfg.validate();
        assert!(violations.iter().any(|v| v.field == "cell_length"));
        assert!(violations.iter().any(|v| v.field == "initial_arm_states"));
    }

    #[test]
    fn validate_flags_inverted_initial_rows() {
        let mut cfg = HarvesterConfig::new(2, 1);
        cfg.initial_arm_states[1].z = cfg.initial_arm_states[0].z - 0.1;
        let violations = cfg.validate();
        assert!(violations.iter().any(|v| v.field == "initial_arm_states" && v.message.contains("strictly increase")));
    }

    #[test]
    fn cell_bounds_track_the_vehicle() {
        let cfg = HarvesterConfig::new(1, 1);
        let (rear, front) = cfg.cell_bounds(1, 0.1, 10.0);
        assert!((rear - 0.4).abs() < 1e-12);
        assert!((front - 1.0).abs() < 1e-12);
        // Width is the cell length at any time, for any cell.
        let cfg = HarvesterConfig::new(2, 3);
        for c in 1..=3 {
            let (r, f) = cfg.cell_bounds(c, 0.07, 12.3);
            assert!((f - r - cfg.cell_length).abs() < 1e-12);
        }
    }

    #[test]
    fn fruit_map_sorts_and_breaks_ties() {
        let cfg = HarvesterConfig::new(1, 1);
        let fruits = vec![
            Fruit { id: 3, x: 1.0, y: 0.1, z: 0.8 },
            Fruit { id: 1, x: 1.0, y: 0.1, z: 0.2 },
            Fruit { id: 2, x: 0.5, y: 0.1, z: 1.5 },
            Fruit { id: 0, x: 1.0, y: 0.1, z: 0.2 },
        ];
        let map = FruitMap::from_fruits(fruits, &cfg).unwrap();
        let order: Vec<FruitId> = map.fruits().iter().map(|f| f.id).collect();
        assert_eq!(order, vec![2, 0, 1, 3]);
    }

    #[test]
    fn fruit_map_rejects_bad_input() {
        let cfg = HarvesterConfig::new(1, 1);
        let dup = vec![
            Fruit { id: 1, x: 0.0, y: 0.0, z: 0.0 },
            Fruit { id: 1, x: 1.0, y: 0.0, z: 0.0 },
        ];
        assert!(matches!(FruitMap::from_fruits(dup, &cfg), Err(ModelError::DuplicateId { id: 1 })));
        let high = vec![Fruit { id: 1, x: 0.0, y: 0.0, z: 2.5 }];
        assert!(matches!(FruitMap::from_fruits(high, &cfg), Err(ModelError::InvalidFruit { .. })));
        let deep = vec![Fruit { id: 1, x: 0.0, y: -0.1, z: 0.5 }];
        assert!(matches!(FruitMap::from_fruits(deep, &cfg), Err(ModelError::InvalidFruit { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let cfg = HarvesterConfig::new(1, 1);
        let map = FruitMap::from_fruits(
            vec![
                Fruit { id: 0, x: 0.25, y: 0.05, z: 1.125 },
                Fruit { id: 1, x: 3.5, y: 0.4, z: 0.75 },
            ],
            &cfg,
        )
        .unwrap();
        let mut buf = Vec::new();
        map.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,x,y,z\n"), "unexpected header: {text}");
        let back = FruitMap::from_csv_reader(buf.as_slice(), &cfg).unwrap();
        assert_eq!(back.fruits(), map.fruits());
    }

    #[test]
    fn json_round_trip_matches_csv() {
        let cfg = HarvesterConfig::new(1, 1);
        let map = FruitMap::from_fruits(vec![Fruit { id: 7, x: 1.0, y: 0.2, z: 0.3 }], &cfg).unwrap();
        let mut buf = Vec::new();
        map.write_json(&mut buf).unwrap();
        let back = FruitMap::from_json_reader(buf.as_slice(), &cfg).unwrap();
        assert_eq!(back.fruits(), map.fruits());
    }

    #[test]
    fn csv_parse_error_names_line() {
        let cfg = HarvesterConfig::new(1, 1);
        let text = "id,x,y,z\n0,0.1,0.1,0.5\n1,not-a-number,0.1,0.5\n";
        match FruitMap::from_csv_reader(text.as_bytes(), &cfg) {
            Err(ModelError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn key_value_config_parses_and_rejects_unknown_keys() {
        let text = "# harvester\nrows = 3\ncells = 2\ndt = 0.05\npicking_duration_mode = constant\n";
        let cfg = HarvesterConfig::from_key_values(text).unwrap();
        assert_eq!((cfg.rows, cfg.cells), (3, 2));
        assert_eq!(cfg.dt, 0.05);
        assert_eq!(cfg.picking_duration_mode, PickingDurationMode::Constant);
        assert!(cfg.validate().is_empty());

        let bad = "rows = 1\ncells = 1\nwheels = 4\n";
        let err = HarvesterConfig::from_key_values(bad).unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.message.contains("wheels"));
    }

    #[test]
    fn front_clearance_follows_overridden_limits() {
        let text = "rows = 1\ncells = 1\nv_max = 2.0\na_max = 0.5\n";
        let cfg = HarvesterConfig::from_key_values(text).unwrap();
        assert!((cfg.front_clearance - 4.0).abs() < 1e-12);
    }
}
