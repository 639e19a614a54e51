use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::io::{read_table, write_table, FormatError, KeyValues, Table};
use crate::mkf::{MkfConfig, StateEstimate, ESTIMATE_HEADER};
use crate::vehicle_sim::{
    GroundTruthState, NoiseSigmas, RawSensorStream, ScenarioOutput, Trajectory, VehicleParams,
};

use super::frame::{read_frames, write_frames, SensorFrame, FRAME_DT};
use super::smoother::{generate_target, TARGET_SMOOTHER_SIGMA};
use super::sync::sync_200hz;
use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitTag {
    Train,
    Test,
    Validation,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Test, SplitTag::Validation];

    pub fn name(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Test => "test",
            Self::Validation => "validation",
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitTag {
    type Err = FormatError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| FormatError::Invalid(format!("unknown split `{s}`")))
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub scenario: String,
    pub seed: u64,
    pub surface: String,
    pub grip: f64,
}

impl Provenance {
    pub fn from_manifest(kv: &KeyValues) -> Result<Self, FormatError> {
        Ok(Self {
            scenario: kv.get("scenario").unwrap_or("unknown").to_string(),
            seed: kv.parse_or("seed", 0)?,
            surface: kv.get("surface").unwrap_or("flat").to_string(),
            grip: kv.parse_or("grip", 1.0)?,
        })
    }

    /// Stable identifier, e.g. `track_lap-7`.
    pub fn id(&self) -> String {
        format!("{}-{}", self.scenario, self.seed)
    }
}

/// Synchronized frames with optional targets and ground truth, all on the same timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<SensorFrame>,
    pub targets: Option<Vec<StateEstimate>>,
    /// Simulator truth, when the data came from the simulator.
    pub truth: Option<Vec<StateEstimate>>,
    pub split: Option<SplitTag>,
    pub provenance: Provenance,
    /// Scenario manifest (vehicle parameters, biases, freeze events, ...).
    pub manifest: KeyValues,
}

pub fn truth_estimate(s: &GroundTruthState) -> StateEstimate {
    StateEstimate::new(s.vx, s.vy, s.yaw_rate, s.ax, s.ay)
}

/// Truth states at the frame timestamps (the simulator logs truth on the same grid).
pub fn align_truth(frames: &[SensorFrame], traj: &Trajectory) -> Result<Vec<StateEstimate>, PipelineError> {
    let t0 = traj.states.first().map_or(0.0, |s| s.time);
    frames
        .iter()
        .map(|f| {
            let k = ((f.t - t0) / FRAME_DT).round();
            traj.states
                .get(k as usize)
                .filter(|s| k >= 0.0 && (s.time - f.t).abs() < 1e-6)
                .map(truth_estimate)
                .ok_or(PipelineError::Misaligned(f.t))
        })
        .collect()
}

/// Filter configuration matching a scenario manifest's vehicle, sensor mounting and
/// sensor noise. Measurement variances scale with the recorded noise relative to the
/// nominal sensors the defaults were tuned for; explicit `r_*` keys take precedence.
pub fn mkf_config_for_manifest(kv: &KeyValues) -> Result<MkfConfig, PipelineError> {
    let mut c = MkfConfig::from_kv(kv)?;
    c.ext_sensor_offset = [
        kv.parse_or("velocity_sensor_px", c.ext_sensor_offset[0])?,
        kv.parse_or("velocity_sensor_py", c.ext_sensor_offset[1])?,
    ];
    let nominal = NoiseSigmas::default();
    let ratio2 = |key: &str, nominal: f64| -> Result<f64, FormatError> {
        Ok((kv.parse_or(key, nominal)? / nominal).powi(2))
    };
    let n = &mut c.noise;
    let k_accel = ratio2("noise_accel", nominal.accel)?;
    let k_gyro = ratio2("noise_gyro", nominal.gyro)?;
    for i in 0..2 {
        if !kv.contains(&format!("r_imu{}_accel", i + 1)) {
            n.r_accel[i] *= k_accel;
        }
        if !kv.contains(&format!("r_imu{}_gyro", i + 1)) {
            n.r_gyro[i] *= k_gyro;
        }
    }
    if !kv.contains("r_wheel_velocity") {
        n.r_wheel_velocity *= ratio2("noise_wheel_speed", nominal.wheel_speed)?;
    }
    if !kv.contains("r_ext_velocity") {
        n.r_ext_velocity *= ratio2("noise_velocity", nominal.velocity)?;
    }
    c.validate()?;
    Ok(c)
}

impl Dataset {
    pub fn new(frames: Vec<SensorFrame>, targets: Option<Vec<StateEstimate>>) -> Self {
        Self {
            frames,
            targets,
            truth: None,
            split: None,
            provenance: Provenance::default(),
            manifest: KeyValues::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn id(&self) -> String {
        self.provenance.id()
    }

    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 * FRAME_DT
    }

    /// Synchronizes a simulated run and optionally builds smoothed reference targets.
    pub fn from_scenario(out: &ScenarioOutput, with_targets: bool) -> Result<Self, PipelineError> {
        Self::from_parts(&out.raw, Some(&out.trajectory), out.manifest(), with_targets)
    }

    pub fn from_parts(
        raw: &RawSensorStream,
        truth: Option<&Trajectory>,
        manifest: KeyValues,
        with_targets: bool,
    ) -> Result<Self, PipelineError> {
        let frames = sync_200hz(raw)?;
        let truth = truth.map(|t| align_truth(&frames, t)).transpose()?;
        let targets = if with_targets {
            let config = mkf_config_for_manifest(&manifest)?;
            Some(generate_target(&frames, &config, TARGET_SMOOTHER_SIGMA)?)
        } else {
            None
        };
        Ok(Self {
            provenance: Provenance::from_manifest(&manifest)?,
            frames,
            targets,
            truth,
            split: None,
            manifest,
        })
    }

    /// Reads a simulator output directory (sensor CSVs, optional `truth.csv`, `manifest.txt`).
    pub fn from_raw_dir(dir: &Path, with_targets: bool) -> Result<Self, PipelineError> {
        let raw = RawSensorStream::read_dir(dir)?;
        let manifest = read_manifest(&dir.join("manifest.txt"))?;
        let truth_path = dir.join("truth.csv");
        let truth = if truth_path.exists() {
            let params = VehicleParams::from_kv(&manifest, "vehicle.")?;
            let table = read_table_file(&truth_path)?;
            Some(Trajectory::from_table(&table, params)?)
        } else {
            None
        };
        Self::from_parts(&raw, truth.as_ref(), manifest, with_targets)
    }

    /// Writes `frames.csv`, `manifest.txt` and, when present, `targets.csv` and `truth.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), FormatError> {
        std::fs::create_dir_all(dir)?;
        write_frames(&dir.join("frames.csv"), &self.frames)?;
        if let Some(t) = &self.targets {
            write_state_file(&dir.join("targets.csv"), &self.frames, t)?;
        }
        if let Some(t) = &self.truth {
            write_state_file(&dir.join("truth.csv"), &self.frames, t)?;
        }
        let mut kv = self.manifest.clone();
        if let Some(s) = self.split {
            kv.set("split", s);
        }
        std::fs::write(dir.join("manifest.txt"), kv.to_text())?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, FormatError> {
        let frames = read_frames(&dir.join("frames.csv"))?;
        let manifest_path = dir.join("manifest.txt");
        let manifest = if manifest_path.exists() {
            read_manifest(&manifest_path)?
        } else {
            KeyValues::new()
        };
        let load = |name: &str| -> Result<Option<Vec<StateEstimate>>, FormatError> {
            let p = dir.join(name);
            if !p.exists() {
                return Ok(None);
            }
            let (times, states) = states_from_table(&read_table_file(&p)?)?;
            if times.len() != frames.len()
                || times.iter().zip(&frames).any(|(t, f)| (t - f.t).abs() > 1e-6)
            {
                return Err(FormatError::Invalid(format!(
                    "{name} timestamps do not match frames.csv"
                )));
            }
            Ok(Some(states))
        };
        Ok(Self {
            targets: load("targets.csv")?,
            truth: load("truth.csv")?,
            split: manifest.parse_opt("split")?,
            provenance: Provenance::from_manifest(&manifest)?,
            frames,
            manifest,
        })
    }
}

fn read_table_file(path: &Path) -> Result<Table, FormatError> {
    let f = std::fs::File::open(path)?;
    read_table(std::io::BufReader::new(f))
}

pub fn read_manifest(path: &Path) -> Result<KeyValues, FormatError> {
    KeyValues::parse(&std::fs::read_to_string(path)?)
}

/// `t,vx,vy,yawrate,ax,ay` rows.
pub fn states_to_table(frames: &[SensorFrame], states: &[StateEstimate]) -> Table {
    let mut t = Table::new(&ESTIMATE_HEADER);
    for (f, s) in frames.iter().zip(states) {
        let mut row = vec![f.t];
        row.extend(s.to_array());
        t.rows.push(row);
    }
    t
}

pub fn states_from_table(table: &Table) -> Result<(Vec<f64>, Vec<StateEstimate>), FormatError> {
    table.expect_exact(&ESTIMATE_HEADER)?;
    Ok(table
        .rows
        .iter()
        .map(|r| (r[0], StateEstimate::new(r[1], r[2], r[3], r[4], r[5])))
        .unzip())
}

pub fn write_state_file(path: &Path, frames: &[SensorFrame], states: &[StateEstimate]) -> Result<(), FormatError> {
    let f = std::fs::File::create(path)?;
    write_table(std::io::BufWriter::new(f), &states_to_table(frames, states))
}

/// Every subdirectory of `root` holding a `frames.csv`, in name order.
pub fn read_collection(root: &Path) -> Result<Vec<Dataset>, FormatError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("frames.csv").is_file())
        .collect();
    if root.join("frames.csv").is_file() {
        dirs.push(root.to_path_buf());
    }
    dirs.sort();
    dirs.iter().map(|d| Dataset::read_dir(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle_sim::{simulate, ScenarioConfig, ScenarioKind};

    #[test]
    fn simulated_run_round_trips_through_disk() {
        let out = simulate(&ScenarioConfig::new(ScenarioKind::Slalom, 6.0, 2)).unwrap();
        let mut ds = Dataset::from_scenario(&out, true).unwrap();
        ds.split = Some(SplitTag::Test);
        let targets = ds.targets.as_ref().unwrap();
        let truth = ds.truth.as_ref().unwrap();
        assert_eq!(targets.len(), ds.frames.len());
        assert_eq!(truth.len(), ds.frames.len());
        assert_eq!(ds.id(), "slalom-2");

        let dir = tempfile::tempdir().unwrap();
        ds.write_dir(dir.path()).unwrap();
        let back = Dataset::read_dir(dir.path()).unwrap();
        assert_eq!(back.split, Some(SplitTag::Test));
        assert_eq!(back.frames, ds.frames);
        assert_eq!(back.targets, ds.targets);
        assert_eq!(back.provenance, ds.provenance);

        // The raw directory path gives the same dataset.
        let raw_dir = tempfile::tempdir().unwrap();
        out.write_dir(raw_dir.path()).unwrap();
        let from_raw = Dataset::from_raw_dir(raw_dir.path(), true).unwrap();
        assert_eq!(from_raw.frames, ds.frames);
        for (a, b) in from_raw.targets.unwrap().iter().zip(targets) {
            assert!((a.vx - b.vx).abs() < 1e-9 && (a.vy - b.vy).abs() < 1e-9);
        }
    }

    #[test]
    fn collection_reads_subdirectories_in_order() {
        let root = tempfile::tempdir().unwrap();
        for (name, seed) in [("b", 2u64), ("a", 1)] {
            let out = simulate(&ScenarioConfig::new(ScenarioKind::Standstill, 3.0, seed)).unwrap();
            Dataset::from_scenario(&out, false)
                .unwrap()
                .write_dir(&root.path().join(name))
                .unwrap();
        }
        let all = read_collection(root.path()).unwrap();
        assert_eq!(all.iter().map(|d| d.provenance.seed).collect::<Vec<_>>(), vec![1, 2]);
    }
}
