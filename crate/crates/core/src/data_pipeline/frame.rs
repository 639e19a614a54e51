use std::path::Path;

use crate::io::{read_table, write_table, FormatError, Table};

/// Number of network input channels.
pub const INPUT_DIM: usize = 13;
/// Spacing of the synchronized grid, s.
pub const FRAME_DT: f64 = 0.005;
pub const FRAME_RATE_HZ: f64 = 200.0;

pub const FRAME_HEADER: [&str; 14] = [
    "t", "imu1_ax", "imu1_ay", "imu1_gz", "imu2_ax", "imu2_ay", "imu2_gz", "w_fl", "w_fr",
    "w_rl", "w_rr", "tq_f", "tq_r", "steer",
];
pub const EXT_COLUMNS: [&str; 2] = ["ext_vx", "ext_vy"];
pub const WHEEL_TORQUE_COLUMNS: [&str; 4] = ["tq_fl", "tq_fr", "tq_rl", "tq_rr"];

/// One synchronized 200 Hz sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorFrame {
    pub t: f64,
    /// (ax, ay, gz)
    pub imu1: [f64; 3],
    pub imu2: [f64; 3],
    /// rad/s, order fl, fr, rl, rr.
    pub wheel_omega: [f64; 4],
    /// Axle torque sums, N·m.
    pub torque_front: f64,
    pub torque_rear: f64,
    pub steering: f64,
    /// External velocity sensor (reference generation only).
    pub ext_velocity: Option<[f64; 2]>,
    /// Per-wheel torques, kept for the filter's slip map.
    pub wheel_torques: Option<[f64; 4]>,
}

impl SensorFrame {
    /// The 13 network inputs in [`FRAME_HEADER`] order.
    pub fn network_inputs(&self) -> [f64; INPUT_DIM] {
        let mut x = [0.0; INPUT_DIM];
        x[..3].copy_from_slice(&self.imu1);
        x[3..6].copy_from_slice(&self.imu2);
        x[6..10].copy_from_slice(&self.wheel_omega);
        x[10] = self.torque_front;
        x[11] = self.torque_rear;
        x[12] = self.steering;
        x
    }

    /// Per-wheel torques, splitting the axle sums evenly when they were not retained.
    pub fn per_wheel_torques(&self) -> [f64; 4] {
        self.wheel_torques.unwrap_or([
            0.5 * self.torque_front,
            0.5 * self.torque_front,
            0.5 * self.torque_rear,
            0.5 * self.torque_rear,
        ])
    }
}

pub fn frames_to_table(frames: &[SensorFrame]) -> Table {
    let with_ext = frames.iter().any(|f| f.ext_velocity.is_some());
    let with_tq = frames.iter().any(|f| f.wheel_torques.is_some());
    let mut header: Vec<&str> = FRAME_HEADER.to_vec();
    if with_ext {
        header.extend_from_slice(&EXT_COLUMNS);
    }
    if with_tq {
        header.extend_from_slice(&WHEEL_TORQUE_COLUMNS);
    }
    let mut t = Table::new(&header);
    for f in frames {
        let mut row = Vec::with_capacity(header.len());
        row.push(f.t);
        row.extend_from_slice(&f.network_inputs());
        if with_ext {
            row.extend_from_slice(&f.ext_velocity.unwrap_or([0.0; 2]));
        }
        if with_tq {
            row.extend_from_slice(&f.per_wheel_torques());
        }
        t.rows.push(row);
    }
    t
}

pub fn frames_from_table(table: &Table) -> Result<Vec<SensorFrame>, FormatError> {
    table.expect_prefix(&FRAME_HEADER)?;
    let rest: Vec<&str> = table.header[FRAME_HEADER.len()..]
        .iter()
        .map(String::as_str)
        .collect();
    let (with_ext, with_tq) = match rest.as_slice() {
        [] => (false, false),
        r if r == EXT_COLUMNS => (true, false),
        r if r == WHEEL_TORQUE_COLUMNS => (false, true),
        r if r.len() == 6 && r[..2] == EXT_COLUMNS && r[2..] == WHEEL_TORQUE_COLUMNS => {
            (true, true)
        }
        _ => {
            return Err(FormatError::Header {
                expected: format!(
                    "{}[,{}][,{}]",
                    FRAME_HEADER.join(","),
                    EXT_COLUMNS.join(","),
                    WHEEL_TORQUE_COLUMNS.join(",")
                ),
                found: table.header.join(","),
            })
        }
    };
    let mut frames = Vec::with_capacity(table.rows.len());
    for r in &table.rows {
        let mut c = FRAME_HEADER.len();
        let ext_velocity = with_ext.then(|| {
            c += 2;
            [r[c - 2], r[c - 1]]
        });
        let wheel_torques = with_tq.then(|| [r[c], r[c + 1], r[c + 2], r[c + 3]]);
        frames.push(SensorFrame {
            t: r[0],
            imu1: [r[1], r[2], r[3]],
            imu2: [r[4], r[5], r[6]],
            wheel_omega: [r[7], r[8], r[9], r[10]],
            torque_front: r[11],
            torque_rear: r[12],
            steering: r[13],
            ext_velocity,
            wheel_torques,
        });
    }
    check_grid(&frames)?;
    Ok(frames)
}

/// Frames must sit on the 5 ms grid in strictly increasing order.
pub fn check_grid(frames: &[SensorFrame]) -> Result<(), FormatError> {
    for (i, f) in frames.iter().enumerate() {
        let ticks = f.t / FRAME_DT;
        if (ticks - ticks.round()).abs() > 1e-6 {
            return Err(FormatError::BadField {
                row: i + 1,
                column: "t".into(),
                reason: format!("{} is not on the 5 ms grid", f.t),
            });
        }
        if i > 0 && !(f.t > frames[i - 1].t) {
            return Err(FormatError::BadField {
                row: i + 1,
                column: "t".into(),
                reason: "timestamps must be strictly increasing".into(),
            });
        }
    }
    Ok(())
}

pub fn write_frames(path: &Path, frames: &[SensorFrame]) -> Result<(), FormatError> {
    let f = std::fs::File::create(path)?;
    write_table(std::io::BufWriter::new(f), &frames_to_table(frames))
}

pub fn read_frames(path: &Path) -> Result<Vec<SensorFrame>, FormatError> {
    let f = std::fs::File::open(path)?;
    frames_from_table(&read_table(std::io::BufReader::new(f))?)
}
