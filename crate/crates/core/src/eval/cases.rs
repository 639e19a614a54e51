use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::estimators::{run_mkf, run_network};
use super::metrics::{rmse, EVAL_WARMUP};
use super::track::truth_states_at;
use super::EvalError;
use crate::data_pipeline::{smooth_estimates, truth_estimate, Dataset, TARGET_SMOOTHER_SIGMA};
use crate::gru_net::Checkpoint;
use crate::io::{write_table, FormatError, KeyValues, Table};
use crate::mkf::{FilterMode, StateEstimate};
use crate::vehicle_sim::{
    rear_axle_sideslip, simulate, wheel_kinematics, GroundTruthState, ScenarioConfig,
    ScenarioKind, ScenarioOutput, SensorId, SurfaceClass,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseId {
    BiasCalibration,
    Launch,
    HighSlip,
    Outlier,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::BiasCalibration, CaseId::Launch, CaseId::HighSlip, CaseId::Outlier];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::BiasCalibration => "bias_calibration",
            CaseId::Launch => "launch",
            CaseId::HighSlip => "high_slip",
            CaseId::Outlier => "outlier",
        }
    }

    fn scenario(self) -> ScenarioKind {
        match self {
            CaseId::BiasCalibration => ScenarioKind::Standstill,
            CaseId::Launch => ScenarioKind::Launch,
            CaseId::HighSlip => ScenarioKind::HighSlipCorner,
            CaseId::Outlier => ScenarioKind::ImuFreezeLap,
        }
    }

    fn default_duration(self) -> f64 {
        match self {
            // One warm-up second plus ten seconds of standstill estimates.
            CaseId::BiasCalibration => 11.0,
            CaseId::Launch => 20.0,
            CaseId::HighSlip => 30.0,
            CaseId::Outlier => 60.0,
        }
    }

    pub fn criterion(self) -> &'static str {
        match self {
            CaseId::BiasCalibration => {
                "reference-mode |mean velocity| < 0.01 m/s and network |mean accel| < 0.05 m/s^2 at standstill"
            }
            CaseId::Launch => "network vx rmse in the slip window <= 2 x reference-mode filter vx rmse",
            CaseId::HighSlip => "network vy rmse <= 1/3 of baseline vy rmse while moving",
            CaseId::Outlier => "network and baseline filter ay rmse after the IMU-2 freeze <= 2 x before",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| EvalError::Invalid(format!("unknown case `{s}`")))
    }
}

pub const BIAS_DRIFT_LIMIT: f64 = 0.01;
pub const BIAS_ACCEL_LIMIT: f64 = 0.05;
pub const LAUNCH_RATIO_LIMIT: f64 = 2.0;
pub const HIGH_SLIP_RATIO_LIMIT: f64 = 1.0 / 3.0;
pub const OUTLIER_RATIO_LIMIT: f64 = 2.0;
/// Wheel slip ratio above which a launch frame counts as slipping.
pub const SLIP_WINDOW_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub seed: u64,
    /// Scenario length; `None` uses the case's default.
    pub duration: Option<f64>,
    pub surface: SurfaceClass,
    pub warmup: usize,
    /// Accelerometer bias put on both axes of both IMUs in the bias case, m/s².
    pub injected_bias: f64,
    /// Outlier case only: whether IMU-2 actually freezes.
    pub freeze: bool,
}

impl Default for CaseConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            duration: None,
            surface: SurfaceClass::Flat,
            warmup: EVAL_WARMUP,
            injected_bias: 0.2,
            freeze: true,
        }
    }
}

/// Aligned per-frame series of one case run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CaseSeries {
    pub t: Vec<f64>,
    /// Frames the criterion is evaluated on.
    pub in_window: Vec<bool>,
    pub truth: Vec<StateEstimate>,
    pub reference: Vec<StateEstimate>,
    pub reference_mkf: Vec<StateEstimate>,
    pub baseline: Vec<StateEstimate>,
    pub network: Vec<StateEstimate>,
}

impl CaseSeries {
    pub fn to_table(&self) -> Table {
        let mut header = vec!["t".to_string(), "in_window".to_string()];
        for src in ["truth", "reference", "reference_mkf", "baseline", "network"] {
            for s in ["vx", "vy", "yawrate", "ax", "ay"] {
                header.push(format!("{src}_{s}"));
            }
        }
        let mut t = Table {
            header,
            rows: Vec::with_capacity(self.t.len()),
        };
        for k in 0..self.t.len() {
            let mut row = vec![self.t[k], self.in_window[k] as u8 as f64];
            for src in [&self.truth, &self.reference, &self.reference_mkf, &self.baseline, &self.network] {
                row.extend(src[k].to_array());
            }
            t.rows.push(row);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyResult {
    pub case: CaseId,
    pub criterion: String,
    pub passed: bool,
    pub summary: Vec<(String, f64)>,
    pub series: CaseSeries,
}

impl CaseStudyResult {
    pub fn value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("case", self.case);
        kv.set("criterion", &self.criterion);
        kv.set("passed", self.passed);
        for (k, v) in &self.summary {
            kv.set(k, v);
        }
        kv
    }

    /// Summary as key=value text at `path`, series as CSV next to it (`.csv` extension).
    pub fn write_report(&self, path: &Path) -> Result<(), FormatError> {
        std::fs::write(path, self.to_kv().to_text())?;
        let f = std::fs::File::create(path.with_extension("csv"))?;
        write_table(std::io::BufWriter::new(f), &self.series.to_table())
    }
}

/// Runs the case's scenario, every estimator, and checks the case criterion. All
/// scoring is against simulator truth with the first `warmup` frames excluded.
pub fn run_case_study(
    case: CaseId,
    checkpoint: Option<&Checkpoint>,
    config: &CaseConfig,
) -> Result<CaseStudyResult, EvalError> {
    let ck = checkpoint.ok_or_else(|| EvalError::MissingCheckpoint(case.name().to_string()))?;
    let duration = config.duration.unwrap_or(case.default_duration());
    let mut scen = ScenarioConfig::new(case.scenario(), duration, config.seed).with_surface(config.surface);
    let mut plan = scen.resolved_plan();
    match case {
        CaseId::BiasCalibration => {
            for b in &mut plan.imu_bias {
                b.ax = config.injected_bias;
                b.ay = config.injected_bias;
            }
        }
        CaseId::Outlier if !config.freeze => plan.freeze_events.clear(),
        _ => {}
    }
    scen = scen.with_plan(plan);
    let out = simulate(&scen)?;
    let ds = Dataset::from_scenario(&out, false)?;
    let truth_states = truth_states_at(&ds.frames, &out.trajectory)?;
    let reference_mkf = run_mkf(&ds, FilterMode::Reference)?;
    let mut series = CaseSeries {
        t: ds.frames.iter().map(|f| f.t).collect(),
        in_window: Vec::new(),
        truth: truth_states.iter().map(truth_estimate).collect(),
        reference: smooth_estimates(&reference_mkf, TARGET_SMOOTHER_SIGMA),
        baseline: run_mkf(&ds, FilterMode::Baseline)?,
        network: run_network(ck, &ds),
        reference_mkf,
    };
    let w = config.warmup;
    let (passed, summary) = match case {
        CaseId::BiasCalibration => {
            series.in_window = (0..series.t.len()).map(|k| k >= w).collect();
            bias_case(&series, config.injected_bias)?
        }
        CaseId::Launch => {
            series.in_window = slip_window(&out, &truth_states, w);
            launch_case(&series)?
        }
        CaseId::HighSlip => {
            series.in_window = truth_states
                .iter()
                .enumerate()
                .map(|(k, s)| k >= w && s.vx > 3.0)
                .collect();
            high_slip_case(&series, &out, &truth_states)?
        }
        CaseId::Outlier => {
            let t_split = out
                .plan
                .freeze_events
                .iter()
                .find(|e| e.sensor == SensorId::Imu2)
                .map_or(0.5 * duration, |e| e.t_start);
            series.in_window = (0..series.t.len()).map(|k| k >= w).collect();
            outlier_case(&series, t_split)?
        }
    };
    Ok(CaseStudyResult {
        case,
        criterion: case.criterion().to_string(),
        passed,
        summary,
        series,
    })
}

fn windowed(series: &[StateEstimate], mask: &[bool], f: fn(&StateEstimate) -> f64) -> Vec<f64> {
    series
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(s, _)| f(s))
        .collect()
}

fn mean(v: &[f64]) -> Result<f64, EvalError> {
    if v.is_empty() {
        return Err(EvalError::NoSamples);
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

fn window_rmse(est: &[StateEstimate], truth: &[StateEstimate], mask: &[bool], f: fn(&StateEstimate) -> f64) -> Result<f64, EvalError> {
    rmse(&windowed(est, mask, f), &windowed(truth, mask, f))
}

type Outcome = (bool, Vec<(String, f64)>);

fn bias_case(s: &CaseSeries, bias: f64) -> Result<Outcome, EvalError> {
    let m = &s.in_window;
    let mvx = mean(&windowed(&s.reference_mkf, m, |e| e.vx))?;
    let mvy = mean(&windowed(&s.reference_mkf, m, |e| e.vy))?;
    let nax = mean(&windowed(&s.network, m, |e| e.ax))?;
    let nay = mean(&windowed(&s.network, m, |e| e.ay))?;
    let drift = mvx.abs().max(mvy.abs());
    let accel = nax.abs().max(nay.abs());
    Ok((
        drift < BIAS_DRIFT_LIMIT && accel < BIAS_ACCEL_LIMIT,
        vec![
            ("injected_bias".into(), bias),
            ("reference_mkf_mean_vx".into(), mvx),
            ("reference_mkf_mean_vy".into(), mvy),
            ("reference_mkf_drift".into(), drift),
            ("baseline_mean_ax".into(), mean(&windowed(&s.baseline, m, |e| e.ax))?),
            ("baseline_mean_ay".into(), mean(&windowed(&s.baseline, m, |e| e.ay))?),
            ("network_mean_ax".into(), nax),
            ("network_mean_ay".into(), nay),
            ("network_accel_mean".into(), accel),
        ],
    ))
}

/// Frames after warm-up where any wheel slips by at least [`SLIP_WINDOW_THRESHOLD`].
fn slip_window(out: &ScenarioOutput, truth: &[GroundTruthState], warmup: usize) -> Vec<bool> {
    let p = &out.trajectory.params;
    truth
        .iter()
        .enumerate()
        .map(|(k, s)| {
            k >= warmup
                && s.vx > 1.0
                && (0..4).any(|i| wheel_kinematics(s, 0.0, p, i).slip_ratio.abs() >= SLIP_WINDOW_THRESHOLD)
        })
        .collect()
}

fn launch_case(s: &CaseSeries) -> Result<Outcome, EvalError> {
    let m = &s.in_window;
    let vx = |e: &StateEstimate| e.vx;
    let net = window_rmse(&s.network, &s.truth, m, vx)?;
    let refm = window_rmse(&s.reference_mkf, &s.truth, m, vx)?;
    let smoothed = window_rmse(&s.reference, &s.truth, m, vx)?;
    let base = window_rmse(&s.baseline, &s.truth, m, vx)?;
    let window_s = m.iter().filter(|&&b| b).count() as f64 * crate::data_pipeline::FRAME_DT;
    Ok((
        net <= LAUNCH_RATIO_LIMIT * refm,
        vec![
            ("window_seconds".into(), window_s),
            ("network_vx_rmse".into(), net),
            ("reference_mkf_vx_rmse".into(), refm),
            ("reference_vx_rmse".into(), smoothed),
            ("baseline_vx_rmse".into(), base),
            ("ratio_to_reference_mkf".into(), net / refm),
        ],
    ))
}

fn high_slip_case(s: &CaseSeries, out: &ScenarioOutput, truth: &[GroundTruthState]) -> Result<Outcome, EvalError> {
    let m = &s.in_window;
    let vy = |e: &StateEstimate| e.vy;
    let net = window_rmse(&s.network, &s.truth, m, vy)?;
    let base = window_rmse(&s.baseline, &s.truth, m, vy)?;
    let refm = window_rmse(&s.reference_mkf, &s.truth, m, vy)?;
    let p = &out.trajectory.params;
    let max_beta = truth
        .iter()
        .filter(|t| t.vx > 3.0)
        .map(|t| rear_axle_sideslip(t, p).abs())
        .fold(0.0, f64::max);
    Ok((
        net <= HIGH_SLIP_RATIO_LIMIT * base,
        vec![
            ("max_rear_sideslip_deg".into(), max_beta.to_degrees()),
            ("network_vy_rmse".into(), net),
            ("baseline_vy_rmse".into(), base),
            ("reference_mkf_vy_rmse".into(), refm),
            ("ratio_to_baseline".into(), net / base),
        ],
    ))
}

fn outlier_case(s: &CaseSeries, t_split: f64) -> Result<Outcome, EvalError> {
    let pre: Vec<bool> = s.in_window.iter().zip(&s.t).map(|(&w, &t)| w && t < t_split).collect();
    let post: Vec<bool> = s.in_window.iter().zip(&s.t).map(|(&w, &t)| w && t >= t_split).collect();
    let ay = |e: &StateEstimate| e.ay;
    let mkf_pre = window_rmse(&s.baseline, &s.truth, &pre, ay)?;
    let mkf_post = window_rmse(&s.baseline, &s.truth, &post, ay)?;
    let net_pre = window_rmse(&s.network, &s.truth, &pre, ay)?;
    let net_post = window_rmse(&s.network, &s.truth, &post, ay)?;
    let (mkf_ratio, net_ratio) = (mkf_post / mkf_pre, net_post / net_pre);
    Ok((
        mkf_ratio <= OUTLIER_RATIO_LIMIT && net_ratio <= OUTLIER_RATIO_LIMIT,
        vec![
            ("freeze_time".into(), t_split),
            ("baseline_ay_rmse_pre".into(), mkf_pre),
            ("baseline_ay_rmse_post".into(), mkf_post),
            ("baseline_ratio".into(), mkf_ratio),
            ("network_ay_rmse_pre".into(), net_pre),
            ("network_ay_rmse_post".into(), net_post),
            ("network_ratio".into(), net_ratio),
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_pipeline::{NormStats, INPUT_DIM, OUTPUT_DIM};
    use crate::gru_net::GruNetwork;

    fn tiny_checkpoint() -> Checkpoint {
        Checkpoint {
            net: GruNetwork::new(INPUT_DIM, &[4], OUTPUT_DIM, 0.0, 0.01, 1).unwrap(),
            norm: NormStats::identity(),
            warmup_steps: 200,
        }
    }

    /// Network that ignores its inputs and always outputs zero.
    fn zero_checkpoint() -> Checkpoint {
        let mut ck = tiny_checkpoint();
        ck.net.w_out.fill(0.0);
        ck.net.b_out.fill(0.0);
        ck
    }

    #[test]
    fn names_round_trip_and_checkpoint_required() {
        for c in CaseId::ALL {
            assert_eq!(c.name().parse::<CaseId>().unwrap(), c);
        }
        assert!("donuts".parse::<CaseId>().is_err());
        assert!(matches!(
            run_case_study(CaseId::Launch, None, &CaseConfig::default()),
            Err(EvalError::MissingCheckpoint(_))
        ));
    }

    #[test]
    fn zero_bias_standstill_passes_with_a_still_network() {
        let cfg = CaseConfig {
            injected_bias: 0.0,
            ..CaseConfig::default()
        };
        let r = run_case_study(CaseId::BiasCalibration, Some(&zero_checkpoint()), &cfg).unwrap();
        assert!(r.passed, "{:?}", r.summary);
        assert_eq!(r.value("network_accel_mean"), Some(0.0));
        assert_eq!(r.series.t.len(), r.series.network.len());
    }

    #[test]
    fn injected_bias_does_not_make_the_reference_filter_drift() {
        let r = run_case_study(CaseId::BiasCalibration, Some(&zero_checkpoint()), &CaseConfig::default()).unwrap();
        assert!(r.value("reference_mkf_drift").unwrap() < BIAS_DRIFT_LIMIT, "{:?}", r.summary);
        assert!(r.passed);
    }

    #[test]
    fn outlier_without_freeze_has_ratio_near_one() {
        let cfg = CaseConfig {
            freeze: false,
            ..CaseConfig::default()
        };
        let r = run_case_study(CaseId::Outlier, Some(&tiny_checkpoint()), &cfg).unwrap();
        let ratio = r.value("baseline_ratio").unwrap();
        assert!((0.6..1.6).contains(&ratio), "{ratio}");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("outlier.txt");
        r.write_report(&path).unwrap();
        let kv = KeyValues::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(kv.get("case"), Some("outlier"));
        assert!(dir.path().join("outlier.csv").exists());
    }

    #[test]
    fn untrained_network_fails_high_slip() {
        let r = run_case_study(CaseId::HighSlip, Some(&zero_checkpoint()), &CaseConfig::default()).unwrap();
        assert!(!r.passed);
        assert!(r.value("max_rear_sideslip_deg").unwrap() >= 8.0);
        assert!(r.series.in_window.iter().any(|&b| b));
    }

    #[test]
    fn launch_window_covers_the_slipping_phase() {
        let r = run_case_study(CaseId::Launch, Some(&zero_checkpoint()), &CaseConfig::default()).unwrap();
        let w = r.value("window_seconds").unwrap();
        assert!(w > 0.3 && w < 10.0, "{w}");
        assert!(!r.passed);
    }
}
