use std::path::Path;

use super::EvalError;
use crate::data_pipeline::{build_splits, Dataset, ScenarioEntry, SplitTag, DEFAULT_SPLIT_WEIGHTS};
use crate::io::FormatError;
use crate::vehicle_sim::{simulate, ScenarioConfig, ScenarioKind, SurfaceClass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteEntry {
    pub kind: ScenarioKind,
    pub surface: SurfaceClass,
    pub duration: f64,
    pub seed: u64,
    pub split: SplitTag,
}

/// Desk-scale evaluation suite: about 20 simulated minutes over all four surface classes.
/// Every split holds every class; the test split has a launch and a high-slip corner, and
/// training sees every manoeuvre including IMU freezes.
pub fn default_suite(seed: u64) -> Vec<SuiteEntry> {
    use ScenarioKind::*;
    use SplitTag::*;
    use SurfaceClass::*;
    let plan: [(ScenarioKind, SurfaceClass, f64, SplitTag); 23] = [
        (TrackLap, Wet, 100.0, Train),
        (TrackLap, Gravel, 100.0, Train),
        (TrackLap, Wet, 100.0, Train),
        (ImuFreezeLap, Flat, 100.0, Train),
        (ImuFreezeLap, Bumpy, 100.0, Train),
        (Slalom, Bumpy, 60.0, Train),
        (HighSlipCorner, Flat, 30.0, Train),
        (HighSlipCorner, Gravel, 30.0, Train),
        (HighSlipCorner, Wet, 30.0, Train),
        (Launch, Flat, 20.0, Train),
        (Launch, Gravel, 20.0, Train),
        (Launch, Bumpy, 20.0, Train),
        (Launch, Wet, 20.0, Train),
        (Standstill, Flat, 15.0, Train),
        (Standstill, Bumpy, 15.0, Train),
        (Launch, Flat, 20.0, Test),
        (HighSlipCorner, Gravel, 30.0, Test),
        (TrackLap, Bumpy, 100.0, Test),
        (TrackLap, Wet, 100.0, Test),
        (TrackLap, Flat, 100.0, Validation),
        (Slalom, Gravel, 60.0, Validation),
        (HighSlipCorner, Bumpy, 30.0, Validation),
        (Launch, Wet, 20.0, Validation),
    ];
    plan.iter()
        .enumerate()
        .map(|(i, &(kind, surface, duration, split))| SuiteEntry {
            kind,
            surface,
            duration,
            seed: seed * 1000 + i as u64,
            split,
        })
        .collect()
}

pub fn suite_minutes(entries: &[SuiteEntry]) -> f64 {
    entries.iter().map(|e| e.duration).sum::<f64>() / 60.0
}

/// Simulates every entry and builds datasets with reference targets, tagged with the
/// entry's split.
pub fn build_suite(entries: &[SuiteEntry]) -> Result<Vec<Dataset>, EvalError> {
    let mut sets = Vec::with_capacity(entries.len());
    for e in entries {
        let cfg = ScenarioConfig::new(e.kind, e.duration, e.seed).with_surface(e.surface);
        let out = simulate(&cfg)?;
        let mut ds = Dataset::from_scenario(&out, true)?;
        ds.split = Some(e.split);
        sets.push(ds);
    }
    Ok(sets)
}

/// Tags untagged collections train/test/validation by surface-stratified whole-scenario
/// splits.
pub fn assign_splits(sets: &mut [Dataset]) -> Result<(), EvalError> {
    let entries: Vec<ScenarioEntry> = sets
        .iter()
        .map(|d| ScenarioEntry {
            id: d.id(),
            surface: d.provenance.surface.clone(),
            duration: d.duration(),
        })
        .collect();
    let splits = build_splits(&entries, DEFAULT_SPLIT_WEIGHTS)?;
    for d in sets.iter_mut() {
        d.split = splits.tag_of(&d.id());
    }
    Ok(())
}

pub fn split_of(sets: &[Dataset], tag: SplitTag) -> Vec<&Dataset> {
    sets.iter().filter(|d| d.split == Some(tag)).collect()
}

/// Writes each dataset to `root/<id>/`.
pub fn write_suite(root: &Path, sets: &[Dataset]) -> Result<(), FormatError> {
    for d in sets {
        d.write_dir(&root.join(d.id()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_shape() {
        let s = default_suite(1);
        assert!(suite_minutes(&s) >= 20.0);
        for k in [ScenarioKind::Launch, ScenarioKind::HighSlipCorner, ScenarioKind::TrackLap] {
            assert!(s.iter().any(|e| e.kind == k));
        }
        for c in SurfaceClass::ALL {
            assert!(s.iter().filter(|e| e.surface == c).count() >= 3);
        }
        let mut seeds: Vec<_> = s.iter().map(|e| e.seed).collect();
        seeds.dedup();
        assert_eq!(seeds.len(), s.len());
        for tag in SplitTag::ALL {
            for c in SurfaceClass::ALL {
                assert!(s.iter().any(|e| e.split == tag && e.surface == c), "{tag} lacks {c}");
            }
        }
        let test: Vec<_> = s.iter().filter(|e| e.split == SplitTag::Test).map(|e| e.kind).collect();
        assert!(test.contains(&ScenarioKind::Launch) && test.contains(&ScenarioKind::HighSlipCorner));
        for k in ScenarioKind::ALL {
            assert!(s.iter().any(|e| e.split == SplitTag::Train && e.kind == k), "{k}");
        }
    }
}
