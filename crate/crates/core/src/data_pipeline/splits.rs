use std::collections::BTreeMap;

use super::dataset::SplitTag;
use super::PipelineError;

/// Relative split sizes (train, test, validation).
pub const DEFAULT_SPLIT_WEIGHTS: [usize; 3] = [11, 3, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEntry {
    pub id: String,
    pub surface: String,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub validation: Vec<String>,
}

impl Splits {
    pub fn get(&self, tag: SplitTag) -> &[String] {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Test => &self.test,
            SplitTag::Validation => &self.validation,
        }
    }

    fn get_mut(&mut self, tag: SplitTag) -> &mut Vec<String> {
        match tag {
            SplitTag::Train => &mut self.train,
            SplitTag::Test => &mut self.test,
            SplitTag::Validation => &mut self.validation,
        }
    }

    pub fn tag_of(&self, id: &str) -> Option<SplitTag> {
        SplitTag::ALL
            .into_iter()
            .find(|&t| self.get(t).iter().any(|x| x == id))
    }
}

/// Largest-remainder apportionment of `n` items by `weights`.
fn apportion(n: usize, weights: [usize; 3]) -> [usize; 3] {
    let total: usize = weights.iter().sum();
    let mut counts = weights.map(|w| n * w / total);
    let mut order = [0, 1, 2];
    order.sort_by_key(|&i| std::cmp::Reverse(((n * weights[i]) % total, weights[i])));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Assigns whole scenarios to train/test/validation in proportion to `weights`, with every
/// surface class represented in every split.
pub fn build_splits(entries: &[ScenarioEntry], weights: [usize; 3]) -> Result<Splits, PipelineError> {
    let mut by_class: BTreeMap<&str, Vec<&ScenarioEntry>> = BTreeMap::new();
    for e in entries {
        by_class.entry(e.surface.as_str()).or_default().push(e);
    }
    let classes = by_class.len();
    if entries.len() < 3 || by_class.values().any(|v| v.len() < 3) {
        return Err(PipelineError::InsufficientScenarios(format!(
            "{} scenarios; each surface class needs at least 3",
            entries.len()
        )));
    }
    let mut target = apportion(entries.len(), weights);
    for i in 1..3 {
        if target[i] < classes {
            let need = classes - target[i];
            target[i] = classes;
            target[0] = target[0].checked_sub(need).filter(|&t| t >= classes).ok_or_else(|| {
                PipelineError::InsufficientScenarios("too few scenarios for the class mix".into())
            })?;
        }
    }

    for v in by_class.values_mut() {
        v.sort_by(|a, b| a.id.cmp(&b.id));
    }
    let tags = SplitTag::ALL;
    let mut splits = Splits::default();
    let mut counts = [0usize; 3];
    // One of every class per split first, then interleave classes into the largest deficit.
    for v in by_class.values() {
        for (slot, e) in v.iter().take(3).enumerate() {
            let i = [2, 1, 0][slot];
            splits.get_mut(tags[i]).push(e.id.clone());
            counts[i] += 1;
        }
    }
    let longest = by_class.values().map(Vec::len).max().unwrap_or(0);
    for k in 3..longest {
        for v in by_class.values() {
            if let Some(e) = v.get(k) {
                let i = (0..3)
                    .max_by_key(|&i| (target[i] as isize - counts[i] as isize, std::cmp::Reverse(i)))
                    .unwrap();
                splits.get_mut(tags[i]).push(e.id.clone());
                counts[i] += 1;
            }
        }
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn entries(n: usize, surfaces: &[&str]) -> Vec<ScenarioEntry> {
        (0..n)
            .map(|i| ScenarioEntry {
                id: format!("run-{i:02}"),
                surface: surfaces[i % surfaces.len()].to_string(),
                duration: 60.0,
            })
            .collect()
    }

    #[test]
    fn eighteen_runs_follow_the_weights() {
        let s = build_splits(&entries(18, &["flat", "gravel", "bumpy"]), DEFAULT_SPLIT_WEIGHTS).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.validation.len()), (11, 3, 4));
    }

    #[test]
    fn seventeen_runs_round_by_largest_remainder() {
        let s = build_splits(&entries(17, &["flat", "gravel", "bumpy"]), DEFAULT_SPLIT_WEIGHTS).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.validation.len()), (10, 3, 4));
    }

    #[test]
    fn splits_are_disjoint_and_cover_every_class() {
        let es = entries(20, &["flat", "gravel", "bumpy", "wet"]);
        let s = build_splits(&es, DEFAULT_SPLIT_WEIGHTS).unwrap();
        let mut seen = HashSet::new();
        for tag in SplitTag::ALL {
            for id in s.get(tag) {
                assert!(seen.insert(id.clone()), "{id} in two splits");
            }
            let classes: HashSet<_> = s
                .get(tag)
                .iter()
                .map(|id| &es.iter().find(|e| &e.id == id).unwrap().surface)
                .collect();
            assert_eq!(classes.len(), 4, "{tag}");
        }
        assert_eq!(seen.len(), es.len());
    }

    #[test]
    fn single_class() {
        let s = build_splits(&entries(6, &["flat"]), DEFAULT_SPLIT_WEIGHTS).unwrap();
        assert!(SplitTag::ALL.iter().all(|&t| !s.get(t).is_empty()));
        assert_eq!(s.tag_of("run-00"), Some(SplitTag::Validation));
    }

    #[test]
    fn too_few_runs() {
        assert!(build_splits(&entries(2, &["flat"]), DEFAULT_SPLIT_WEIGHTS).is_err());
        assert!(build_splits(&entries(8, &["flat", "wet"]), DEFAULT_SPLIT_WEIGHTS).is_ok());
        assert!(build_splits(&entries(5, &["flat", "wet"]), DEFAULT_SPLIT_WEIGHTS).is_err());
    }
}
