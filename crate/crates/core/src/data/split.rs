use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    LeaveOneOut,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub mode: SplitMode,
}

/// One split per held-out scene.
pub fn leave_one_out(scenes: &[String]) -> Result<Vec<SplitSpec>> {
    if scenes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "leave-one-out needs at least 2 scenes, got {}",
            scenes.len()
        )));
    }
    Ok(scenes
        .iter()
        .enumerate()
        .map(|(k, held)| SplitSpec {
            train: scenes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, s)| s.clone())
                .collect(),
            test: vec![held.clone()],
            mode: SplitMode::LeaveOneOut,
        })
        .collect())
}

pub fn fixed_split(train: Vec<String>, test: Vec<String>) -> Result<SplitSpec> {
    if let Some(both) = train.iter().find(|s| test.contains(s)) {
        return Err(Error::InvalidInput(format!(
            "scene {both:?} is in both train and test"
        )));
    }
    Ok(SplitSpec {
        train,
        test,
        mode: SplitMode::Fixed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn five_scenes_five_splits() {
        let all = names(&["eth", "hotel", "univ", "zara1", "zara2"]);
        let splits = leave_one_out(&all).unwrap();
        assert_eq!(splits.len(), 5);
        for (s, held) in splits.iter().zip(&all) {
            assert_eq!(s.test, vec![held.clone()]);
            assert_eq!(s.train.len(), 4);
            assert!(!s.train.contains(held));
        }
    }

    #[test]
    fn single_scene_loo_rejected() {
        assert!(leave_one_out(&names(&["eth"])).is_err());
    }

    #[test]
    fn fixed_passthrough_and_overlap() {
        let s = fixed_split(names(&["a", "b"]), names(&["c"])).unwrap();
        assert_eq!((s.train, s.test), (names(&["a", "b"]), names(&["c"])));
        assert!(fixed_split(names(&["a", "b"]), names(&["b"])).is_err());
    }
}
