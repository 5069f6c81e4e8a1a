use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Partition of a dataset's classes into base, validation and novel classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub base_classes: Vec<usize>,
    pub validation_classes: Vec<usize>,
    pub novel_classes: Vec<usize>,
}

impl ClassSplit {
    pub fn num_classes(&self) -> usize {
        self.base_classes.len() + self.validation_classes.len() + self.novel_classes.len()
    }

    /// Checks that the three sets are disjoint and cover `0..num_classes`.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let mut seen = alloc::vec![false; num_classes];
        for &c in self
            .base_classes
            .iter()
            .chain(&self.validation_classes)
            .chain(&self.novel_classes)
        {
            match seen.get_mut(c) {
                Some(s) if !*s => *s = true,
                Some(_) => return Err(Error::Config(alloc::format!("class {c} listed twice"))),
                None => {
                    return Err(Error::Config(alloc::format!(
                        "class {c} out of range for {num_classes} classes"
                    )))
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Config(alloc::format!(
                "class {missing} is not assigned to any split"
            )));
        }
        Ok(())
    }
}

/// Randomly partitions `0..num_classes` into sets of the given sizes.
pub fn make_split(num_classes: usize, counts: (usize, usize, usize), seed: u64) -> Result<ClassSplit> {
    let (base, validation, novel) = counts;
    if base + validation + novel != num_classes {
        return Err(Error::Config(alloc::format!(
            "split counts {base}+{validation}+{novel} do not sum to {num_classes} classes"
        )));
    }
    let mut classes: Vec<usize> = (0..num_classes).collect();
    classes.shuffle(&mut rng::seeded(seed));
    let take = |range: core::ops::Range<usize>| {
        let mut part = classes[range].to_vec();
        part.sort_unstable();
        part
    };
    Ok(ClassSplit {
        base_classes: take(0..base),
        validation_classes: take(base..base + validation),
        novel_classes: take(base + validation..num_classes),
    })
}
