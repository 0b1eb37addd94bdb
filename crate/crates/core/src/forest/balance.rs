use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::index;

use super::Balancing;
use crate::rng::Rng;
use crate::{ClassId, Error, Result};

/// Rows kept by a balancing strategy, with one weight per kept row.
#[derive(Clone, Debug, PartialEq)]
pub struct Balanced {
    /// Indices into the input labels, ascending.
    pub rows: Vec<usize>,
    pub weights: Vec<f64>,
}

fn supports(labels: &[ClassId], rows: &[usize]) -> BTreeMap<ClassId, usize> {
    let mut s = BTreeMap::new();
    for &i in rows {
        *s.entry(labels[i]).or_insert(0) += 1;
    }
    s
}

pub fn balance(labels: &[ClassId], strategy: Balancing, rng: &mut Rng) -> Result<Balanced> {
    let all: Vec<usize> = (0..labels.len()).collect();
    let sup = supports(labels, &all);
    if sup.len() < 2 {
        return Err(Error::TooFewClasses { needed: 2, got: sup.len() });
    }
    let rows = match strategy {
        Balancing::Undersample { cap_ratio } | Balancing::UndersampleThenWeights { cap_ratio } => {
            if !(cap_ratio >= 1.0) {
                return Err(Error::InvalidConfig("cap_ratio must be >= 1".into()));
            }
            undersample(labels, &sup, cap_ratio, rng)
        }
        Balancing::None | Balancing::ClassWeights => all,
    };
    let weights = match strategy {
        Balancing::ClassWeights | Balancing::UndersampleThenWeights { .. } => {
            let sup = supports(labels, &rows);
            let total = rows.len() as f64;
            let k = sup.len() as f64;
            if let Some((&c, _)) = sup.iter().find(|(_, &n)| n == 0) {
                return Err(Error::EmptyClass(c));
            }
            rows.iter().map(|&i| total / (k * sup[&labels[i]] as f64)).collect()
        }
        _ => alloc::vec![1.0; rows.len()],
    };
    Ok(Balanced { rows, weights })
}

fn undersample(labels: &[ClassId], sup: &BTreeMap<ClassId, usize>, cap_ratio: f64, rng: &mut Rng) -> Vec<usize> {
    let smallest = *sup.values().min().unwrap_or(&0);
    let cap = libm::floor(cap_ratio * smallest as f64) as usize;
    let mut rows = Vec::with_capacity(labels.len());
    for (&class, &n) in sup {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if n <= cap {
            rows.extend(members);
        } else {
            rows.extend(index::sample(rng, n, cap).into_iter().map(|k| members[k]));
        }
    }
    rows.sort_unstable();
    rows
}
