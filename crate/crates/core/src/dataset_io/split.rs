use rand::seq::SliceRandom;

use super::record::GridRecord;
use super::DatasetError;
use crate::rng;
use crate::scenario_sim::ContextClass;

/// Train / validation / test fractions.
pub const DEFAULT_RATIOS: [f64; 3] = [0.65, 0.20, 0.15];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Vec<GridRecord>,
    pub validation: Vec<GridRecord>,
    pub test: Vec<GridRecord>,
    pub ratios: [f64; 3],
}

fn floor_count(n: usize, ratio: f64) -> usize {
    // The small slack keeps exact products such as 100·0.2 from flooring down.
    (n as f64 * ratio + 1e-9).floor() as usize
}

/// Stratified, seeded split.
///
/// Global sizes are `⌊n·r_val⌋` for validation, `⌊n·r_test⌋` for test and
/// the remainder for training. Each class first receives the floor of its
/// own share; leftover validation/test slots go to the classes with the
/// largest fractional shares (ties to the lower class code). Members of
/// each class are shuffled before allocation and each split is shuffled
/// afterwards.
pub fn split_indices(
    labels: &[ContextClass],
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitIndices, DatasetError> {
    if labels.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r))
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(DatasetError::BadRatios(ratios));
    }
    let n = labels.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); ContextClass::ALL.len()];
    for (i, l) in labels.iter().enumerate() {
        members[l.index()].push(i);
    }

    let mut val_quota: Vec<usize> = members.iter().map(|m| floor_count(m.len(), ratios[1])).collect();
    let mut test_quota: Vec<usize> = members.iter().map(|m| floor_count(m.len(), ratios[2])).collect();
    for (quota, ratio, target) in [
        (&mut val_quota, ratios[1], floor_count(n, ratios[1])),
        (&mut test_quota, ratios[2], floor_count(n, ratios[2])),
    ] {
        let mut order: Vec<usize> = (0..members.len()).collect();
        let frac = |c: usize| members[c].len() as f64 * ratio - (quota[c] as f64);
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        let mut missing = target.saturating_sub(quota.iter().sum());
        for c in order {
            if missing == 0 {
                break;
            }
            if quota[c] < members[c].len() {
                quota[c] += 1;
                missing -= 1;
            }
        }
    }
    // Validation top-ups were taken first; trim test where a class overflows.
    for c in 0..members.len() {
        let overflow = (val_quota[c] + test_quota[c]).saturating_sub(members[c].len());
        test_quota[c] -= overflow;
    }

    let mut rng = rng::stream(seed, &[]);
    let mut split = SplitIndices {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (c, m) in members.iter_mut().enumerate() {
        m.shuffle(&mut rng);
        let (v, rest) = m.split_at(val_quota[c]);
        let (t, tr) = rest.split_at(test_quota[c]);
        split.validation.extend_from_slice(v);
        split.test.extend_from_slice(t);
        split.train.extend_from_slice(tr);
    }
    split.train.shuffle(&mut rng);
    split.validation.shuffle(&mut rng);
    split.test.shuffle(&mut rng);
    Ok(split)
}

pub fn split_dataset(
    records: Vec<GridRecord>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitDataset, DatasetError> {
    let labels: Vec<ContextClass> = records.iter().map(|r| r.label).collect();
    let idx = split_indices(&labels, ratios, seed)?;
    let mut slots: Vec<Option<GridRecord>> = records.into_iter().map(Some).collect();
    let mut take = |ids: &[usize]| -> Vec<GridRecord> {
        ids.iter().map(|&i| slots[i].take().expect("indices are disjoint")).collect()
    };
    Ok(SplitDataset {
        train: take(&idx.train),
        validation: take(&idx.validation),
        test: take(&idx.test),
        ratios,
    })
}
