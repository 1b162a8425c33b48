//! Models shared by the benchmarks.

use compid_core::model::{validate_model, CompModel, LeakConvention, RawModel};

pub fn cycle(n: usize, leaks: Vec<usize>) -> CompModel {
    validate_model(&RawModel {
        compartments: n,
        edges: (1..=n).map(|i| (i, i % n + 1)).collect(),
        inputs: vec![1],
        outputs: vec![2],
        leaks,
        leak_convention: LeakConvention::Separate,
    })
    .unwrap()
}

/// Every ordered pair of distinct compartments is an edge.
pub fn complete(n: usize) -> CompModel {
    validate_model(&RawModel {
        compartments: n,
        edges: (1..=n)
            .flat_map(|a| (1..=n).filter(move |&b| b != a).map(move |b| (a, b)))
            .collect(),
        inputs: vec![1],
        outputs: vec![1],
        leaks: vec![1],
        leak_convention: LeakConvention::Separate,
    })
    .unwrap()
}

pub fn three_compartment() -> CompModel {
    validate_model(&RawModel {
        compartments: 3,
        edges: vec![(1, 2), (2, 3), (3, 2), (3, 1)],
        inputs: vec![1],
        outputs: vec![1],
        leaks: vec![1, 2, 3],
        leak_convention: LeakConvention::Total,
    })
    .unwrap()
}
