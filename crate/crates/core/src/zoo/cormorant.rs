use crate::model::Dataset;

/// Number of visits in the census; each individual is a binomial count out
/// of this many trials.
pub const CORMORANT_TRIALS: u32 = 30;

/// `CORMORANT_FREQUENCIES[t - 1]` individuals were captured `t` times.
pub const CORMORANT_FREQUENCIES: [u32; 21] =
    [13, 14, 10, 8, 11, 7, 7, 12, 7, 9, 6, 10, 7, 2, 0, 3, 1, 0, 0, 0, 1];

/// Cormorant capture-frequency data (Vorsø colony, April 1994 successful
/// breeders) expanded to one count per individual.
pub fn cormorant_fixture() -> Dataset {
    let values = CORMORANT_FREQUENCIES
        .iter()
        .enumerate()
        .flat_map(|(idx, &f)| std::iter::repeat_n((idx + 1) as f64, f as usize))
        .collect();
    Dataset::from_scalars(values).expect("fixture is non-empty")
}
