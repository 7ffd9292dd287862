//! Geometry of excursion sets and level sets.

pub mod chemical;
pub mod kacrice;
pub mod levelset;

pub use chemical::{
    chemical_diameter, chemical_diameter_with, chemical_distance, s_chem, set_distance, Diameter,
    PathResult, SChem,
};
pub use kacrice::{
    kac_rice_compare, level_lengths, nadaraya_watson, sample_alpha_at_origin, silverman_bandwidth,
    DensityEstimate, KacRiceRow, KacRiceSetup, OriginSamples,
};
pub use levelset::{
    alpha_gradient, coarea_check, level_set_length, level_set_segments, CoareaReport, LevelGrid,
    LevelSetStats, TestFunction,
};
