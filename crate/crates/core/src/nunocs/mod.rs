//! Non-uniformly normalised object space (ℂ): per-axis normalisation,
//! canonical template selection, dense correspondence and 9D pose
//! estimation.

mod canonical;
mod fit;
mod normalize;
mod predict;
pub mod store;

pub use canonical::{
    build_canonical, build_canonical_named, correspond, correspond_points, CanonicalModel, CanonicalParams,
    CorrespondenceSet, Symmetry, CUBE_CENTRE,
};
pub use fit::{fit_pairs, fit_per_axis, fit_pose9d, fit_uniform, residual, RansacParams, ScaleModel, ALTERNATIONS};
pub use normalize::{to_nunocs, to_nunocs_in, NunocsCloud, NunocsFrame};
pub use predict::{alignment_cost, predict_nunocs, rotation_grid, AlignParams, NunocsPrediction};
