//! A small screw category with a collar-insertion task, enough to run every
//! stage end to end.

use std::path::Path;

use taskgrasp_core::affordance::screw_collar_task;
use taskgrasp_core::geom::io::{write_atomic, write_obj};
use taskgrasp_core::geom::shapes::{screw, ScrewDims};
use taskgrasp_core::geom::TriMesh;
use taskgrasp_core::nunocs::Symmetry;

use crate::config::Config;

pub const SEGMENTS: usize = 24;

/// Instance dimensions; the shaft radius is shared so one collar design
/// fits every screw.
pub fn screw_variants() -> Vec<(String, ScrewDims)> {
    [
        ("screw_a", 0.026, 0.0075, 0.0045),
        ("screw_b", 0.030, 0.0080, 0.0050),
        ("screw_c", 0.034, 0.0085, 0.0055),
        ("screw_d", 0.028, 0.0090, 0.0040),
    ]
    .into_iter()
    .map(|(id, l, r, h)| {
        let dims = ScrewDims {
            shaft_radius: 0.003,
            shaft_length: l,
            head_radius: r,
            head_height: h,
        };
        (id.to_string(), dims)
    })
    .collect()
}

pub fn screw_meshes() -> Vec<(String, ScrewDims, TriMesh)> {
    screw_variants()
        .into_iter()
        .map(|(id, d)| {
            let m = screw(&d, SEGMENTS);
            (id, d, m)
        })
        .collect()
}

pub fn demo_config() -> Config {
    let mut cfg = Config::default();
    cfg.models.category = "screw".into();
    // The shaft is 6 mm across; a sparser template leaves gaps in ℂ that
    // exceed the alignment acceptance bound.
    cfg.canonical.sample_radius = 0.0006;
    cfg.canonical.symmetry = Symmetry::Revolution { axis: 2, folds: SEGMENTS };
    // A screw lying in the bin is reachable only by near-vertical grasps
    // across the head, a thin slice of grasp space.
    cfg.codebook.grasps_per_instance = 800;
    cfg
}

/// Writes `models/`, `tasks/` and `config.toml` under `out`.
pub fn init_demo(out: &Path) -> anyhow::Result<()> {
    let models = out.join("models");
    let tasks = out.join("tasks");
    std::fs::create_dir_all(&models)?;
    std::fs::create_dir_all(&tasks)?;
    for (id, dims, mesh) in screw_meshes() {
        write_obj(&models.join(format!("{id}.obj")), &mesh)?;
        screw_collar_task(&dims, SEGMENTS)?.save(&tasks.join(format!("{id}.json")))?;
    }
    write_atomic(&out.join("config.toml"), demo_config().to_toml()?.as_bytes())?;
    Ok(())
}
