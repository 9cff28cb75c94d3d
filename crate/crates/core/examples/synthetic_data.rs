//! Builds the canonical depth scene (or one loaded from JSON) and writes its
//! maps as RTEN files.
//!
//! ```text
//! cargo run --example synthetic_data [OUT_DIR] [SCENE_JSON]
//! ```

use std::path::PathBuf;

use bevkit::pdf::DepthBinSpec;
use bevkit::synth::{make_depth_scene, SceneSpec};

fn main() -> bevkit::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("bevkit_scene"));
    let spec = match args.next() {
        Some(p) => SceneSpec::from_json_file(p.as_ref())?,
        None => SceneSpec::canonical(),
    };
    let bins = DepthBinSpec::default();
    let scene = make_depth_scene(&spec, &bins)?;
    let sparse = scene.mask_sparse.sum() as usize;
    let k = scene.instance_masks.as_ref().map_or(0, |m| m.shape()[1]);
    println!("{}x{} scene, {k} objects, {sparse} sparse samples", spec.width, spec.height);
    for row in scene.d_dense.data().chunks(spec.width).step_by(3) {
        let line: String = row.iter().map(|d| format!("{:>3.0}", d)).collect();
        println!("{line}");
    }
    scene.dump(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
