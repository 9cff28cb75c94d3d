//! Instance-guided refinement of a BEV feature from two jittered boxes:
//! identity at initialisation, then with random parameters.
//!
//! ```text
//! cargo run --example instance_refinement
//! ```

use bevkit::igdr::{igdr_forward, IgdrInputs, IgdrParams, DEFAULT_TEMPERATURE};
use bevkit::synth::{make_instance_bev, Rect};
use bevkit::SeededRng;

fn main() -> bevkit::Result<()> {
    let (c, ci, grid) = (8, 16, (20, 20));
    let boxes = [
        Rect { top: 2, left: 3, bottom: 7, right: 9 },
        Rect { top: 11, left: 10, bottom: 17, right: 15 },
    ];
    let inst = make_instance_bev(&boxes, &[0.9, 0.6], grid, 1, 21, (ci, 4))?;
    let mut rng = SeededRng::new(8);
    let f_rc = rng.normal_tensor(&[1, c, grid.0, grid.1], 1.0);
    let inputs = IgdrInputs::new(f_rc.clone(), inst.e_features, inst.s_bev, DEFAULT_TEMPERATURE)?;

    let out = igdr_forward(&inputs, &IgdrParams::identity(c, ci))?;
    println!("identity init: max |F_final - F_RC| = {:e}", out.f_final.max_abs_diff(&f_rc));

    let out = igdr_forward(&inputs, &IgdrParams::random(c, ci, 0.2, &mut rng))?;
    let m = out.intermediates.as_ref().expect("instances present");
    let g = m.g_bg.data();
    println!("random params: max |F_final - F_RC| = {:.4}", out.f_final.max_abs_diff(&f_rc));
    println!("gate range [{:.4}, {:.4}]", g.iter().cloned().fold(f64::MAX, f64::min), g.iter().cloned().fold(f64::MIN, f64::max));
    for (y, row) in g.chunks(grid.1).enumerate().step_by(2) {
        let line: String = row.iter().map(|v| if *v > 0.5 { '#' } else { '.' }).collect();
        println!("  {y:>2} {line}");
    }

    let bare = IgdrInputs::without_instances(f_rc.clone(), DEFAULT_TEMPERATURE);
    let out = igdr_forward(&bare, &IgdrParams::identity(c, ci))?;
    println!("no instances: passthrough = {}", out.passthrough());
    Ok(())
}
