//! Ray traces the default layout (virtual image → HOE lens → eye) and
//! prints per-stage losses.
//!
//! cargo run --release --example retina_render [rays_per_point]

use holosim::raytrace::{render_retinal_image, Scene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rays = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(100);
    let scene = Scene::default();
    println!(
        "HOE focal point {:.4?} m, {} lit points, cone half angle {:.3}°",
        scene.hoe.focal_point().as_slice(),
        scene.source.lit_points.len(),
        scene.source.cone_half_angle().to_degrees()
    );
    let image = render_retinal_image(&scene, rays, 0)?;
    println!("total retinal intensity {:.4}", image.total_intensity());
    for (stage, count, weight) in image.diagnostics.rows() {
        println!("  {stage:<12} {count:>8} rays, discarded weight {weight:.3}");
    }
    let lit = image.hit_count.iter().filter(|&&c| c > 0).count();
    println!(
        "{lit} retinal pixels hit, pitch {:.1} µm",
        image.pixel_pitch * 1e6
    );
    Ok(())
}
