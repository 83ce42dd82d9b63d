//! Eyebox and head-orientation sweeps with the standard grids.
//!
//! cargo run --release --example misalignment_sweep [rays_per_point]

use holosim::raytrace::Scene;
use holosim::sweep::{
    compare_axis_robustness, count_local_maxima, run_sweep, SweepAxis, SweepConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rays: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(100);
    let scene = Scene::default();
    for axis in [
        SweepAxis::EyeboxXy,
        SweepAxis::HeadPanTilt,
        SweepAxis::HeadTranslationXy,
    ] {
        let mut config = SweepConfig::standard(axis);
        config.rays_per_point = rays;
        let t = std::time::Instant::now();
        let result = run_sweep(&scene, &config)?;
        let spread = compare_axis_robustness(&result);
        let (la, lb) = axis.labels();
        println!(
            "{axis}: {n}x{n} cells in {:.1?}, spread {la} {:.4}, spread {lb} {:.4}, maxima {la} {} {lb} {}",
            t.elapsed(),
            spread.along_a,
            spread.along_b,
            count_local_maxima(&result.profile_a()),
            count_local_maxima(&result.profile_b()),
            n = result.values_a.len(),
        );
        let fmt = |p: Vec<f64>| {
            p.iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!("  {la}: {}", fmt(result.profile_a()));
        println!("  {lb}: {}", fmt(result.profile_b()));
    }
    Ok(())
}
