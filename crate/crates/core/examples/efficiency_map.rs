//! Coupled-wave efficiency of a transmission volume grating over recording
//! angle pairs, plus a k-vector closure replay off Bragg.
//!
//! cargo run --release --example efficiency_map

use holosim::kogelnik::{
    efficiency_map, efficiency_special_case, record_grating, replay, transmission_pair, Material,
    Vec3,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = Material::HX120_532;
    println!(
        "unslanted, normal incidence: eta = {:.4}",
        efficiency_special_case(0.0, m.wavelength, m.n1, m.thickness)?
    );

    let map = efficiency_map(0.0, 70.0, 0.5, m)?;
    let (best, tr, ts) = map.argmax();
    println!(
        "map {0}x{0}: max eta {best:.5} at theta_r {tr}°, theta_s {ts}°",
        map.angles_deg.len()
    );
    for theta in [0.0, 10.0, 20.0, 25.5, 30.0, 40.0] {
        let i = map.index_of(theta).expect("on grid");
        println!("  symmetric pair {theta:>4}°: eta {:.4}", map.eta[(i, i)]);
    }

    let (dir_r, dir_s) = transmission_pair(25.5f64.to_radians(), 25.5f64.to_radians());
    let g = record_grating(&dir_r, &dir_s, m, &Vec3::z())?;
    for offset in [0.0f64, 0.5, 1.0, 2.0, 5.0] {
        let a = (25.5 + offset).to_radians();
        let r = replay(&g, &Vec3::new(a.sin(), 0.0, a.cos()))?;
        println!(
            "  replay {offset:>3}° off Bragg: xi {:.3}, eta {:.4}, output {:.4?}",
            r.xi,
            r.eta.unwrap(),
            r.output_direction().as_slice()
        );
    }
    Ok(())
}
