//! Fit the geometry network to an icosphere mesh, report fit quality and
//! write the reconstructed surface to `sphere_fit.obj`.

use std::path::Path;
use std::time::Instant;

use stressfield::geometry::{extract_mesh, fit_quality, fit_sdf, Bounds, FitConfig, TriangleMesh};

fn main() -> stressfield::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mesh = TriangleMesh::icosphere([0.0; 3], 0.6, 4);
    let cfg = FitConfig {
        hidden: vec![32; 3],
        epochs: 10,
        steps_per_epoch: 100,
        batch_size: 1024,
        samples: 30_000,
        ..Default::default()
    };
    let t = Instant::now();
    let (field, report) = fit_sdf(&mesh, &cfg)?;
    let q = fit_quality(&field, &mesh, 4096, 0)?;
    println!(
        "final loss {:.4e}, surface error {:.4}, eikonal {:.4}, interior agreement {:.3}, {:.1}s",
        report.epoch_loss.last().copied().unwrap_or(f64::NAN),
        q.surface_error,
        q.eikonal,
        q.interior_agreement,
        t.elapsed().as_secs_f64()
    );
    let out = extract_mesh(&field, Bounds::default(), 64)?;
    out.ensure_watertight()?;
    println!(
        "reconstruction volume {:.4} (sphere {:.4})",
        out.volume(),
        4.0 / 3.0 * std::f64::consts::PI * 0.6f64.powi(3)
    );
    out.write_obj(Path::new("sphere_fit.obj"))
}
