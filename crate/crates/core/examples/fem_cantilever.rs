//! Clamped voxel cantilever under a tip load, compared with beam theory
//! (bending plus shear), and a compressed cube exported as anchor data.

use std::path::Path;

use stressfield::elasticity::{AxisBand, BoundarySpec, MaterialModel};
use stressfield::fem::{self, FemProblem, HexMesh};
use stressfield::geometry::{Bounds, DensityParams, Shape};

fn main() -> stressfield::Result<()> {
    let mat = MaterialModel::default();
    let (n, m, h) = (40, 4, 0.25);
    let mesh = HexMesh::block([n, m, m], [0.0; 3], h)?;
    let load = 1e-4;
    let mut p = FemProblem::new(&mesh);
    for (i, x) in mesh.nodes.iter().enumerate() {
        if x[0] == 0.0 {
            p.fix_node(i, [0.0; 3]);
        }
    }
    let tip: Vec<_> = mesh.exposed_faces().into_iter().filter(|f| f.axis == 0 && f.positive).collect();
    for f in &tip {
        p.load_face(&mesh, f.element, 0, true, [0.0, 0.0, -load / tip.len() as f64]);
    }
    let sol = fem::solve_problem(&mesh, &mat, &p)?;
    let len = n as f64 * h;
    let tip_nodes: Vec<_> = (0..mesh.n_nodes()).filter(|&i| (mesh.nodes[i][0] - len).abs() < 1e-9).collect();
    let w = -tip_nodes.iter().map(|&i| sol.displacement[i][2]).sum::<f64>() / tip_nodes.len() as f64;
    let side = m as f64 * h;
    let inertia = side.powi(4) / 12.0;
    let shear = mat.youngs() / (2.0 * (1.0 + mat.poisson()));
    let beam = load * len.powi(3) / (3.0 * mat.youngs() * inertia) + load * len / (5.0 / 6.0 * shear * side * side);
    println!(
        "cantilever: tip deflection {w:.5e}, beam theory {beam:.5e} ({:+.2}%), {} cg iterations",
        100.0 * (w - beam) / beam,
        sol.iterations
    );
    let (f, r) = (sol.total_load(), sol.total_reaction());
    println!("load {f:?}, reaction {r:?}");

    let cube = Shape::Cuboid { lo: [-0.625; 3], hi: [0.625; 3] };
    let bspec = BoundarySpec {
        support: AxisBand { axis: 2, lo: -1.0, hi: -0.55 },
        prescribed: [0.0; 3],
        load: AxisBand { axis: 2, lo: 0.55, hi: 1.0 },
        traction: [0.0, 0.0, -0.01],
        body_force: [0.0; 3],
    };
    let hex = fem::voxelize(&cube, &DensityParams::default(), Bounds::default(), 32, 0.5)?;
    let sol = fem::solve(&hex, &mat, &bspec)?;
    println!("cube: {} elements, max von Mises {:.4e}", hex.n_elements(), fem::max_von_mises(&sol));
    fem::export_dataset(&sol, &hex, 4096, 0).write_csv(Path::new("cube_fem.csv"))
}
