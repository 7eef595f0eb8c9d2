use homog::cell::{solve_cell, CellOptions};
use homog::fixtures;

#[test]
fn divergence_identity_converges_at_second_order() {
    let ns = [64usize, 128, 256];
    let residual: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let sol = solve_cell(&fixtures::sin_convection(), n, &CellOptions::default()).unwrap();
            sol.divergence.per_species[0]
        })
        .collect();
    let slope = |a: f64, b: f64| (a / b).log2();
    let slopes = [slope(residual[0], residual[1]), slope(residual[1], residual[2])];
    assert!(slopes.iter().all(|&s| s >= 1.8), "{residual:?} {slopes:?}");
}

#[test]
fn summed_divergence_integrates_to_zero() {
    for spec in [fixtures::two_species(), fixtures::cellular_2d()] {
        let n = if spec.dimension == 2 { 32 } else { 128 };
        let sol = solve_cell(&spec, n, &CellOptions::default()).unwrap();
        assert!(sol.divergence.summed_integral.abs() < 1e-12);
    }
}
