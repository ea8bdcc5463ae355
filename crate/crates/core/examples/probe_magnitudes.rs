use bvpfind_core::models::{forcing_set, ForcingSpec, Grid, ModelSpec};
use bvpfind_core::solver::{generate_trials, shoot_second_order, BOUNDARY_TOL};

fn main() {
    let grid = Grid::new(0.0, 10.0, 300).unwrap();
    let model = ModelSpec::by_name("nonlinear-sl").unwrap();
    for &a in &[0.5_f64, 1.0, 1.5, 2.0, 2.5, 3.0] {
        for &c in &[0.0_f64, 1.0, 2.0, 3.0] {
            let mut line = format!("a={a:3} c={c:3}: ");
            for &b in &[0.5_f64, 1.0, 2.0, 3.0] {
                let fs = ForcingSpec::new(a, b, c);
                match shoot_second_order(&model, fs, &grid, BOUNDARY_TOL) {
                    Ok(t) => {
                        let mx = t.u.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
                        line.push_str(&format!("b={b}:{mx:.2}  "));
                    }
                    Err(_) => line.push_str(&format!("b={b}:FAIL  ")),
                }
            }
            println!("{line}");
        }
    }
    // check the other three models over their full grids
    for name in ["linear-sl", "poisson2", "euler-bernoulli"] {
        let model = ModelSpec::by_name(name).unwrap();
        let card = model.forcing_grid.cardinality();
        let forcings = forcing_set(&model, card, 1).unwrap();
        match generate_trials(&model, &forcings, &grid) {
            Ok(set) => {
                let mut maxes: Vec<f64> = set
                    .trials
                    .iter()
                    .map(|t| t.u.iter().fold(0.0_f64, |a, &v| a.max(v.abs())))
                    .collect();
                maxes.sort_by(|a, b| a.partial_cmp(b).unwrap());
                println!(
                    "{name} (all {card}): min_max={:.3} median={:.3} max_max={:.3}",
                    maxes[0],
                    maxes[maxes.len() / 2],
                    maxes[maxes.len() - 1]
                );
            }
            Err(e) => println!("{name}: SOLVE FAILED: {e}"),
        }
    }
}
