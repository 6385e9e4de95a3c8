use calitr_core::simulate::*;

fn main() {
    let t0 = std::time::Instant::now();
    for sc in 1..=4u8 {
        let spec = ScenarioSpec::new(sc, Design::Observational, 1000, 20240801).unwrap();
        let truth = target_truth(&spec).unwrap();
        println!(
            "scenario {sc}: V^t(beta^t) = {:.4}  beta_t = {:?}  [{:.1?}]",
            truth.v_t_opt,
            truth.beta_t.beta().iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            t0.elapsed()
        );
    }
    for sc in [3u8, 4] {
        let spec = ScenarioSpec::new(sc, Design::Observational, 1000, 20240801).unwrap();
        let cons = spec.mean_constraints();
        for (name, gamma) in [("EB", 0.0), ("EL", -1.0), ("LS", 1.0)] {
            let p = pseudo_truth(&spec, gamma, &cons, 100_000).unwrap();
            println!("scenario {sc} {name}: V+ = {:.4}  [{:.1?}]", p.v_plus, t0.elapsed());
        }
    }
    let spec2 = ScenarioSpec::new(2, Design::Observational, 1000, 20240801).unwrap();
    for (name, gamma) in [("EB", 0.0), ("EL", -1.0)] {
        let p = pseudo_truth(&spec2, gamma, &spec2.mean_constraints(), 100_000).unwrap();
        println!("scenario 2 {name}: V+ = {:.4}", p.v_plus);
    }

    // Table S9 style MSEs
    for sc in [3u8, 4] {
        let spec = ScenarioSpec::new(sc, Design::Observational, 1000, 7).unwrap();
        for (name, gamma) in [("EB", 0.0), ("EL", -1.0), ("LS", 1.0)] {
            let all = density_ratio_mse(sc, &spec.mean_constraints(), gamma, 100_000, 11).unwrap();
            let x1 = density_ratio_mse(sc, &spec.x1_constraint(), gamma, 100_000, 11).unwrap();
            println!("S9 scenario {sc} {name}: all={all:.3} x1={x1:.3}");
        }
    }
    // scenario 2 EB convergence toward exact ratio
    let spec = ScenarioSpec::new(2, Design::Observational, 1000, 7).unwrap();
    for n in [1000usize, 10_000, 100_000] {
        let mse = density_ratio_mse(2, &spec.mean_constraints(), 0.0, n, 13).unwrap();
        println!("scenario 2 EB mse at n={n}: {mse:.3e}");
    }
    println!("total {:?}", t0.elapsed());
}
