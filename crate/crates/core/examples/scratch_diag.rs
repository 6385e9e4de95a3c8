use calitr_core::data::LinearRule;
use calitr_core::policy::{grid_search_sphere, refine_sphere, FnObjective};
use calitr_core::simulate::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    // Unrestricted optimum and arm means on a big target draw, scenarios 1 & 2.
    for sc in [1u8, 2] {
        let spec = ScenarioSpec::new(sc, Design::Observational, 1000, 555)
            .unwrap()
            .with_n_target(2_000_000)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(1);
        let big = draw_target(&spec, &mut rng);
        let n = big.n() as f64;
        let m0: f64 = big.mu0.iter().sum::<f64>() / n;
        let m1: f64 = big.mu1.iter().sum::<f64>() / n;
        let mopt: f64 =
            big.mu0.iter().zip(&big.mu1).map(|(a, b)| a.max(*b)).sum::<f64>() / n;
        let sd: f64 = {
            let mean = mopt;
            (big.mu0.iter().zip(&big.mu1).map(|(a, b)| (a.max(*b) - mean).powi(2)).sum::<f64>()
                / n)
                .sqrt()
        };
        println!("sc{sc}: E mu0={m0:.4} E mu1={m1:.4} unrestricted opt={mopt:.4} sd={sd:.3} se@1e5={:.4}", sd/(1e5f64).sqrt());

        // value of the per-seed truth rules evaluated out-of-sample
        for seed in [20240801u64, 1u64, 2u64] {
            let s2 = ScenarioSpec::new(sc, Design::Observational, 1000, seed).unwrap();
            let t = target_truth(&s2).unwrap();
            let oos = big.value(&t.beta_t);
            println!(
                "  seed {seed}: in-sample V={:.4} out-of-sample V={:.4} beta={:?}",
                t.v_t_opt,
                oos,
                t.beta_t.beta().iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
            );
        }
        // direct search on the big draw itself (2e6): the clean class optimum
        let obj = FnObjective(|r: &LinearRule| big.value(r));
        let (c, cv) = grid_search_sphere(&obj, 3, 8.0).unwrap();
        let (r, rv) = refine_sphere(&obj, &c, 8.0f64.to_radians(), 4, 6);
        println!("  big-draw search: coarse {cv:.4} refined {rv:.4} beta={:?}",
            r.beta().iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    }
}
