use calitr_core::data::LinearRule;
use calitr_core::policy::{grid_search_sphere, FnObjective};
use calitr_core::simulate::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    for sc in [1u8, 2] {
        for seed in [20240801u64, 1, 2, 3, 4] {
            let spec = ScenarioSpec::new(sc, Design::Observational, 1000, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(1);
            let draw = draw_target(&spec, &mut rng);
            let obj = FnObjective(|r: &LinearRule| draw.value(r));
            let mut line = format!("sc{sc} seed {seed}:");
            for res in [6.0, 4.0, 3.0] {
                let t = std::time::Instant::now();
                let (_, v) = grid_search_sphere(&obj, 3, res).unwrap();
                line += &format!("  {res}deg={v:.4} ({:.0?})", t.elapsed());
            }
            println!("{line}");
        }
    }
}
