use std::time::Instant;

use panelfusion_core::fusion::{run_fusion, FusionConfig};
use panelfusion_core::sim::{generate_dgp, DgpConfig};

fn main() {
    let cfg = FusionConfig::default();
    for t in [10usize, 20, 50, 100] {
        let mut total = 0.0;
        let reps = 3;
        for m in 1..=reps {
            let dgp = DgpConfig {
                reference_periods: t,
                master_seed: 42,
                replicate: m,
                ..DgpConfig::default()
            };
            let p = generate_dgp(&dgp).unwrap();
            let start = Instant::now();
            let r = run_fusion(&p.dataset, &cfg).unwrap();
            let el = start.elapsed().as_secs_f64();
            total += el;
            println!("T={t} m={m} psi={:.4} psi0={:.4} nse_f={:.4} budget={:?} {:.3}s", r.psi_hat, p.psi0, r.nse_f, r.budget.map(|b| b.as_array()), el);
        }
        println!("T={t} mean {:.3}s", total / reps as f64);
    }
}
