//! Few-shot benchmark on the synthetic suite: RT-ACM against plain MAML and
//! a randomly initialised model, median target accuracy over ten seeds.
//!
//! cargo run --release --example benchmark [seeds]

use std::time::Instant;

use rtacm::pipeline::{compare_methods, RunConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn main() -> rtacm::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let start = Instant::now();
    let mut cols: [Vec<f64>; 3] = Default::default();
    println!("seed  rt_acm   maml     scratch");
    for seed in 0..seeds {
        let cfg = RunConfig {
            seed,
            ..RunConfig::quick()
        };
        let acc = compare_methods(&cfg)?;
        let row = [acc["rt_acm"], acc["maml"], acc["scratch"]];
        println!("{seed:<5} {:.4}   {:.4}   {:.4}", row[0], row[1], row[2]);
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    let [r, m, s] = cols.map(median);
    println!("median {r:.4}   {m:.4}   {s:.4}");
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
