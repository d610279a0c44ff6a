//! Runs the enumeration oracle suite on fresh random tiny networks.
use stochnet::oracle::{run_suite, SuiteConfig};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let start = std::time::Instant::now();
    let results = run_suite(&SuiteConfig { seed, ..Default::default() }).expect("tiny nets are enumerable");
    for r in &results {
        println!("{r}");
    }
    println!("{:.1}s", start.elapsed().as_secs_f64());
}
