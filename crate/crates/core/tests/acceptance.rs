//! Runs every headline criterion and prints one line per criterion.

use inflab::acceptance::{run_all, Mode};

fn main() {
    let results = run_all(Mode::Full);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
