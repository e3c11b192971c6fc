use uavmap::cli::{run, Status};

fn main() {
    let outcome = run(std::env::args_os());
    if outcome.status == Status::Success {
        println!("{}", outcome.summary);
        for a in &outcome.artifacts {
            println!("wrote {}", a.display());
        }
    } else {
        eprintln!("{}", outcome.summary);
    }
    std::process::exit(outcome.status.code());
}
