//! The command-line pipeline driven in-process on a tiny configuration.
fn main() {
    let dir = std::env::temp_dir().join("iconcl_cli_example");
    let config = dir.join("run.toml");
    std::fs::create_dir_all(&dir).expect("temp dir");
    std::fs::write(
        &config,
        format!(
            "out_dir = {:?}\nseed = 3\n[operators]\ncount = 4\n[train]\ntotal_steps = 20\nlog_every = 5\n",
            dir.join("run")
        ),
    )
    .expect("write config");
    let cfg = config.to_str().expect("utf-8 path");
    for args in [
        vec!["iconcl", "generate", "--config", cfg],
        vec!["iconcl", "train", "--config", cfg],
        vec!["iconcl", "eval", "--config", cfg, "--study", "grid"],
    ] {
        println!("$ {}", args.join(" "));
        let code = iconcl::cli::run(args);
        if code != 0 {
            std::process::exit(code);
        }
    }
}
