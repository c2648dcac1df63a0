//! The whole command-line pipeline driven from code:
//! `synth` → `train` → `uq --method all` → `eval` → `report`.
//!
//! Uses a reduced model so it completes in seconds; every file the CLI
//! writes lands under OUT_DIR.
//!
//! ```text
//! cargo run --release --example pipeline -- [OUT_DIR]
//! ```

use nca_resilience::cli::run_from_args;

fn main() -> anyhow::Result<()> {
    let root = std::env::args().nth(1).unwrap_or_else(|| "pipeline_out".into());
    let p = |s: &str| format!("{root}/{s}");
    let small = [
        "--set", "num_channels=16", "--set", "hidden_size=32", "--set", "image_size=32",
        "--set", "t_min=16", "--set", "t_max=32", "--set", "learning_rate=3e-3",
        "--rollout-steps", "32", "--seed", "3",
    ];
    let run = |args: &[&str]| -> anyhow::Result<()> {
        let mut full = vec!["nca-resilience"];
        full.extend_from_slice(args);
        full.extend_from_slice(&small);
        eprintln!("$ nca-resilience {}", args.join(" "));
        run_from_args(full)
    };
    run(&["synth", "--out", &p("data"), "--count", "60", "--corruption", "mixed", "--severity", "4"])?;
    run(&["train", "--data", &p("data"), "--out", &p("model"), "--epochs", "20"])?;
    run(&[
        "uq", "--data", &p("data"), "--checkpoint", &p("model/best.ckpt"), "--out", &p("uq"),
        "--method", "all",
    ])?;
    run(&["eval", "--scores", &p("uq/scores.csv"), "--out", &p("eval")])?;
    let summary = format!("synthetic={}", p("eval/summary.csv"));
    run(&["report", "--summary", &summary, "--out", &p("report")])?;
    println!("\nrisk-coverage plot: {}", p("eval/risk_coverage.svg"));
    Ok(())
}
