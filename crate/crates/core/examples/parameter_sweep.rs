// Drive the command-line machinery from code: a BHZ mass sweep.

use topoband::cli::{execute, RunConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let config = RunConfig {
        command: Some("sweep".into()),
        model: Some("bhz".into()),
        grid: Some(vec![12, 12]),
        vary: Some("M".into()),
        from: Some(-1.0),
        to: Some(1.0),
        steps: Some(5),
        ..Default::default()
    };
    let outcome = execute(&config)?;
    let report: serde_json::Value = serde_json::from_str(&outcome.text)?;
    for point in report["points"].as_array().unwrap() {
        println!(
            "M = {:5.2}  gap {:.3}  Z2 {}",
            point["M"], point["gap"]["min_gap"], point["value"]
        );
    }
    println!("transitions: {}", report["transitions"]);
    assert_eq!(outcome.exit, 0);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap()
}
