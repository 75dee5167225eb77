//! Compares two groups of Likert answers read from a CSV file with the
//! columns `group,value` and prints the result as JSON.

use std::process::ExitCode;

use serde::{Deserialize, Serialize};

use funnelbot_stats::{analyze, LikertSample, StatResult};

#[derive(Debug, Deserialize)]
struct Row {
    group: String,
    value: u8,
}

#[derive(Debug, Serialize)]
struct Report {
    a: String,
    b: String,
    n_a: usize,
    n_b: usize,
    #[serde(flatten)]
    result: StatResult,
}

fn run(path: &str) -> Result<Report, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{path}: {e}"))?;
    // groups in order of first appearance
    let mut groups: Vec<(String, Vec<u8>)> = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| format!("{path}: {e}"))?;
        match groups.iter_mut().find(|(g, _)| *g == row.group) {
            Some((_, values)) => values.push(row.value),
            None => groups.push((row.group, vec![row.value])),
        }
    }
    let [(a, va), (b, vb)]: [(String, Vec<u8>); 2] = groups
        .try_into()
        .map_err(|g: Vec<_>| format!("{path}: expected exactly 2 groups, found {}", g.len()))?;
    let sa = LikertSample::new(a.clone(), va).map_err(|e| e.to_string())?;
    let sb = LikertSample::new(b.clone(), vb).map_err(|e| e.to_string())?;
    let result = analyze(&sa, &sb).map_err(|e| e.to_string())?;
    Ok(Report {
        a,
        b,
        n_a: sa.len(),
        n_b: sb.len(),
        result,
    })
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [path] = args.as_slice() else {
        eprintln!("usage: funnelbot-stats <samples.csv>");
        return ExitCode::from(2);
    };
    match run(path) {
        Ok(report) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("funnelbot-stats: {e}");
            ExitCode::from(2)
        }
    }
}
