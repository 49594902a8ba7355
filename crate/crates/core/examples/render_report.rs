//! Run the evaluate-and-prune pipeline through the CLI entry point and list
//! the report files it writes.
//!
//! cargo run --example render_report -- /tmp/pdmaint-report

fn main() {
    let base = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pdmaint-report"));
    let data = base.join("data");
    let report = base.join("report");
    let (data_s, report_s) = (data.to_string_lossy(), report.to_string_lossy());

    let steps: [&[&str]; 2] = [
        &[
            "pdmaint",
            "generate",
            "--out-dir",
            &data_s,
            "--machines",
            "12",
            "--days",
            "90",
            "--seed",
            "7",
        ],
        &[
            "pdmaint",
            "prune",
            "--in-dir",
            &data_s,
            "--preset",
            "paper-reduced",
            "--out-dir",
            &report_s,
            "--sweep-weights",
            "1,10,100",
        ],
    ];
    for args in steps {
        let code = pdmaint::cli::run(args.iter().copied());
        if code != 0 {
            std::process::exit(code);
        }
    }

    let mut files: Vec<_> = std::fs::read_dir(&report)
        .expect("report directory exists")
        .map(|e| {
            e.expect("readable entry")
                .file_name()
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    files.sort();
    for f in files {
        println!("  {}", report.join(f).display());
    }
}
