use fcil_core::harness::{run, write_run_report, load_run_report, RunConfig};

fn main() {
    let mut cfg = RunConfig::synthetic(4, 4, 2, 2, 0.5, 8);
    cfg.samples_per_class = 20;
    cfg.rounds_per_task = 1;
    cfg.local_epochs = 1;
    cfg.rebalance_per_class = 16;
    let out = run(&cfg).unwrap();
    let dir = std::path::Path::new("/tmp/report_dbg");
    write_run_report(&out.report, dir).unwrap();
    let loaded = load_run_report(&dir.join("report.json")).unwrap();
    let a = serde_json::to_string_pretty(&out.report).unwrap();
    let b = serde_json::to_string_pretty(&loaded).unwrap();
    if a == b {
        println!("serialized forms identical");
    }
    if loaded == out.report {
        println!("PartialEq identical");
    } else {
        println!("PartialEq DIFFERS");
        // compare components
        println!("config eq: {}", loaded.config == out.report.config);
        println!("rounds eq: {}", loaded.rounds == out.report.rounds);
        println!("matrix eq: {}", loaded.accuracy_matrix == out.report.accuracy_matrix);
        println!("faa eq: {}", loaded.faa == out.report.faa);
        println!("cfg a: {:?}", out.report.config);
        println!("cfg b: {:?}", loaded.config);
    }
}
