use std::process::ExitCode;

fn main() -> ExitCode {
    let cfg = match onebit_sim::parse_config(std::env::args_os()) {
        Ok(cfg) => cfg,
        Err(e) => {
            let code = e.exit_code();
            if let onebit_sim::ConfigError::Usage(clap_err) = &e {
                let _ = clap_err.print();
            } else {
                eprintln!("error: {e}");
            }
            return ExitCode::from(code as u8);
        }
    };
    match onebit_sim::run_and_emit(&cfg) {
        Ok(report) => {
            println!("wrote {} rows to {}", report.rows, report.path.display());
            for (k, v) in &report.summary {
                println!("{k}: {v}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
