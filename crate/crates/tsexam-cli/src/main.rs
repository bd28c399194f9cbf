use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::init();
    match tsexam_cli::run(std::env::args()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            // clap's help/version "errors" print themselves and exit cleanly.
            if let Some(clap_error) = error.downcast_ref::<clap::Error>() {
                let _ = clap_error.print();
                return if clap_error.use_stderr() {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                };
            }
            let structured = serde_json::json!({
                "error": { "message": format!("{error:#}") }
            });
            eprintln!("{structured}");
            ExitCode::FAILURE
        }
    }
}
