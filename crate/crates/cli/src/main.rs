mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use commands::BadInput;

fn exit_code(err: &anyhow::Error) -> u8 {
    use posetraj::Error as E;
    for cause in err.chain() {
        if cause.is::<BadInput>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonFinite(_) | E::Diverged { .. } => 1,
                E::Io(io) if io.kind() != std::io::ErrorKind::NotFound => 1,
                _ => 2,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == std::io::ErrorKind::NotFound { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        let bad = anyhow::Error::new(BadInput("x".into())).context("outer");
        assert_eq!(exit_code(&bad), 2);
        let missing = anyhow::Error::new(std::io::Error::from(std::io::ErrorKind::NotFound));
        assert_eq!(exit_code(&missing), 2);
        let diverged = anyhow::Error::new(posetraj::Error::NonFinite("w".into()));
        assert_eq!(exit_code(&diverged), 1);
        let mismatch = anyhow::Error::new(posetraj::Error::SkeletonMismatch("s".into()));
        assert_eq!(exit_code(&mismatch), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("internal")), 1);
    }
}
