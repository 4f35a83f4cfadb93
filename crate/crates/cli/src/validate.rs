use std::path::PathBuf;
use std::process::ExitCode;

use abss_core::io::validate_manifest;
use abss_core::Result;
use clap::Args;

use crate::output::{emit, to_csv, to_json, Format};
use crate::OutputArgs;

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

/// Exit 0 when every record passes, 1 otherwise.
pub fn run(args: ValidateArgs) -> Result<ExitCode> {
    let report = validate_manifest(&args.manifest);
    let text = match args.output.format {
        Format::Json => to_json(&report)?,
        Format::Csv => to_csv(
            &["record", "kind", "message"],
            report.diagnostics.iter().map(|d| {
                vec![
                    d.record.map(|r| r.to_string()).unwrap_or_default(),
                    d.kind.to_string(),
                    d.message.clone(),
                ]
            }),
        )?,
        Format::Text => report.diagnostics.iter().map(|d| format!("{d}\n")).collect(),
    };
    emit(args.output.out.as_deref(), &text)?;
    eprintln!(
        "{} record(s) checked, {} problem(s)",
        report.records_checked,
        report.diagnostics.len()
    );
    Ok(if report.is_clean() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
