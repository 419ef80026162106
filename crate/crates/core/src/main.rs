use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtocs_core::analytics::synthesis::{
    synthesize_cohort, synthesize_responses, CohortTargets, SurveyTargets, DEFAULT_SEED,
};
use mtocs_core::analytics::{self, csv_table, text_table};
use mtocs_core::config::Config;
use mtocs_core::domain::OrganizationId;
use mtocs_core::storage::export::{parse_csv, write_csv, ExportRow};
use mtocs_core::{api, Error, Result};

#[derive(Parser)]
#[command(
    name = "mtocs",
    version,
    about = "Community eye screening workflow service and analytics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTPS service.
    Serve {
        #[arg(long, env = "MTOCS_CONFIG")]
        config: Option<PathBuf>,
        /// Serve plain HTTP. For local development only.
        #[arg(long)]
        dev_plaintext: bool,
    },
    /// Read a password from stdin and print its hash for the config file.
    HashPassword,
    /// Load an export CSV into an organization of the configured data file.
    Import {
        #[arg(long, env = "MTOCS_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        org: String,
        file: PathBuf,
    },
    /// Cohort and satisfaction survey statistics.
    #[command(subcommand)]
    Analytics(AnalyticsCommand),
}

#[derive(Subcommand)]
enum AnalyticsCommand {
    /// Participant profile: category counts and shares, age mean and range.
    Demographics {
        #[command(flatten)]
        source: ExportSource,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Count, mean and SD per theme, and the response rate.
    Likert {
        #[arg(long)]
        responses: PathBuf,
        /// Number of people invited to the survey.
        #[arg(long)]
        invited: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Answer histogram of one theme per language group.
    Stratify {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, default_value = "language")]
        theme: String,
        /// Export used to look up languages of responses without one.
        #[command(flatten)]
        source: OptionalExportSource,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Write a seeded cohort export and satisfaction responses.
    Synthesize {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Args)]
#[group(required = true, multiple = true)]
struct ExportSource {
    /// Export CSV file.
    #[arg(long, conflicts_with = "url")]
    export: Option<PathBuf>,
    /// Base URL of a running service to fetch the export from.
    #[arg(long, requires = "token")]
    url: Option<String>,
    #[arg(long, env = "MTOCS_TOKEN")]
    token: Option<String>,
    #[arg(long)]
    org: Option<String>,
}

#[derive(Args)]
struct OptionalExportSource {
    #[arg(long, conflicts_with = "url")]
    export: Option<PathBuf>,
    #[arg(long, requires = "token")]
    url: Option<String>,
    #[arg(long, env = "MTOCS_TOKEN")]
    token: Option<String>,
    #[arg(long)]
    org: Option<String>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn fetch_export(url: &str, token: &str, org: Option<&str>) -> Result<String> {
    let mut endpoint = format!("{}/api/export.csv", url.trim_end_matches('/'));
    if let Some(org) = org {
        endpoint += &format!("?org={}", OrganizationId::new(org)?.as_str());
    }
    let mut response = ureq::get(&endpoint)
        .header("Authorization", &format!("Bearer {token}"))
        .call()
        .map_err(|e| match e {
            ureq::Error::StatusCode(401) => Error::Unauthenticated,
            ureq::Error::StatusCode(403) => Error::Unauthorized("export requires an admin session".into()),
            other => Error::BackendUnavailable(format!("{endpoint}: {other}")),
        })?;
    response
        .body_mut()
        .read_to_string()
        .map_err(|e| Error::BackendUnavailable(e.to_string()))
}

fn load_rows(
    export: Option<&Path>,
    url: Option<&str>,
    token: Option<&str>,
    org: Option<&str>,
) -> Result<Option<Vec<ExportRow>>> {
    let text = match (export, url) {
        (Some(path), _) => read(path)?,
        (None, Some(url)) => fetch_export(url, token.unwrap_or_default(), org)?,
        (None, None) => return Ok(None),
    };
    parse_csv(&text).map(Some)
}

fn print_table(format: Format, header: &[&str], rows: &[Vec<String>]) {
    match format {
        Format::Table => print!("{}", text_table(header, rows)),
        Format::Csv => print!("{}", csv_table(header, rows)),
    }
}

fn analytics_command(command: AnalyticsCommand) -> Result<()> {
    match command {
        AnalyticsCommand::Demographics { source, format } => {
            let rows = load_rows(
                source.export.as_deref(),
                source.url.as_deref(),
                source.token.as_deref(),
                source.org.as_deref(),
            )?
            .ok_or(Error::EmptyInput("export"))?;
            let summary = analytics::demographics(&rows)?;
            print_table(format, &analytics::DEMOGRAPHIC_HEADER, &summary.table_rows());
        }
        AnalyticsCommand::Likert {
            responses,
            invited,
            format,
        } => {
            let responses = analytics::parse_responses(&read(&responses)?)?;
            let summaries = analytics::likert_by_theme(&responses)?;
            print_table(format, &analytics::LIKERT_HEADER, &analytics::likert_rows(&summaries));
            let responded = analytics::respondents(&responses).len() as u64;
            if let Some(invited) = invited {
                let rate = analytics::response_rate(responded, invited)?;
                eprintln!("response rate: {responded} of {invited} ({rate}%)");
            }
            if let Ok(groups) = analytics::respondent_languages(&responses) {
                let shares: Vec<String> = groups
                    .iter()
                    .map(|g| format!("{} {} ({}%)", g.category, g.count, g.percent))
                    .collect();
                eprintln!("respondent language: {}", shares.join(", "));
            }
        }
        AnalyticsCommand::Stratify {
            responses,
            theme,
            source,
            format,
        } => {
            let responses = analytics::parse_responses(&read(&responses)?)?;
            let rows = load_rows(
                source.export.as_deref(),
                source.url.as_deref(),
                source.token.as_deref(),
                source.org.as_deref(),
            )?
            .unwrap_or_default();
            let stratified = analytics::stratify(&responses, &theme, &analytics::languages_by_visit(&rows))?;
            print_table(format, &analytics::STRATIFIED_HEADER, &stratified.table_rows());
        }
        AnalyticsCommand::Synthesize { seed, out_dir } => {
            let cohort = synthesize_cohort(&CohortTargets::screening_program(), seed)?;
            let survey = synthesize_responses(&cohort, &SurveyTargets::satisfaction_survey(), seed)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("cohort.csv"), write_csv(&cohort))?;
            std::fs::write(
                out_dir.join("responses.csv"),
                analytics::write_responses(&survey.responses),
            )?;
            let invited: Vec<String> = survey.invited.iter().map(ToString::to_string).collect();
            std::fs::write(out_dir.join("invited.txt"), invited.join("\n") + "\n")?;
            eprintln!(
                "wrote {} participants, {} response rows, {} invited to {}",
                cohort.len(),
                survey.responses.len(),
                survey.invited.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve { config, dev_plaintext } => {
            let config = Config::load(config.as_deref())?;
            let tls = match (&config.tls_cert, &config.tls_key, dev_plaintext) {
                (_, _, true) => {
                    tracing::warn!("serving plain HTTP; use TLS outside local development");
                    None
                }
                (Some(cert), Some(key), false) => Some(api::tls_config(cert, key)?),
                _ => {
                    return Err(Error::Config(
                        "tls_cert and tls_key are required (or pass --dev-plaintext for local development)".into(),
                    ))
                }
            };
            let service = config.build_service()?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(api::serve(service, &config.addr, tls))
        }
        Command::HashPassword => {
            let mut line = String::new();
            std::io::stdin().lock().read_line(&mut line)?;
            let password = line.trim_end_matches(['\r', '\n']);
            if password.is_empty() {
                return Err(Error::validation("password", "empty"));
            }
            println!("{}", mtocs_core::access::hash_password(password)?);
            Ok(())
        }
        Command::Import { config, org, file } => {
            let config = Config::load(config.as_deref())?;
            if config.storage.data_file.is_none() {
                return Err(Error::Config(
                    "importing needs storage.data_file to keep the records".into(),
                ));
            }
            let service = config.build_service()?;
            let imported = service.import_csv(&OrganizationId::new(org)?, &read(&file)?)?;
            eprintln!("imported {imported} visits");
            Ok(())
        }
        Command::Analytics(command) => analytics_command(command),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            let status = api::status_of(&e).as_u16();
            ExitCode::from(if status == 400 || status == 422 { 2 } else { 1 })
        }
    }
}
