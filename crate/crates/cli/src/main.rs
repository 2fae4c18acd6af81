use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ir_core::chart::render_svg;
use ir_core::dataset::{ingest_csv_reader, SchemaHint};
use ir_core::synth::{generate, GeneratorSpec};
use ir_core::{run_analysis, AnalysisError, AnalysisRequest};

/// Headless inline replication analyses and synthetic data.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    /// The full analysis response as JSON.
    Json,
    /// A static SVG of the chart.
    SvgSummary,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one analysis request against a CSV file.
    Analyze {
        /// Analysis request JSON; `dataset` defaults to the CSV file stem.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        out: OutFormat,
        /// JSON object mapping column names to kinds.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Write here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Draw fold marks and unfold regions in the SVG.
        #[arg(long)]
        unfold: bool,
    },
    /// Generate a synthetic dataset as CSV.
    Synth {
        /// Generator spec JSON.
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV path, or `-` for stdout.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn analyze(
    config: &Path,
    csv: &Path,
    out: OutFormat,
    schema: Option<&Path>,
    output: Option<&Path>,
    unfold: bool,
) -> Result<ExitCode> {
    let mut raw: serde_json::Value = read_json(config)?;
    let Some(obj) = raw.as_object_mut() else {
        bail!("{}: expected a JSON object", config.display());
    };
    if !obj.contains_key("dataset") {
        let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
        obj.insert("dataset".into(), stem.into());
    }
    let request: AnalysisRequest =
        serde_json::from_value(raw).with_context(|| format!("parsing {}", config.display()))?;
    let hint: Option<SchemaHint> = schema.map(read_json).transpose()?;
    let file = fs::File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
    let dataset = ingest_csv_reader(&request.dataset, std::io::BufReader::new(file), hint.as_ref())
        .with_context(|| format!("ingesting {}", csv.display()))?;

    let response = match run_analysis(&Arc::new(dataset), &request) {
        Ok(r) => r,
        Err(AnalysisError::AllUndefined(r)) => {
            for m in &r.measures {
                eprintln!("{}: {:?}", m.label, m.reasons);
            }
            eprintln!("error: every measure is undefined");
            return Ok(ExitCode::from(3));
        }
        Err(e) => bail!(e),
    };
    for w in &response.warnings {
        match &w.measure {
            Some(m) => eprintln!("warning [{}] {m}: {}", w.code, w.message),
            None => eprintln!("warning [{}] {}", w.code, w.message),
        }
    }
    let bytes = match out {
        OutFormat::Json => {
            let mut b = serde_json::to_vec(&response)?;
            b.push(b'\n');
            b
        }
        OutFormat::SvgSummary => render_svg(&response.chart, unfold).into_bytes(),
    };
    write_output(output, &bytes)?;
    Ok(ExitCode::SUCCESS)
}

fn synth(spec: &Path, out: &Path) -> Result<ExitCode> {
    let spec: GeneratorSpec = read_json(spec)?;
    let dataset = generate(&spec)?;
    let mut buf = Vec::new();
    dataset.write_csv(&mut buf)?;
    write_output(Some(out), &buf)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze {
            config,
            csv,
            out,
            schema,
            output,
            unfold,
        } => analyze(config, csv, *out, schema.as_deref(), output.as_deref(), *unfold),
        Command::Synth { spec, out } => synth(spec, out),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
