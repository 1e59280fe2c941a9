use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use capsel::config::PipelineConfig;
use capsel::data::{load_query_list_file, CaptionDatabase};
use capsel::pipeline::{evaluate, read_reports, run_pipeline, write_reports, Decision, Resources, SelectionReport, Status};
use capsel::{Error, Result};

#[derive(Parser)]
#[command(name = "capsel", version, about = "Select a caption for each query image from its visual neighbours")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select captions for a list of query images and write JSON Lines reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Query ids, one per line. Defaults to the config's query list.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Score the chosen captions with BLEU-1..4 and ROUGE-L.
    Eval {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        captions: PathBuf,
        /// Also write the full evaluation, per-image rows included, as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show how the caption for one image was chosen.
    Inspect {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        image_id: String,
        /// Print the raw report as indented JSON.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            queries,
            out,
            workers,
        } => cmd_run(&config, queries.as_deref(), &out, workers),
        Command::Eval { reports, captions, out } => cmd_eval(&reports, &captions, out.as_deref()).map(|_| true),
        Command::Inspect { report, image_id, json } => cmd_inspect(&report, &image_id, json).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Returns `Ok(false)` when the run finished but some queries failed.
fn cmd_run(config_path: &Path, queries: Option<&Path>, out: &Path, workers: Option<usize>) -> Result<bool> {
    let config = PipelineConfig::load(config_path)?;
    let query_path = match (queries, &config.query_list_path) {
        (Some(q), _) => q.to_path_buf(),
        (None, Some(q)) => q.clone(),
        (None, None) => return Err(Error::InvalidParameter("no query list: pass --queries".into())),
    };
    let query_ids = load_query_list_file(&query_path)?;
    let workers = workers
        .or(config.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let resources = Resources::load(config)?;
    let reports = run_pipeline(&resources, &query_ids, workers)?;

    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    write_reports(BufWriter::new(file), &reports)?;

    let failed = reports.iter().filter(|r| r.status == Status::Error).count();
    eprintln!(
        "{} queries, {} selected, {} failed -> {}",
        reports.len(),
        reports.len() - failed,
        failed,
        out.display()
    );
    Ok(failed == 0)
}

fn load_reports(path: &Path) -> Result<Vec<SelectionReport>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_reports(BufReader::new(file), &path.display().to_string())
}

fn cmd_eval(reports: &Path, captions: &Path, out: Option<&Path>) -> Result<()> {
    let reports = load_reports(reports)?;
    let db = CaptionDatabase::load_file(captions)?;
    let eval = evaluate(&reports, &db)?;
    println!("images   {}", eval.corpus_size);
    println!("skipped  {}", eval.skipped);
    for (n, b) in eval.bleu().iter().enumerate() {
        println!("BLEU-{}   {:.4}", n + 1, b);
    }
    println!("ROUGE-L  {:.4}", eval.rouge_l);
    if let Some(out) = out {
        let file = File::create(out).map_err(|e| Error::io(out, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &eval)?;
    }
    Ok(())
}

fn cmd_inspect(path: &Path, image_id: &str, json: bool) -> Result<()> {
    let reports = load_reports(path)?;
    let report = reports
        .iter()
        .find(|r| r.image_id == image_id)
        .ok_or_else(|| Error::InvalidParameter(format!("no report for image `{image_id}`")))?;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    if json {
        serde_json::to_writer_pretty(&mut w, report)?;
        writeln!(w).map_err(|e| Error::io("<stdout>", e))?;
        return Ok(());
    }
    print_report(&mut w, report).map_err(|e| Error::io("<stdout>", e))
}

fn print_report(w: &mut impl Write, report: &SelectionReport) -> io::Result<()> {
    writeln!(w, "image      {}", report.image_id)?;
    let Some(d) = &report.decision else {
        writeln!(w, "status     error")?;
        return writeln!(w, "error      {}", report.error.as_deref().unwrap_or("unknown"));
    };
    print_decision(w, d)
}

fn print_decision(w: &mut impl Write, d: &Decision) -> io::Result<()> {
    writeln!(w, "branch     {}", d.branch)?;
    if !d.reference_tags.is_empty() {
        writeln!(w, "tags       {}", d.reference_tags.join(", "))?;
    }
    writeln!(
        w,
        "neighbours {} within radius {:.6} (closest {:.6}, {} truncated)",
        d.neighbors.count, d.neighbors.radius, d.neighbors.closest_distance, d.neighbors.truncated
    )?;
    for n in &d.neighbors.entries {
        writeln!(w, "  {:<16} d={:.6} sim={:.6}", n.image_id, n.distance, n.similarity)?;
    }
    let slots = &d.query_slots;
    writeln!(w, "objects    {}", slots.objects.join(", "))?;
    let attrs: Vec<String> = slots.attribute_pairs.iter().map(|p| p.phrase()).collect();
    writeln!(w, "attributes {}", attrs.join(", "))?;
    writeln!(w, "actions    {}", slots.actions.join(", "))?;

    writeln!(w, "candidates {} of {}", d.candidates.len(), d.total_captions)?;
    let closeness = d.topsis.as_ref().map(|t| &t.closeness);
    for (i, c) in d.candidates.iter().enumerate() {
        let marker = if i == d.chosen.candidate { '*' } else { ' ' };
        write!(w, " {marker}{i:>3} cos={:.4}", c.cosine)?;
        if let Some(s) = &c.scores {
            write!(
                w,
                " obj={:+.4} attr={:+.4} act={:+.4}",
                s.objects.score, s.attributes.score, s.actions.score
            )?;
        }
        if let Some(cl) = closeness {
            write!(w, " cl={:.4}", cl[i])?;
        }
        writeln!(w, "  {}#{} \"{}\"", c.image_id, c.caption_index, c.caption)?;
    }
    if let Some(m) = &d.matrix {
        let offsets: Vec<String> = m.offsets.iter().map(|o| format!("{o:.4}")).collect();
        writeln!(w, "shift      {}", offsets.join(" "))?;
    }
    if let Some(weights) = &d.weights {
        let ws: Vec<String> = weights.weights.as_slice().iter().map(|x| format!("{x:.4}")).collect();
        let fallback = if weights.uniform_fallback { " (uniform fallback)" } else { "" };
        writeln!(w, "weights    {}{fallback}", ws.join(" "))?;
    }
    writeln!(w, "chosen     {}#{} \"{}\"", d.chosen.image_id, d.chosen.caption_index, d.chosen.caption)?;
    for t in &d.tie_breaks {
        writeln!(w, "tie-break  {t}")?;
    }
    Ok(())
}
