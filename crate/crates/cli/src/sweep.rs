use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};

use anyhow::{bail, Context, Result};
use cunning_core::sweep::{
    run_sweep, slice, Manifest, SweepGrid, SweepOptions, SweepRecord, CSV_HEADER,
};

use crate::config::RunConfig;
use crate::output::{label, OutDir};

const RECORDS: &str = "sweep.csv";
const MANIFEST: &str = "sweep_manifest.txt";

/// Reads the records of a previous partial run, keeping the first `keep`.
fn load_records(text: &str, keep: usize) -> Result<Vec<SweepRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        bail!("{RECORDS} has an unexpected header");
    }
    let records = lines
        .enumerate()
        .take(keep)
        .map(|(k, l)| SweepRecord::parse_csv_row(l, k + 2))
        .collect::<cunning_core::Result<Vec<_>>>()?;
    if records.len() < keep {
        bail!(
            "{RECORDS} holds {} records but the manifest lists {keep} completed tasks",
            records.len()
        );
    }
    Ok(records)
}

/// Loads the manifest and records of an interrupted run and rewrites the
/// records file to exactly the completed tasks. Anything inconsistent is an
/// error; the caller asks for an explicit fresh start instead.
fn resume_state(out: &OutDir, grid: &SweepGrid) -> Result<Option<Manifest>> {
    let manifest_path = out.path(MANIFEST);
    let records_path = out.path(RECORDS);
    if !manifest_path.exists() {
        if records_path.exists() {
            bail!("{RECORDS} exists without {MANIFEST}");
        }
        return Ok(None);
    }
    let manifest = Manifest::parse(&fs::read_to_string(&manifest_path)?)?;
    manifest.check(grid)?;
    let text = fs::read_to_string(&records_path)
        .with_context(|| format!("cannot read {}", records_path.display()))?;
    let records = load_records(&text, manifest.completed.len())?;
    let mut w = BufWriter::new(fs::File::create(&records_path)?);
    writeln!(w, "{CSV_HEADER}")?;
    for r in &records {
        r.write_csv_row(&mut w)?;
    }
    w.flush()?;
    Ok(Some(manifest))
}

pub fn cmd_sweep(
    config: &RunConfig,
    out: &mut OutDir,
    seed: Option<u64>,
    fresh: bool,
    limit: Option<usize>,
) -> Result<()> {
    let grid = config.sweep_grid(seed)?;
    let resumed = if fresh {
        None
    } else {
        resume_state(out, &grid)
            .context("refusing to resume the sweep; pass --fresh to discard the previous output")?
    };
    let skip = match resumed {
        Some(m) => m.completed,
        None => {
            fs::write(out.path(RECORDS), format!("{CSV_HEADER}\n"))?;
            fs::write(out.path(MANIFEST), Manifest::new(&grid).header())?;
            Default::default()
        }
    };
    let append = |name: &str| -> Result<BufWriter<fs::File>> {
        let file = OpenOptions::new().append(true).open(out.path(name))?;
        Ok(BufWriter::new(file))
    };
    let mut records = append(RECORDS)?;
    let mut log = append(MANIFEST)?;
    let options = SweepOptions {
        workers: config.sweep_workers()?,
        timing: config.sweep_timing()?,
        skip: skip.clone(),
        limit,
    };
    let mut done = skip.len();
    run_sweep(&grid, &options, |task, record| {
        record.write_csv_row(&mut records)?;
        records.flush()?;
        log.write_all(Manifest::done_line(task).as_bytes())?;
        log.flush()?;
        done += 1;
        Ok(())
    })
    .context("sweep aborted; the manifest lists the completed tasks")?;

    let total = grid.tasks();
    if done < total {
        eprintln!("sweep paused after {done} of {total} tasks; rerun to continue");
        return Ok(());
    }
    let all = load_records(&fs::read_to_string(out.path(RECORDS))?, total)?;
    for k in grid.k.values() {
        for lambda in grid.lambda.values() {
            let matrix = slice(&all, k, lambda, &grid.b, &grid.b0);
            let name = format!("slice_K{}_lambda{}.csv", label(k), label(lambda));
            out.write(&name, |w| Ok(matrix.write_csv(w)?))?;
        }
    }
    Ok(())
}
