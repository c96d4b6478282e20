//! Training a forest on a whole file and classifying new rows with it.

use std::path::{Path, PathBuf};

use log::info;
use rfmlp::decision::predict_batch;
use rfmlp::forest::train_forest;
use rfmlp::{data, io, DecisionStrategy, Error, ForestModel, Matrix};

use crate::config::RunConfig;
use crate::error::{BenchError, Result};
use crate::report::CsvTable;

/// Trains one forest on every row of the configured data file, seeded with
/// the first configured seed, and saves it to `model_out`.
pub fn cmd_train(cfg: &RunConfig, model_out: &Path) -> Result<ForestModel> {
    let resolved = cfg.resolve()?;
    for notice in &resolved.notices {
        info!("{notice}");
    }
    let ds = data::load_csv(&cfg.data, &cfg.label_column, resolved.delimiter)?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let model = train_forest(&ds, &rows, &resolved.train, resolved.whiten, cfg.seeds[0])?;
    io::save_model(model_out, &model)?;
    info!(
        "trained {} members on {} rows (whitened: {}), saved to {}",
        model.members.len(),
        ds.len(),
        model.is_whitened(),
        model_out.display()
    );
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct PredictArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    pub strategy: DecisionStrategy,
    pub delimiter: u8,
    /// Dropped from the input when present.
    pub label_column: String,
    /// Standard output when `None`.
    pub output: Option<PathBuf>,
}

/// Reads the feature rows of `path`, dropping `label_column` if present.
/// An empty file yields zero rows.
fn read_features(path: &Path, delimiter: u8, label_column: &str, expected: usize) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| BenchError::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Matrix::zeros(0, expected));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| BenchError::csv(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| header[i] != label_column)
        .collect();
    if keep.len() != expected {
        return Err(Error::Dimension {
            context: "input feature columns",
            expected,
            found: keep.len(),
        }
        .into());
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| BenchError::csv(path, e))?;
        let line = r + 2;
        for &i in &keep {
            let cell = record.get(i).unwrap_or("");
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: line,
                    column: header[i].clone(),
                    value: cell.to_owned(),
                })?;
            values.push(v);
        }
        rows += 1;
    }
    Ok(Matrix::new(rows, expected, values)?)
}

/// Classifies every row of the input file. Output columns: `row`, `label`,
/// `class_index`, `fallback_used`, then `p_<class>` for the fused posterior.
pub fn cmd_predict(args: &PredictArgs) -> Result<CsvTable> {
    let model = io::load_model(&args.model)?;
    let x = read_features(&args.input, args.delimiter, &args.label_column, model.n_features())?;

    let mut header = vec![
        "row".to_string(),
        "label".into(),
        "class_index".into(),
        "fallback_used".into(),
    ];
    header.extend(model.class_names.iter().map(|c| format!("p_{c}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = CsvTable::new(&header_refs);

    // An empty input produces empty output rather than a header-only file.
    if x.rows() == 0 {
        write_output(args.output.as_deref(), &[])?;
        return Ok(table);
    }
    for (i, d) in predict_batch(&model, &x, args.strategy)?.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            model.class_names[d.label].clone(),
            d.label.to_string(),
            d.fallback_used.to_string(),
        ];
        match &d.posterior {
            Some(p) => row.extend(p.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), model.class_count)),
        }
        table.push(row);
    }
    write_output(args.output.as_deref(), &table.to_bytes())?;
    Ok(table)
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| BenchError::io(p, e)),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| BenchError::io("<stdout>", e))
        }
    }
}

