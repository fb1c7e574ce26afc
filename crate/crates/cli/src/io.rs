//! Text formats: edge lists, point clouds, signal and matrix CSVs.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use graphred_core::{Graph, PointSet, Signal};

use crate::error::{CliError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line(), e.to_string()))
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("not a number: `{tok}`")))?;
    if !v.is_finite() {
        return Err(CliError::parse(path, line, format!("non-finite value `{tok}`")));
    }
    Ok(v)
}

fn parse_usize(path: &Path, line: usize, tok: &str) -> Result<usize> {
    tok.trim()
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("not a non-negative integer: `{tok}`")))
}

/// Edge list with a `# nodes N` header and one `i j w` line per edge.
pub fn format_edges(graph: &Graph) -> String {
    let mut out = format!("# nodes {}\n", graph.n_nodes());
    for (i, j, w) in graph.edges() {
        out.push_str(&format!("{i} {j} {w}\n"));
    }
    out
}

pub fn write_edges(path: &Path, graph: &Graph) -> Result<()> {
    write_text(path, &format_edges(graph))
}

/// Reads an `i j w` edge list. Without a `# nodes N` header the node count
/// is one past the largest index.
pub fn read_edges(path: &Path) -> Result<Graph> {
    let text = read_text(path)?;
    let mut n_nodes = None;
    let mut edges = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            let mut it = c.split_whitespace();
            if it.next() == Some("nodes") {
                let n = it.next().ok_or_else(|| CliError::parse(path, line, "missing node count"))?;
                n_nodes = Some(parse_usize(path, line, n)?);
            }
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(CliError::parse(path, line, "expected `i j w`"));
        }
        edges.push((
            parse_usize(path, line, toks[0])?,
            parse_usize(path, line, toks[1])?,
            parse_f64(path, line, toks[2])?,
        ));
    }
    let n = n_nodes.unwrap_or_else(|| edges.iter().map(|e| e.0.max(e.1) + 1).max().unwrap_or(0));
    Graph::from_edges(n, edges).map_err(|e| CliError::parse(path, 0, e.to_string()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<fs::File>>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(f)))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::parse(path, line, format!("{other:?}")),
    }
}

/// Writes rows of numbers with the shortest round-trip representation.
pub fn write_rows<I, R>(path: &Path, header: Option<&[&str]>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = f64>,
{
    let mut w = csv_writer(path)?;
    if let Some(h) = header {
        w.write_record(h).map_err(|e| csv_err(path, e))?;
    }
    for row in rows {
        let rec: Vec<String> = row.into_iter().map(|v| v.to_string()).collect();
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a headerless CSV of numbers. All rows must have the same width.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(f);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = rec.iter().map(|t| parse_f64(path, line, t)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::parse(path, line, format!("expected {} columns, got {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// One row per node, one column per channel.
pub fn write_signals(path: &Path, channels: &[Signal]) -> Result<()> {
    let n = channels.first().map_or(0, |c| c.len());
    write_rows(path, None, (0..n).map(|i| channels.iter().map(move |c| c[i])))
}

pub fn read_signals(path: &Path) -> Result<Vec<Signal>> {
    let rows = read_rows(path)?;
    let width = rows.first().map_or(0, Vec::len);
    Ok((0..width)
        .map(|c| Signal::from_iterator(rows.len(), rows.iter().map(|r| r[c])))
        .collect())
}

pub fn write_matrix_csv(path: &Path, m: &graphred_core::graph::Laplacian) -> Result<()> {
    let m = m.matrix();
    write_rows(path, None, m.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()))
}

pub fn write_points(path: &Path, points: &PointSet) -> Result<()> {
    let c = points.coords();
    write_rows(path, None, (0..c.nrows()).map(|i| c.row(i).iter().copied().collect::<Vec<_>>()))
}

pub fn read_points_csv(path: &Path) -> Result<PointSet> {
    let rows = read_rows(path)?;
    PointSet::from_rows(&rows).map_err(|e| CliError::parse(path, 0, e.to_string()))
}

/// Vertex block of an OFF file. Faces are ignored. Accepts the header
/// counts on the `OFF` line itself (`OFF490 518 0`).
pub fn read_off(path: &Path) -> Result<PointSet> {
    let text = read_text(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| CliError::parse(path, 1, "empty OFF file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| CliError::parse(path, hl, "missing OFF header"))?
        .trim();
    let (cl, counts) = if rest.is_empty() {
        lines.next().ok_or_else(|| CliError::parse(path, hl, "missing vertex/face counts"))?
    } else {
        (hl, rest)
    };
    let n_vertices = parse_usize(
        path,
        cl,
        counts
            .split_whitespace()
            .next()
            .ok_or_else(|| CliError::parse(path, cl, "missing vertex count"))?,
    )?;
    let mut rows = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (line, l) = lines
            .next()
            .ok_or_else(|| CliError::parse(path, cl, format!("expected {n_vertices} vertices")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(CliError::parse(path, line, "vertex needs 3 coordinates"));
        }
        rows.push(toks[..3].iter().map(|t| parse_f64(path, line, t)).collect::<Result<Vec<_>>>()?);
    }
    PointSet::from_rows(&rows).map_err(|e| CliError::parse(path, 0, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PointFormat {
    Csv,
    Off,
}

pub fn load_point_cloud(path: &Path, format: Option<PointFormat>) -> Result<PointSet> {
    let format = format.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("off") => PointFormat::Off,
        _ => PointFormat::Csv,
    });
    match format {
        PointFormat::Csv => read_points_csv(path),
        PointFormat::Off => read_off(path),
    }
}
