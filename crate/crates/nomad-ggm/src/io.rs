//! File formats: graph, AST and distance JSON, dense row-major matrices,
//! and data CSV with a header row of vertex ids.

use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{NomadError, Result};
use crate::ggm::DistanceMatrix;
use crate::graph::{ArticulatedSetTree, UndirectedGraph};

/// Serde adapter writing a matrix as a list of rows.
pub mod row_major {
    use nalgebra::DMatrix;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::rows_to_matrix(&rows).map_err(D::Error::custom)
    }
}

/// Rows of a matrix.
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Matrix from equal-length rows.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(NomadError::DimensionMismatch {
            expected: m,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Square matrix from a JSON array of rows.
pub fn parse_square_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
    let m = rows_to_matrix(&rows)?;
    if m.nrows() != m.ncols() {
        return Err(NomadError::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(m)
}

/// JSON text of a matrix as a list of rows.
pub fn matrix_json(m: &DMatrix<f64>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&matrix_to_rows(m))?)
}

fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

/// Pretty JSON of any serializable value.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

/// Graph from `{"p": .., "edges": [[u, v], ..]}`.
pub fn parse_graph(text: &str) -> Result<UndirectedGraph> {
    from_json(text)
}

/// AST from `{"parts": .., "edges": .., "articulation": ..}`; the tree is
/// validated.
pub fn parse_ast(text: &str) -> Result<ArticulatedSetTree> {
    let ast: ArticulatedSetTree = from_json(text)?;
    ast.validate()?;
    Ok(ast)
}

/// Distance matrix from `{"labels": [..], "values": [[..], ..]}`.
pub fn parse_distances(text: &str) -> Result<DistanceMatrix> {
    let d: DistanceMatrix = from_json(text)?;
    if d.values.nrows() != d.labels.len() || d.values.ncols() != d.labels.len() {
        return Err(NomadError::DimensionMismatch {
            expected: d.labels.len(),
            got: d.values.nrows(),
        });
    }
    Ok(d)
}

/// Data matrix (one row per sample) from CSV whose header row lists the
/// vertex ids `1..=p` in order.
pub fn parse_data_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    for (i, h) in header.iter().enumerate() {
        let id: usize = h.parse().map_err(|_| NomadError::Parse(format!("header entry `{h}` is not a vertex id")))?;
        if id != i + 1 {
            return Err(NomadError::NonDenseLabels(header.len()));
        }
    }
    let p = header.len();
    let mut values = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != p {
            return Err(NomadError::DimensionMismatch {
                expected: p,
                got: rec.len(),
            });
        }
        for f in rec.iter() {
            values.push(f.parse::<f64>().map_err(|e| NomadError::Parse(format!("`{f}`: {e}")))?);
        }
        n += 1;
    }
    Ok(DMatrix::from_row_slice(n, p, &values))
}

/// CSV text of a data matrix with a header row `1,2,..,p`.
pub fn data_csv(data: &DMatrix<f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((1..=data.ncols()).map(|i| i.to_string()))?;
    for i in 0..data.nrows() {
        w.write_record(data.row(i).iter().map(|x| x.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| NomadError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| NomadError::Io(e.to_string()))
}

/// Graph from a symmetric 0/1 (or weighted) adjacency matrix given as JSON
/// rows; nonzero off-diagonal entries are edges.
pub fn parse_adjacency(text: &str) -> Result<UndirectedGraph> {
    let m = parse_square_matrix(text)?;
    let p = m.nrows();
    let mut g = UndirectedGraph::with_vertices(1..=p);
    for i in 0..p {
        for j in i + 1..p {
            if m[(i, j)] != 0.0 || m[(j, i)] != 0.0 {
                g.add_edge(i + 1, j + 1)?;
            }
        }
    }
    Ok(g)
}

/// Reads a whole file to a string.
pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}
