//! Wafer bin map data model, neighborhood graphs and the two grid file formats.
//!
//! ASCII grids use `.`, `0`, `1` for outside-mask, functional and defective
//! chips. CSV grids follow the public wafer dataset convention where `0` is no
//! die, `1` a passing die and `2` a failing die.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WaferError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown symbol {symbol:?} at line {line}, column {column}")]
    UnknownSymbol {
        symbol: String,
        line: usize,
        column: usize,
    },
    #[error("empty grid")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    OutsideMask,
    Functional,
    Defective,
}

impl CellState {
    pub fn in_mask(self) -> bool {
        self != CellState::OutsideMask
    }

    pub fn is_defective(self) -> bool {
        self == CellState::Defective
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neighborhood {
    Rook,
    #[default]
    King,
}

impl Neighborhood {
    /// Offsets pointing strictly forward in row-major order, so each
    /// undirected edge is produced exactly once with `i < j`.
    fn forward_offsets(self) -> &'static [(isize, isize)] {
        match self {
            Neighborhood::Rook => &[(0, 1), (1, 0)],
            Neighborhood::King => &[(0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }

    pub fn all_offsets(self) -> &'static [(isize, isize)] {
        match self {
            Neighborhood::Rook => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Neighborhood::King => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }

    pub fn max_degree(self) -> usize {
        self.all_offsets().len()
    }
}

impl std::str::FromStr for Neighborhood {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rook" => Ok(Neighborhood::Rook),
            "king" => Ok(Neighborhood::King),
            other => Err(format!("unknown neighborhood {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridFormat {
    #[default]
    Ascii,
    Csv,
}

impl std::str::FromStr for GridFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ascii" => Ok(GridFormat::Ascii),
            "csv" => Ok(GridFormat::Csv),
            other => Err(format!("unknown grid format {other:?}")),
        }
    }
}

/// A rectangular grid of chips with a (usually circular) wafer mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaferMap {
    rows: usize,
    cols: usize,
    cells: Vec<CellState>,
    pub name: Option<String>,
}

impl WaferMap {
    pub fn new(rows: usize, cols: usize, cells: Vec<CellState>) -> Result<Self, WaferError> {
        if rows == 0 || cols == 0 {
            return Err(WaferError::Empty);
        }
        if cells.len() != rows * cols {
            return Err(WaferError::Dimension {
                expected: rows * cols,
                actual: cells.len(),
            });
        }
        if !cells.iter().any(|c| c.in_mask()) {
            return Err(WaferError::Empty);
        }
        Ok(Self {
            rows,
            cols,
            cells,
            name: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> Option<CellState> {
        if row < self.rows && col < self.cols {
            Some(self.cells[row * self.cols + col])
        } else {
            None
        }
    }

    pub fn defective_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_defective()).count()
    }

    pub fn in_mask_count(&self) -> usize {
        self.cells.iter().filter(|c| c.in_mask()).count()
    }

    /// In-mask cells in row-major order; this is the node order of
    /// [`AdjacencyGraph`].
    pub fn in_mask_coords(&self) -> Vec<(usize, usize)> {
        (0..self.cells.len())
            .filter(|&k| self.cells[k].in_mask())
            .map(|k| (k / self.cols, k % self.cols))
            .collect()
    }

    pub fn defective_coords(&self) -> Vec<(usize, usize)> {
        (0..self.cells.len())
            .filter(|&k| self.cells[k].is_defective())
            .map(|k| (k / self.cols, k % self.cols))
            .collect()
    }

    /// Replaces the defect indicators of in-mask cells with `labels`, given in
    /// node order.
    pub fn with_labels(&self, labels: &[bool]) -> Result<Self, WaferError> {
        let expected = self.in_mask_count();
        if labels.len() != expected {
            return Err(WaferError::Dimension {
                expected,
                actual: labels.len(),
            });
        }
        let mut it = labels.iter();
        let cells = self
            .cells
            .iter()
            .map(|&c| match c {
                CellState::OutsideMask => CellState::OutsideMask,
                _ => {
                    if *it.next().expect("length checked") {
                        CellState::Defective
                    } else {
                        CellState::Functional
                    }
                }
            })
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            cells,
            name: self.name.clone(),
        })
    }
}

/// Mask-aware graph over in-mask chips. Node `k` sits at `coords[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    pub coords: Vec<(usize, usize)>,
    pub edges: Vec<(usize, usize)>,
    pub neighborhood: Neighborhood,
}

impl AdjacencyGraph {
    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }
}

pub fn build_graph(map: &WaferMap, nb: Neighborhood) -> AdjacencyGraph {
    let (rows, cols) = (map.rows, map.cols);
    let mut index = vec![usize::MAX; rows * cols];
    let mut coords = Vec::new();
    for (k, cell) in map.cells.iter().enumerate() {
        if cell.in_mask() {
            index[k] = coords.len();
            coords.push((k / cols, k % cols));
        }
    }
    let mut edges = Vec::new();
    for (i, &(r, c)) in coords.iter().enumerate() {
        for &(dr, dc) in nb.forward_offsets() {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr as usize >= rows || nc as usize >= cols {
                continue;
            }
            let j = index[nr as usize * cols + nc as usize];
            if j != usize::MAX {
                edges.push((i, j));
            }
        }
    }
    AdjacencyGraph {
        coords,
        edges,
        neighborhood: nb,
    }
}

pub fn parse_wafer(text: &str, format: GridFormat) -> Result<WaferMap, WaferError> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    let mut rows: Vec<Vec<CellState>> = Vec::with_capacity(lines.len());
    for (idx, raw) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let row = match format {
            GridFormat::Ascii => parse_ascii_row(line, line_no)?,
            GridFormat::Csv => parse_csv_row(line, line_no)?,
        };
        if row.is_empty() {
            return Err(WaferError::Parse {
                line: line_no,
                message: "empty row".into(),
            });
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(WaferError::Parse {
                    line: line_no,
                    message: format!("row has {} cells, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(WaferError::Empty);
    }
    let (r, c) = (rows.len(), rows[0].len());
    WaferMap::new(r, c, rows.into_iter().flatten().collect())
}

fn parse_ascii_row(line: &str, line_no: usize) -> Result<Vec<CellState>, WaferError> {
    line.chars()
        .enumerate()
        .map(|(col, ch)| match ch {
            '.' => Ok(CellState::OutsideMask),
            '0' => Ok(CellState::Functional),
            '1' => Ok(CellState::Defective),
            other => Err(WaferError::UnknownSymbol {
                symbol: other.to_string(),
                line: line_no,
                column: col + 1,
            }),
        })
        .collect()
}

fn parse_csv_row(line: &str, line_no: usize) -> Result<Vec<CellState>, WaferError> {
    if line.trim().is_empty() {
        return Ok(Vec::new());
    }
    line.split(',')
        .enumerate()
        .map(|(col, field)| match field.trim() {
            "0" => Ok(CellState::OutsideMask),
            "1" => Ok(CellState::Functional),
            "2" => Ok(CellState::Defective),
            other => Err(WaferError::UnknownSymbol {
                symbol: other.to_string(),
                line: line_no,
                column: col + 1,
            }),
        })
        .collect()
}

/// Serializes a map. With `overlay`, in-mask cells take the overlay value
/// (node order) as their defect indicator.
pub fn write_wafer(
    map: &WaferMap,
    overlay: Option<&[bool]>,
    format: GridFormat,
) -> Result<String, WaferError> {
    let map = match overlay {
        Some(labels) => map.with_labels(labels)?,
        None => map.clone(),
    };
    let mut out = String::with_capacity(map.rows * (map.cols * 2 + 1));
    for r in 0..map.rows {
        let row = &map.cells[r * map.cols..(r + 1) * map.cols];
        match format {
            GridFormat::Ascii => {
                out.extend(row.iter().map(|c| match c {
                    CellState::OutsideMask => '.',
                    CellState::Functional => '0',
                    CellState::Defective => '1',
                }));
            }
            GridFormat::Csv => {
                let fields: Vec<&str> = row
                    .iter()
                    .map(|c| match c {
                        CellState::OutsideMask => "0",
                        CellState::Functional => "1",
                        CellState::Defective => "2",
                    })
                    .collect();
                out.push_str(&fields.join(","));
            }
        }
        out.push('\n');
    }
    Ok(out)
}
