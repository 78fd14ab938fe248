//! GPU-level demand matrices, per-server-pair tiles, and the server-level
//! reduction.
//!
//! All sizes are integer bytes. GPU `g` lives on server `g / m` with local
//! index `g % m`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Topology;

/// Dense row-major square table of byte counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<u64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Dimension(format!(
                "row {bad} has {} entries, expected {n}",
                rows[bad].len()
            )));
        }
        Ok(SquareMatrix {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u64) {
        self.data[r * self.n + c] = v;
    }

    #[inline]
    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut u64 {
        &mut self.data[r * self.n + c]
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.data
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.n).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut sums = vec![0; self.n];
        for r in 0..self.n {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.data.chunks(self.n.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }
}

/// GPU-to-GPU traffic: entry `(g, h)` is the number of bytes GPU `g` sends
/// to GPU `h`. The diagonal is always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandMatrix {
    n_servers: usize,
    gpus_per_server: usize,
    sizes: SquareMatrix,
}

impl DemandMatrix {
    pub fn zeros(n_servers: usize, gpus_per_server: usize) -> Self {
        DemandMatrix {
            n_servers,
            gpus_per_server,
            sizes: SquareMatrix::zeros(n_servers * gpus_per_server),
        }
    }

    pub fn new(n_servers: usize, gpus_per_server: usize, sizes: SquareMatrix) -> Result<Self> {
        let g = n_servers * gpus_per_server;
        if sizes.dim() != g {
            return Err(Error::Dimension(format!(
                "{n_servers} servers x {gpus_per_server} GPUs needs a {g}x{g} matrix, got {0}x{0}",
                sizes.dim()
            )));
        }
        if let Some(i) = (0..g).find(|&i| sizes.get(i, i) != 0) {
            return Err(Error::InvalidArgument(format!(
                "self-transfer entry ({i},{i}) must be zero"
            )));
        }
        Ok(DemandMatrix {
            n_servers,
            gpus_per_server,
            sizes,
        })
    }

    pub fn from_rows(n_servers: usize, gpus_per_server: usize, rows: &[Vec<u64>]) -> Result<Self> {
        Self::new(n_servers, gpus_per_server, SquareMatrix::from_rows(rows)?)
    }

    pub fn n_servers(&self) -> usize {
        self.n_servers
    }

    pub fn gpus_per_server(&self) -> usize {
        self.gpus_per_server
    }

    pub fn gpu_count(&self) -> usize {
        self.sizes.dim()
    }

    pub fn sizes(&self) -> &SquareMatrix {
        &self.sizes
    }

    pub fn get(&self, g: usize, h: usize) -> u64 {
        self.sizes.get(g, h)
    }

    /// Writes entry `(g, h)`. Writes to the diagonal are rejected.
    pub fn set(&mut self, g: usize, h: usize, v: u64) -> Result<()> {
        if g == h && v != 0 {
            return Err(Error::InvalidArgument(format!(
                "self-transfer entry ({g},{g}) must be zero"
            )));
        }
        self.sizes.set(g, h, v);
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.sizes.total()
    }

    /// Checks that the matrix shape matches `t`.
    pub fn check_topology(&self, t: &Topology) -> Result<()> {
        if t.n_servers != self.n_servers || t.gpus_per_server != self.gpus_per_server {
            return Err(Error::Dimension(format!(
                "matrix is {}x{} (servers x GPUs) but topology is {}x{}",
                self.n_servers, self.gpus_per_server, t.n_servers, t.gpus_per_server
            )));
        }
        Ok(())
    }

    fn check_server(&self, i: usize) -> Result<()> {
        if i >= self.n_servers {
            return Err(Error::OutOfRange(format!(
                "server {i} (cluster has {})",
                self.n_servers
            )));
        }
        Ok(())
    }

    /// Copies out the `m x m` block of traffic from server `i` to server `j`.
    pub fn tile(&self, i: usize, j: usize) -> Result<Tile> {
        self.check_server(i)?;
        self.check_server(j)?;
        let m = self.gpus_per_server;
        let mut entries = SquareMatrix::zeros(m);
        for p in 0..m {
            for q in 0..m {
                entries.set(p, q, self.sizes.get(i * m + p, j * m + q));
            }
        }
        Ok(Tile {
            src_server: i,
            dst_server: j,
            entries,
        })
    }

    /// Writes a tile back into the block it was taken from.
    pub fn put_tile(&mut self, tile: &Tile) -> Result<()> {
        self.check_server(tile.src_server)?;
        self.check_server(tile.dst_server)?;
        let m = self.gpus_per_server;
        if tile.entries.dim() != m {
            return Err(Error::Dimension(format!(
                "tile is {0}x{0}, expected {m}x{m}",
                tile.entries.dim()
            )));
        }
        let (i, j) = (tile.src_server, tile.dst_server);
        for p in 0..m {
            for q in 0..m {
                let v = tile.entries.get(p, q);
                if i == j && p == q && v != 0 {
                    return Err(Error::InvalidArgument(
                        "self-transfer entry in same-server tile".into(),
                    ));
                }
                self.sizes.set(i * m + p, j * m + q, v);
            }
        }
        Ok(())
    }

    /// Largest GPU-level row or column sum over cross-server traffic only.
    pub fn max_gpu_cross_load(&self) -> u64 {
        let m = self.gpus_per_server;
        let g = self.gpu_count();
        let mut rows = vec![0u64; g];
        let mut cols = vec![0u64; g];
        for a in 0..g {
            for b in 0..g {
                if a / m != b / m {
                    let v = self.sizes.get(a, b);
                    rows[a] += v;
                    cols[b] += v;
                }
            }
        }
        rows.into_iter().chain(cols).max().unwrap_or(0)
    }

    /// Total bytes that stay inside a server.
    pub fn intra_total(&self) -> u64 {
        (0..self.n_servers)
            .map(|i| self.tile(i, i).map(|t| t.total()).unwrap_or(0))
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# n={} m={}\n", self.n_servers, self.gpus_per_server);
        for r in 0..self.gpu_count() {
            let row = self.sizes.row(r);
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.splitn(2, '\n');
        let header = lines.next().unwrap_or("").trim();
        let (n, m) = parse_header(header)?;
        let body = lines.next().unwrap_or("");
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(body.as_bytes());
        let mut rows = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            let row = record
                .iter()
                .enumerate()
                .map(|(c, field)| parse_entry(field, r, c))
                .collect::<Result<Vec<u64>>>()?;
            rows.push(row);
        }
        if rows.len() != n * m {
            return Err(Error::Dimension(format!(
                "header declares {} GPUs but found {} rows",
                n * m,
                rows.len()
            )));
        }
        Self::from_rows(n, m, &rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MatrixFile::from(self)).expect("matrix serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MatrixFileIn = serde_json::from_str(text)?;
        let rows = file
            .sizes
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .enumerate()
                    .map(|(c, &v)| {
                        u64::try_from(v).map_err(|_| {
                            Error::Parse(format!("negative entry {v} at ({r},{c})"))
                        })
                    })
                    .collect::<Result<Vec<u64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != file.n * file.m {
            return Err(Error::Dimension(format!(
                "declared {} GPUs but found {} rows",
                file.n * file.m,
                rows.len()
            )));
        }
        Self::from_rows(file.n, file.m, &rows)
    }

    /// Parses either matrix format, picking JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_csv(text)
        }
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse(format!("expected header `# n=<n> m=<m>`, got `{line}`"));
    let rest = line.strip_prefix('#').ok_or_else(bad)?;
    let (mut n, mut m) = (None, None);
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("n", v)) => n = v.parse().ok(),
            Some(("m", v)) => m = v.parse().ok(),
            _ => return Err(bad()),
        }
    }
    Ok((n.ok_or_else(bad)?, m.ok_or_else(bad)?))
}

fn parse_entry(field: &str, r: usize, c: usize) -> Result<u64> {
    let v: i128 = field
        .parse()
        .map_err(|_| Error::Parse(format!("bad integer `{field}` at ({r},{c})")))?;
    if v < 0 {
        return Err(Error::Parse(format!("negative entry {v} at ({r},{c})")));
    }
    u64::try_from(v).map_err(|_| Error::Parse(format!("entry {v} at ({r},{c}) too large")))
}

#[derive(Serialize)]
pub(crate) struct MatrixFile {
    n: usize,
    m: usize,
    sizes: Vec<Vec<u64>>,
}

impl From<&DemandMatrix> for MatrixFile {
    fn from(d: &DemandMatrix) -> Self {
        MatrixFile {
            n: d.n_servers,
            m: d.gpus_per_server,
            sizes: d.sizes.to_rows(),
        }
    }
}

#[derive(Deserialize)]
struct MatrixFileIn {
    n: usize,
    m: usize,
    sizes: Vec<Vec<i128>>,
}

impl Serialize for DemandMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DemandMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        DemandMatrix::from_json(&v.to_string()).map_err(serde::de::Error::custom)
    }
}

/// The `m x m` block of a demand matrix for one ordered server pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub src_server: usize,
    pub dst_server: usize,
    pub entries: SquareMatrix,
}

impl Tile {
    pub fn is_intra(&self) -> bool {
        self.src_server == self.dst_server
    }

    pub fn total(&self) -> u64 {
        self.entries.total()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.entries.row_sums()
    }
}

/// Server-to-server totals. Off-diagonal `(i, j)` is `T_ij`; the diagonal
/// holds the intra-server volume `S_i` for reporting only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerMatrix {
    totals: SquareMatrix,
}

impl ServerMatrix {
    pub fn new(totals: SquareMatrix) -> Self {
        ServerMatrix { totals }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        Ok(ServerMatrix::new(SquareMatrix::from_rows(rows)?))
    }

    pub fn dim(&self) -> usize {
        self.totals.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.totals.get(i, j)
    }

    pub fn intra(&self, i: usize) -> u64 {
        self.totals.get(i, i)
    }

    pub fn totals(&self) -> &SquareMatrix {
        &self.totals
    }

    /// The inter-server traffic with the diagonal zeroed.
    pub fn off_diagonal(&self) -> SquareMatrix {
        let mut out = self.totals.clone();
        for i in 0..out.dim() {
            out.set(i, i, 0);
        }
        out
    }

    pub fn cross_row_sums(&self) -> Vec<u64> {
        self.off_diagonal().row_sums()
    }

    pub fn cross_col_sums(&self) -> Vec<u64> {
        self.off_diagonal().col_sums()
    }

    pub fn cross_total(&self) -> u64 {
        self.off_diagonal().total()
    }

    pub fn max_cross_entry(&self) -> u64 {
        self.off_diagonal().as_slice().iter().copied().max().unwrap_or(0)
    }

    /// Largest off-diagonal row or column sum.
    pub fn max_rc(&self) -> u64 {
        max_rc(&self.off_diagonal())
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.totals.to_rows()
    }
}

/// Largest row or column sum of a square table.
pub fn max_rc(m: &SquareMatrix) -> u64 {
    m.row_sums()
        .into_iter()
        .chain(m.col_sums())
        .max()
        .unwrap_or(0)
}

/// Collapses every tile to its total: off-diagonal `(i, j)` becomes `T_ij`,
/// diagonal `(i, i)` becomes `S_i`.
pub fn reduce_to_server_level(d: &DemandMatrix, t: &Topology) -> Result<ServerMatrix> {
    d.check_topology(t)?;
    let n = d.n_servers;
    let m = d.gpus_per_server;
    let mut totals = SquareMatrix::zeros(n);
    for g in 0..d.gpu_count() {
        for (h, &v) in d.sizes.row(g).iter().enumerate() {
            *totals.get_mut(g / m, h / m) += v;
        }
    }
    Ok(ServerMatrix::new(totals))
}
