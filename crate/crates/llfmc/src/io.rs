//! File formats: MovieLens rating files, CSV-COO matrices, edge lists,
//! dense factor matrices and id maps.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use llfmc_core::analysis::GroupMembership;
use llfmc_core::{Entry, Matrix, ObservedMatrix, PairGraph};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MovieLensFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp` (MovieLens100K `u.data`, `u1.base`, ...).
    Tab100k,
    /// `user::item::rating::timestamp` (MovieLens1M `ratings.dat`).
    Dat1m,
}

impl MovieLensFormat {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            MovieLensFormat::Tab100k => line.split('\t').collect(),
            MovieLensFormat::Dat1m => line.split("::").collect(),
        }
    }
}

impl FromStr for MovieLensFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tab_100k" => Ok(Self::Tab100k),
            "dat_1m" => Ok(Self::Dat1m),
            other => Err(Error::Config(format!(
                "unknown MovieLens format '{other}' (expected tab_100k or dat_1m)"
            ))),
        }
    }
}

/// Dense index to original id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl IdMap {
    /// Ids are numbered in increasing order.
    pub fn from_ids(ids: impl IntoIterator<Item = u64>) -> Self {
        let mut ids: Vec<u64> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        let index = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        Self { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn original(&self, index: usize) -> u64 {
        self.ids[index]
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }
}

/// A ratings file loaded with its id maps.
#[derive(Clone, Debug)]
pub struct Ratings {
    pub matrix: ObservedMatrix,
    pub users: IdMap,
    pub items: IdMap,
    /// Repeated (user, item) pairs; the last one read was kept.
    pub duplicates: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn field<T: FromStr>(path: &Path, line: usize, raw: Option<&str>, what: &str) -> Result<T> {
    let raw = raw.ok_or_else(|| Error::parse(path, line, format!("missing {what}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("bad {what} '{}'", raw.trim())))
}

/// Raw `(user, item, rating)` triples in file order.
pub fn read_movielens_triples(path: &Path, format: MovieLensFormat) -> Result<Vec<(u64, u64, f64)>> {
    let mut out = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parts = format.split(&line);
        if parts.len() < 3 {
            return Err(Error::parse(
                path,
                k + 1,
                format!("expected user, item, rating and timestamp, got '{line}'"),
            ));
        }
        let user: u64 = field(path, k + 1, parts.first().copied(), "user id")?;
        let item: u64 = field(path, k + 1, parts.get(1).copied(), "item id")?;
        let rating: f64 = field(path, k + 1, parts.get(2).copied(), "rating")?;
        if !rating.is_finite() {
            return Err(Error::parse(path, k + 1, "rating is not finite"));
        }
        out.push((user, item, rating));
    }
    Ok(out)
}

fn assemble(triples: &[(u64, u64, f64)], users: &IdMap, items: &IdMap) -> Result<(ObservedMatrix, usize)> {
    let iter = triples.iter().map(|(u, i, r)| {
        Entry::new(
            users.index_of(*u).expect("user in id map"),
            items.index_of(*i).expect("item in id map"),
            *r,
        )
    });
    Ok(ObservedMatrix::from_triplets(users.len(), items.len(), iter)?)
}

fn warn_duplicates(path: &Path, duplicates: usize) {
    if duplicates > 0 {
        log::warn!(
            "{}: {duplicates} repeated (user, item) pairs, kept the last occurrence",
            path.display()
        );
    }
}

/// Loads one MovieLens ratings file; ids are remapped to dense indices in
/// increasing id order.
pub fn load_movielens(path: &Path, format: MovieLensFormat) -> Result<Ratings> {
    let triples = read_movielens_triples(path, format)?;
    if triples.is_empty() {
        return Err(Error::NoEntries(path.to_path_buf()));
    }
    let users = IdMap::from_ids(triples.iter().map(|t| t.0));
    let items = IdMap::from_ids(triples.iter().map(|t| t.1));
    let (matrix, duplicates) = assemble(&triples, &users, &items)?;
    warn_duplicates(path, duplicates);
    Ok(Ratings {
        matrix,
        users,
        items,
        duplicates,
    })
}

/// Loads a provided train/test pair (e.g. `u1.base` / `u1.test`) with one
/// id map built from both files, so indices agree across the pair.
pub fn load_movielens_pair(train: &Path, test: &Path, format: MovieLensFormat) -> Result<(Ratings, ObservedMatrix)> {
    let a = read_movielens_triples(train, format)?;
    let b = read_movielens_triples(test, format)?;
    if a.is_empty() {
        return Err(Error::NoEntries(train.to_path_buf()));
    }
    if b.is_empty() {
        return Err(Error::NoEntries(test.to_path_buf()));
    }
    let users = IdMap::from_ids(a.iter().chain(&b).map(|t| t.0));
    let items = IdMap::from_ids(a.iter().chain(&b).map(|t| t.1));
    let (matrix, duplicates) = assemble(&a, &users, &items)?;
    warn_duplicates(train, duplicates);
    let (test_m, test_dups) = assemble(&b, &users, &items)?;
    warn_duplicates(test, test_dups);
    Ok((
        Ratings {
            matrix,
            users,
            items,
            duplicates,
        },
        test_m,
    ))
}

fn is_header(line: &str) -> bool {
    line.split(',').next().is_some_and(|f| f.trim().parse::<f64>().is_err())
}

/// Reads `i,j,value` triples with 0-based indices; a non-numeric first line
/// is taken as a header. Returns the triples with the largest indices seen.
fn read_coo(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let mut out = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || (k == 0 && is_header(trimmed)) {
            continue;
        }
        let mut parts = trimmed.split(',');
        let i: usize = field(path, k + 1, parts.next(), "row index")?;
        let j: usize = field(path, k + 1, parts.next(), "column index")?;
        let v: f64 = field(path, k + 1, parts.next(), "value")?;
        if parts.next().is_some() {
            return Err(Error::parse(path, k + 1, "expected exactly three fields"));
        }
        out.push((i, j, v));
    }
    if out.is_empty() {
        return Err(Error::NoEntries(path.to_path_buf()));
    }
    Ok(out)
}

/// CSV-COO matrix whose shape is one past the largest indices present.
pub fn load_csv_coo(path: &Path) -> Result<(ObservedMatrix, usize)> {
    let triples = read_coo(path)?;
    let n = triples.iter().map(|t| t.0).max().unwrap_or(0) + 1;
    let m = triples.iter().map(|t| t.1).max().unwrap_or(0) + 1;
    finish_coo(path, n, m, triples)
}

/// CSV-COO matrix with a known shape.
pub fn load_csv_coo_shaped(path: &Path, n_rows: usize, n_cols: usize) -> Result<(ObservedMatrix, usize)> {
    let triples = read_coo(path)?;
    finish_coo(path, n_rows, n_cols, triples)
}

fn finish_coo(path: &Path, n: usize, m: usize, triples: Vec<(usize, usize, f64)>) -> Result<(ObservedMatrix, usize)> {
    let (matrix, duplicates) =
        ObservedMatrix::from_triplets(n, m, triples.into_iter().map(|(i, j, v)| Entry::new(i, j, v)))?;
    warn_duplicates(path, duplicates);
    Ok((matrix, duplicates))
}

/// Writes `i,j,value` lines; values use the shortest representation that
/// reads back to the same `f64`.
pub fn write_csv_coo(path: &Path, m: &ObservedMatrix, header: bool) -> Result<()> {
    let mut w = create(path)?;
    let mut buf = String::new();
    if header {
        buf.push_str("i,j,value\n");
    }
    for e in m.entries() {
        writeln!(buf, "{},{},{:?}", e.row, e.col, e.value).expect("write to string");
    }
    w.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Edge list `l1,l2,w` with an optional header line.
pub fn read_graph_csv(path: &Path, n_nodes: usize) -> Result<PairGraph> {
    let mut edges = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || (k == 0 && is_header(trimmed)) {
            continue;
        }
        let mut parts = trimmed.split(',');
        let a: usize = field(path, k + 1, parts.next(), "node l1")?;
        let b: usize = field(path, k + 1, parts.next(), "node l2")?;
        let w: f64 = field(path, k + 1, parts.next(), "weight")?;
        edges.push((a, b, w));
    }
    Ok(PairGraph::new(n_nodes, edges)?)
}

pub fn write_graph_csv(path: &Path, g: &PairGraph) -> Result<()> {
    let mut buf = String::from("l1,l2,w\n");
    for e in g.edges() {
        writeln!(buf, "{},{},{:?}", e.a, e.b, e.weight).expect("write to string");
    }
    write_string(path, &buf)
}

/// Dense matrix, one comma-separated row per line.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut buf = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        buf.push_str(&row.join(","));
        buf.push('\n');
    }
    write_string(path, &buf)
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| field(path, k + 1, Some(f), "matrix entry"))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Matrix::from_rows(&rows)?)
}

/// `index,id` lines.
pub fn write_id_map(path: &Path, ids: &IdMap) -> Result<()> {
    let mut buf = String::from("index,id\n");
    for i in 0..ids.len() {
        writeln!(buf, "{i},{}", ids.original(i)).expect("write to string");
    }
    write_string(path, &buf)
}

/// Reads what [`write_id_map`] wrote; indices must run `0..len` in order.
pub fn read_id_map(path: &Path) -> Result<IdMap> {
    let mut ids = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (k == 0 && is_header(trimmed)) {
            continue;
        }
        let mut parts = trimmed.split(',');
        let index: usize = field(path, k + 1, parts.next(), "index")?;
        let id: u64 = field(path, k + 1, parts.next(), "id")?;
        if index != ids.len() {
            return Err(Error::parse(
                path,
                k + 1,
                format!("expected index {}, got {index}", ids.len()),
            ));
        }
        ids.push(id);
    }
    let map = IdMap::from_ids(ids.iter().copied());
    if map.ids != ids {
        return Err(Error::parse(path, 1, "ids must be distinct and increasing"));
    }
    Ok(map)
}

/// `node,group` lines.
pub fn write_membership_csv(path: &Path, g: &GroupMembership) -> Result<()> {
    let mut buf = String::from("node,group\n");
    for (node, group) in g.assignment().iter().enumerate() {
        writeln!(buf, "{node},{group}").expect("write to string");
    }
    write_string(path, &buf)
}

/// Square 0/1 matrix, row-major.
pub fn write_indicator_csv(path: &Path, n: usize, s: &[bool]) -> Result<()> {
    let mut buf = String::with_capacity(2 * n * n);
    for u in 0..n {
        let row: Vec<&str> = s[u * n..(u + 1) * n]
            .iter()
            .map(|b| if *b { "1" } else { "0" })
            .collect();
        buf.push_str(&row.join(","));
        buf.push('\n');
    }
    write_string(path, &buf)
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
