//! Respondent × attribute matrices, agglomerative clustering of either axis
//! and clustered-heatmap artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{Corpus, UnitKey};

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("unknown attribute `{0}`")]
    NotFound(String),
    #[error("need at least 2 items to cluster, found {0}")]
    TooFew(usize),
    #[error("order is not a permutation of 0..{0}")]
    InvalidOrder(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HeatmapError>;

/// A matrix row. Parsed from `topic:<id>`, `meta:<key>` (any non-empty
/// value), `meta:<key>=<value>`, `code:<name>` or a bare code name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Attribute {
    Code(String),
    Metadata { key: String, value: Option<String> },
    Topic(usize),
}

impl FromStr for Attribute {
    type Err = HeatmapError;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(t) = s.strip_prefix("topic:") {
            return t
                .parse()
                .map(Attribute::Topic)
                .map_err(|_| HeatmapError::InvalidParameter(format!("bad topic id in `{s}`")));
        }
        if let Some(m) = s.strip_prefix("meta:") {
            return Ok(match m.split_once('=') {
                Some((k, v)) => Attribute::Metadata {
                    key: k.to_string(),
                    value: Some(v.to_string()),
                },
                None => Attribute::Metadata {
                    key: m.to_string(),
                    value: None,
                },
            });
        }
        Ok(Attribute::Code(s.strip_prefix("code:").unwrap_or(s).to_string()))
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attribute::Code(c) => f.write_str(c),
            Attribute::Metadata { key, value: None } => write!(f, "meta:{key}"),
            Attribute::Metadata { key, value: Some(v) } => write!(f, "meta:{key}={v}"),
            Attribute::Topic(t) => write!(f, "topic:{t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellMode {
    Binary,
    Count,
    /// Count divided by the respondent's number of units.
    Proportion,
}

impl FromStr for CellMode {
    type Err = HeatmapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(CellMode::Binary),
            "count" => Ok(CellMode::Count),
            "proportion" => Ok(CellMode::Proportion),
            _ => Err(HeatmapError::InvalidParameter(format!("unknown mode `{s}`"))),
        }
    }
}

/// Attributes as rows, respondents as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<f64>>,
    pub mode: CellMode,
}

impl AttributeMatrix {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.cells.iter().map(|r| r[j]).collect()
    }

    pub fn items(&self, axis: Axis) -> (&[String], Vec<Vec<f64>>) {
        match axis {
            Axis::Rows => (&self.rows, self.cells.clone()),
            Axis::Columns => (&self.columns, (0..self.columns.len()).map(|j| self.column(j)).collect()),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(writer);
        let mut header = vec!["attribute".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R, mode: CellMode) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(reader);
        let columns: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            rows.push(rec.get(0).unwrap_or_default().to_string());
            let values = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| HeatmapError::InvalidParameter(format!("bad cell `{v}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != columns.len() {
                return Err(HeatmapError::InvalidParameter("ragged matrix".into()));
            }
            cells.push(values);
        }
        Ok(AttributeMatrix { rows, columns, cells, mode })
    }
}

/// Builds the matrix over `corpus`. `unit_topics` supplies the dominant
/// topic per unit for `topic:` attributes. Respondents are participant ids.
pub fn build_matrix(
    corpus: &Corpus,
    attributes: &[Attribute],
    mode: CellMode,
    unit_topics: Option<&BTreeMap<UnitKey, usize>>,
) -> Result<AttributeMatrix> {
    let meta_keys: BTreeSet<&str> = corpus
        .units()
        .iter()
        .flat_map(|u| u.extra_metadata.keys().map(String::as_str))
        .collect();
    let topic_count = unit_topics.map(|t| t.values().max().map_or(0, |m| m + 1)).unwrap_or(0);
    for a in attributes {
        let known = match a {
            Attribute::Code(c) => corpus.codebook().contains(c),
            Attribute::Metadata { key, .. } => meta_keys.contains(key.as_str()),
            Attribute::Topic(t) => *t < topic_count,
        };
        if !known {
            return Err(HeatmapError::NotFound(a.to_string()));
        }
    }
    let respondents: BTreeSet<&str> = corpus
        .documents()
        .values()
        .map(|d| d.participant_id.as_str())
        .collect();
    let columns: Vec<String> = respondents.iter().map(|r| r.to_string()).collect();
    let col_index: BTreeMap<&str, usize> = respondents.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    let mut counts = vec![vec![0.0; columns.len()]; attributes.len()];
    let mut units_per = vec![0usize; columns.len()];
    for unit in corpus.units() {
        let participant = &corpus.documents()[&unit.doc_id].participant_id;
        let j = col_index[participant.as_str()];
        units_per[j] += 1;
        for (i, a) in attributes.iter().enumerate() {
            let present = match a {
                Attribute::Code(c) => unit.codes.contains(c),
                Attribute::Metadata { key, value } => match (unit.extra_metadata.get(key), value) {
                    (Some(v), None) => !v.is_empty(),
                    (Some(v), Some(want)) => v == want,
                    (None, _) => false,
                },
                Attribute::Topic(t) => unit_topics.and_then(|m| m.get(&unit.key())) == Some(t),
            };
            if present {
                counts[i][j] += 1.0;
            }
        }
    }
    for row in counts.iter_mut() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = match mode {
                CellMode::Count => *cell,
                CellMode::Binary => f64::from(*cell > 0.0),
                CellMode::Proportion if units_per[j] == 0 => 0.0,
                CellMode::Proportion => *cell / units_per[j] as f64,
            };
        }
    }
    Ok(AttributeMatrix {
        rows: attributes.iter().map(|a| a.to_string()).collect(),
        columns,
        cells: counts,
        mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Rows,
    Columns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    /// On presence (value > 0). Two empty vectors are at distance 0.
    Jaccard,
}

impl Metric {
    pub fn default_for(mode: CellMode) -> Self {
        match mode {
            CellMode::Binary => Metric::Jaccard,
            _ => Metric::Euclidean,
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Jaccard => {
                let (mut both, mut either) = (0usize, 0usize);
                for (x, y) in a.iter().zip(b) {
                    let (p, q) = (*x > 0.0, *y > 0.0);
                    both += usize::from(p && q);
                    either += usize::from(p || q);
                }
                if either == 0 {
                    0.0
                } else {
                    1.0 - both as f64 / either as f64
                }
            }
        }
    }
}

/// One agglomeration. Node ids below the item count are leaves; id
/// `n + i` is the cluster formed by merge `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub items: Vec<String>,
    pub merges: Vec<Merge>,
    pub linkage: Linkage,
    pub metric: Metric,
}

/// Agglomerative clustering with Lance-Williams updates. Among equally
/// close pairs the one whose lexicographically smallest member names sort
/// first is merged.
/// Heights closer than this are ties, broken by the smaller label pair.
pub const TIE_EPS: f64 = 1e-12;

pub fn hier_cluster(items: &[String], vectors: &[Vec<f64>], linkage: Linkage, metric: Metric) -> Result<Dendrogram> {
    let n = items.len();
    if n < 2 {
        return Err(HeatmapError::TooFew(n));
    }
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let x = metric.distance(&vectors[i], &vectors[j]);
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    // slot i holds the live cluster that started at leaf i
    let mut node: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut label: Vec<&str> = items.iter().map(String::as_str).collect();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    while alive.len() > 1 {
        let mut best: Option<(f64, (&str, &str), usize, usize)> = None;
        for (ai, &i) in alive.iter().enumerate() {
            for &j in &alive[ai + 1..] {
                let key = if label[i] <= label[j] { (label[i], label[j]) } else { (label[j], label[i]) };
                let better = match &best {
                    None => true,
                    Some((bd, bk, _, _)) => d[i][j] < *bd - TIE_EPS || ((d[i][j] - *bd).abs() <= TIE_EPS && key < *bk),
                };
                if better {
                    best = Some((d[i][j], key, i, j));
                }
            }
        }
        let (height, _, i, j) = best.expect("two live clusters");
        let (left, right) = if label[i] <= label[j] { (i, j) } else { (j, i) };
        merges.push(Merge {
            left: node[left],
            right: node[right],
            height,
            size: size[i] + size[j],
        });
        for &k in &alive {
            if k == i || k == j {
                continue;
            }
            let (ni, nj) = (size[i] as f64, size[j] as f64);
            let v = match linkage {
                Linkage::Single => d[k][i].min(d[k][j]),
                Linkage::Complete => d[k][i].max(d[k][j]),
                Linkage::Average => (ni * d[k][i] + nj * d[k][j]) / (ni + nj),
            };
            d[k][i] = v;
            d[i][k] = v;
        }
        size[i] += size[j];
        node[i] = n + merges.len() - 1;
        label[i] = label[i].min(label[j]);
        alive.retain(|&x| x != j);
    }
    Ok(Dendrogram {
        items: items.to_vec(),
        merges,
        linkage,
        metric,
    })
}

pub fn cluster_axis(matrix: &AttributeMatrix, axis: Axis, linkage: Linkage, metric: Metric) -> Result<Dendrogram> {
    let (items, vectors) = matrix.items(axis);
    hier_cluster(items, &vectors, linkage, metric)
}

impl Dendrogram {
    fn root(&self) -> usize {
        self.items.len() + self.merges.len() - 1
    }

    fn children(&self, id: usize) -> Option<(usize, usize)> {
        let n = self.items.len();
        (id >= n).then(|| (self.merges[id - n].left, self.merges[id - n].right))
    }

    /// Leaf indices in dendrogram order.
    pub fn leaf_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.items.len());
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            match self.children(id) {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(id),
            }
        }
        out
    }

    /// Flat clusters from undoing the last `k - 1` merges. Labels are
    /// numbered by first appearance in item order.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.items.len();
        if k == 0 || k > n {
            return Err(HeatmapError::InvalidParameter(format!("cannot cut {n} items into {k} clusters")));
        }
        let mut roots: BTreeSet<usize> = BTreeSet::from([self.root()]);
        // a merge's parent always comes later, so undo from the end
        for idx in (self.merges.len() + 1 - k..self.merges.len()).rev() {
            let m = &self.merges[idx];
            roots.remove(&(n + idx));
            roots.insert(m.left);
            roots.insert(m.right);
        }
        let mut raw = vec![0usize; n];
        for &r in &roots {
            let mut stack = vec![r];
            while let Some(id) = stack.pop() {
                match self.children(id) {
                    Some((a, b)) => stack.extend([a, b]),
                    None => raw[id] = r,
                }
            }
        }
        let mut renumber = BTreeMap::new();
        Ok(raw
            .into_iter()
            .map(|r| {
                let next = renumber.len();
                *renumber.entry(r).or_insert(next)
            })
            .collect())
    }

    /// Nested JSON: leaves are `{"name"}`, inner nodes
    /// `{"height", "children": [left, right]}`.
    pub fn to_json(&self) -> Value {
        fn build(d: &Dendrogram, id: usize) -> Value {
            match d.children(id) {
                Some((l, r)) => json!({
                    "height": d.merges[id - d.items.len()].height,
                    "children": [build(d, l), build(d, r)],
                }),
                None => json!({ "name": d.items[id] }),
            }
        }
        build(self, self.root())
    }

    /// Newick string with branch heights.
    pub fn to_newick(&self) -> String {
        fn quote(s: &str) -> String {
            format!("'{}'", s.replace('\'', "''"))
        }
        fn build(d: &Dendrogram, id: usize, out: &mut String) {
            match d.children(id) {
                Some((l, r)) => {
                    out.push('(');
                    build(d, l, out);
                    out.push(',');
                    build(d, r, out);
                    out.push_str(&format!("):{}", d.merges[id - d.items.len()].height));
                }
                None => out.push_str(&quote(&d.items[id])),
            }
        }
        let mut s = String::new();
        build(self, self.root(), &mut s);
        s.push(';');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    Greys,
    Blues,
    Reds,
}

impl FromStr for Palette {
    type Err = HeatmapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greys" => Ok(Palette::Greys),
            "blues" => Ok(Palette::Blues),
            "reds" => Ok(Palette::Reds),
            _ => Err(HeatmapError::InvalidParameter(format!("unknown palette `{s}`"))),
        }
    }
}

impl Palette {
    fn color(self, t: f64) -> String {
        let full = match self {
            Palette::Greys => (0.0, 0.0, 0.0),
            Palette::Blues => (8.0, 48.0, 107.0),
            Palette::Reds => (103.0, 0.0, 13.0),
        };
        let mix = |c: f64| (255.0 + (c - 255.0) * t.clamp(0.0, 1.0)).round() as u8;
        format!("#{:02x}{:02x}{:02x}", mix(full.0), mix(full.1), mix(full.2))
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let set: BTreeSet<usize> = order.iter().copied().collect();
    if order.len() != n || set.len() != n || set.iter().any(|&i| i >= n) {
        return Err(HeatmapError::InvalidOrder(n));
    }
    Ok(())
}

pub fn reorder(matrix: &AttributeMatrix, row_order: &[usize], col_order: &[usize]) -> Result<AttributeMatrix> {
    check_permutation(row_order, matrix.rows.len())?;
    check_permutation(col_order, matrix.columns.len())?;
    Ok(AttributeMatrix {
        rows: row_order.iter().map(|&i| matrix.rows[i].clone()).collect(),
        columns: col_order.iter().map(|&j| matrix.columns[j].clone()).collect(),
        cells: row_order
            .iter()
            .map(|&i| col_order.iter().map(|&j| matrix.cells[i][j]).collect())
            .collect(),
        mode: matrix.mode,
    })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub struct Rendered {
    pub svg: String,
    pub csv: String,
}

/// SVG grid plus the reordered matrix as CSV.
pub fn render_heatmap(
    matrix: &AttributeMatrix,
    row_order: &[usize],
    col_order: &[usize],
    palette: Palette,
) -> Result<Rendered> {
    let m = reorder(matrix, row_order, col_order)?;
    let cell = 16.0;
    let label_w = 8.0 * m.rows.iter().map(|r| r.chars().count()).max().unwrap_or(0) as f64 + 8.0;
    let label_h = 8.0 * m.columns.iter().map(|c| c.chars().count()).max().unwrap_or(0) as f64 + 8.0;
    let width = label_w + cell * m.columns.len() as f64;
    let height = label_h + cell * m.rows.len() as f64;
    let max = m.cells.iter().flatten().copied().fold(0.0, f64::max);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"monospace\" font-size=\"11\">\n"
    );
    for (j, c) in m.columns.iter().enumerate() {
        let x = label_w + cell * j as f64 + cell * 0.7;
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" transform=\"rotate(-90 {x} {y})\">{}</text>\n",
            xml_escape(c),
            y = label_h - 4.0
        ));
    }
    for (i, r) in m.rows.iter().enumerate() {
        let y = label_h + cell * i as f64;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            label_w - 4.0,
            y + cell * 0.75,
            xml_escape(r)
        ));
        for (j, v) in m.cells[i].iter().enumerate() {
            let t = if max > 0.0 { v / max } else { 0.0 };
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\"><title>{}</title></rect>\n",
                label_w + cell * j as f64,
                palette.color(t),
                v
            ));
        }
    }
    svg.push_str("</svg>\n");
    let mut buf = Vec::new();
    m.write_csv(&mut buf)?;
    Ok(Rendered {
        svg,
        csv: String::from_utf8(buf).expect("csv output is utf-8"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DocumentMeta, Unit};

    fn corpus() -> Corpus {
        let docs = BTreeMap::from([
            ("p1_20200101_ann".to_string(), DocumentMeta::from_doc_id("p1_20200101_ann")),
            ("p2_20200101_ann".to_string(), DocumentMeta::from_doc_id("p2_20200101_ann")),
        ]);
        let units = vec![
            Unit::new("p1_20200101_ann", 0, "x").with_codes(["A"]),
            Unit::new("p1_20200101_ann", 1, "x").with_codes(["A"]),
            Unit::new("p1_20200101_ann", 2, "x").with_codes(["A", "B"]),
            Unit::new("p1_20200101_ann", 3, "x"),
            Unit::new("p2_20200101_ann", 0, "x"),
        ];
        Corpus::new(docs, units, BTreeSet::from(["A".to_string(), "B".to_string(), "C".to_string()])).unwrap()
    }

    #[test]
    fn modes() {
        let c = corpus();
        let attrs: Vec<Attribute> = ["A", "B", "C"].iter().map(|a| a.parse().unwrap()).collect();
        let count = build_matrix(&c, &attrs, CellMode::Count, None).unwrap();
        assert_eq!(count.columns, ["p1", "p2"]);
        assert_eq!(count.cells, vec![vec![3.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]]);
        let bin = build_matrix(&c, &attrs, CellMode::Binary, None).unwrap();
        assert_eq!(bin.cells[0], [1.0, 0.0]);
        let prop = build_matrix(&c, &attrs, CellMode::Proportion, None).unwrap();
        assert_eq!(prop.cells[0], [0.75, 0.0]);
        assert!(matches!(
            build_matrix(&c, &["Z".parse().unwrap()], CellMode::Count, None),
            Err(HeatmapError::NotFound(_))
        ));
    }

    #[test]
    fn identical_columns_merge_first_at_zero() {
        let items: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let v = vec![vec![1.0, 0.0], vec![5.0, 5.0], vec![1.0, 0.0]];
        let d = hier_cluster(&items, &v, Linkage::Average, Metric::Euclidean).unwrap();
        assert_eq!((d.merges[0].left, d.merges[0].right, d.merges[0].height), (0, 2, 0.0));
        assert!(matches!(
            hier_cluster(&items[..1], &v[..1], Linkage::Single, Metric::Euclidean),
            Err(HeatmapError::TooFew(1))
        ));
    }

    #[test]
    fn four_points_single_linkage() {
        let items: Vec<String> = ["p0", "p1", "p10", "p11"].iter().map(|s| s.to_string()).collect();
        let v = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let d = hier_cluster(&items, &v, Linkage::Single, Metric::Euclidean).unwrap();
        let pairs: Vec<(usize, usize, f64)> = d.merges.iter().map(|m| (m.left, m.right, m.height)).collect();
        assert_eq!(pairs, [(0, 1, 1.0), (2, 3, 1.0), (4, 5, 9.0)]);
        assert_eq!(d.cut(2).unwrap(), [0, 0, 1, 1]);
        assert_eq!(d.leaf_order(), [0, 1, 2, 3]);
        assert_eq!(d.to_newick(), "(('p0','p1'):1,('p10','p11'):1):9;");
    }

    #[test]
    fn one_by_one_render() {
        let m = AttributeMatrix {
            rows: vec!["r".into()],
            columns: vec!["c".into()],
            cells: vec![vec![2.0]],
            mode: CellMode::Count,
        };
        let out = render_heatmap(&m, &[0], &[0], Palette::Blues).unwrap();
        assert_eq!(out.svg.matches("<rect").count(), 1);
        assert_eq!(out.csv, "attribute,c\r\nr,2\r\n");
        assert!(matches!(render_heatmap(&m, &[1], &[0], Palette::Blues), Err(HeatmapError::InvalidOrder(1))));
    }

    #[test]
    fn jaccard() {
        assert_eq!(Metric::Jaccard.distance(&[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]), 1.0 - 1.0 / 3.0);
        assert_eq!(Metric::Jaccard.distance(&[0.0], &[0.0]), 0.0);
    }
}
