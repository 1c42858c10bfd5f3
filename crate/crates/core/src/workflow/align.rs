use serde::{Deserialize, Serialize};

use super::WorkflowError;
use crate::evaluation::levenshtein;
use crate::event_log::{Trace, Vocabulary};

/// Traces laid out in shared columns; `None` is a gap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    vocabulary: Vocabulary,
    rows: Vec<Vec<Option<usize>>>,
}

impl AlignmentMatrix {
    /// Build from explicit rows of activity names. All rows must be equally long.
    pub fn from_rows(rows: &[Vec<Option<&str>>]) -> Result<Self, WorkflowError> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(WorkflowError::RaggedAlignment);
        }
        let stripped: Vec<Trace> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| Trace::new(i.to_string(), r.iter().flatten().copied()))
            .collect();
        let vocabulary = Vocabulary::build(&stripped);
        let rows = rows
            .iter()
            .map(|r| r.iter().map(|c| c.and_then(|a| vocabulary.id(a))).collect())
            .collect();
        Ok(Self { vocabulary, rows })
    }

    /// Symbol ids follow first appearance in the input traces.
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_columns(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row_ids(&self, row: usize) -> &[Option<usize>] {
        &self.rows[row]
    }

    pub fn cell(&self, row: usize, column: usize) -> Option<&str> {
        self.rows[row][column].and_then(|id| self.vocabulary.name(id))
    }

    /// The row with gaps removed, i.e. the original trace.
    pub fn stripped(&self, row: usize) -> Vec<&str> {
        (0..self.n_columns()).filter_map(|c| self.cell(row, c)).collect()
    }

    /// Sum over columns and row pairs of the mismatch cost (symbol against a
    /// different symbol or a gap costs 1; gap against gap costs 0).
    pub fn sum_of_pairs_cost(&self) -> u64 {
        sp_cost(&self.rows, self.vocabulary.size())
    }

    /// One line per row, cells separated by tabs, gaps shown as `-`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.n_rows() {
            let cells: Vec<&str> = (0..self.n_columns()).map(|c| self.cell(r, c).unwrap_or("-")).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

fn sp_cost(rows: &[Vec<Option<usize>>], n_sym: usize) -> u64 {
    let width = rows.first().map_or(0, Vec::len);
    let mut counts = vec![0u64; n_sym + 1];
    let mut total = 0;
    for c in 0..width {
        counts.iter_mut().for_each(|x| *x = 0);
        for r in rows {
            counts[r[c].unwrap_or(n_sym)] += 1;
        }
        total += pairs(rows.len() as u64) - counts.iter().map(|&k| pairs(k)).sum::<u64>();
    }
    total
}

/// Per-column symbol counts of a set of aligned rows.
struct Profile {
    rows: u64,
    counts: Vec<Vec<u64>>,
    gaps: Vec<u64>,
}

impl Profile {
    fn new<'a>(rows: impl IntoIterator<Item = &'a Vec<Option<usize>>>, width: usize, n_sym: usize) -> Self {
        let mut p = Profile {
            rows: 0,
            counts: vec![vec![0; n_sym]; width],
            gaps: vec![0; width],
        };
        for row in rows {
            p.rows += 1;
            for (c, cell) in row.iter().enumerate() {
                match cell {
                    Some(s) => p.counts[c][*s] += 1,
                    None => p.gaps[c] += 1,
                }
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy)]
enum Step {
    /// Sequence symbol placed in an existing column.
    Both(usize, usize),
    /// Gap in the new row under an existing column.
    SeqGap(usize),
    /// New column holding the sequence symbol; existing rows get gaps.
    NewColumn(usize),
}

/// Optimal placement of `seq` against a profile, with costs scaled by the
/// profile's row count so they stay integral. Ties prefer a match, then a
/// gap in the sequence, then a new column.
fn align_to_profile(seq: &[usize], p: &Profile) -> (u64, Vec<Step>) {
    let (m, w, r) = (seq.len(), p.counts.len(), p.rows);
    let mut dp = vec![vec![0u64; w + 1]; m + 1];
    for j in 1..=w {
        dp[0][j] = dp[0][j - 1] + (r - p.gaps[j - 1]);
    }
    for i in 1..=m {
        dp[i][0] = dp[i - 1][0] + r;
        for j in 1..=w {
            let diag = dp[i - 1][j - 1] + (r - p.counts[j - 1][seq[i - 1]]);
            let gap = dp[i][j - 1] + (r - p.gaps[j - 1]);
            let new = dp[i - 1][j] + r;
            dp[i][j] = diag.min(gap).min(new);
        }
    }
    let mut steps = Vec::with_capacity(m + w);
    let (mut i, mut j) = (m, w);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + (r - p.counts[j - 1][seq[i - 1]]) {
            steps.push(Step::Both(j - 1, seq[i - 1]));
            i -= 1;
            j -= 1;
        } else if j > 0 && dp[i][j] == dp[i][j - 1] + (r - p.gaps[j - 1]) {
            steps.push(Step::SeqGap(j - 1));
            j -= 1;
        } else {
            steps.push(Step::NewColumn(seq[i - 1]));
            i -= 1;
        }
    }
    steps.reverse();
    (dp[m][w], steps)
}

/// Insert a new row into `rows` (all of the same width) following `steps`.
fn merge(rows: &mut [&mut Vec<Option<usize>>], steps: &[Step]) -> Vec<Option<usize>> {
    for row in rows.iter_mut() {
        let old = std::mem::take(&mut **row);
        **row = steps
            .iter()
            .map(|s| match *s {
                Step::Both(c, _) | Step::SeqGap(c) => old[c],
                Step::NewColumn(_) => None,
            })
            .collect();
    }
    steps
        .iter()
        .map(|s| match *s {
            Step::Both(_, sym) | Step::NewColumn(sym) => Some(sym),
            Step::SeqGap(_) => None,
        })
        .collect()
}

/// Start with the closest pair, then repeatedly add the trace nearest to
/// any already placed one. Ties go to the lower index.
fn guide_order(dist: &[Vec<usize>]) -> Vec<usize> {
    let n = dist.len();
    let mut first = (0, 1);
    for i in 0..n {
        for j in i + 1..n {
            if dist[i][j] < dist[first.0][first.1] {
                first = (i, j);
            }
        }
    }
    let mut order = vec![first.0, first.1];
    let mut placed = vec![false; n];
    placed[first.0] = true;
    placed[first.1] = true;
    let mut nearest: Vec<usize> = (0..n).map(|k| dist[first.0][k].min(dist[first.1][k])).collect();
    while order.len() < n {
        let next = (0..n)
            .filter(|&k| !placed[k])
            .min_by_key(|&k| (nearest[k], k))
            .expect("an unplaced trace remains");
        placed[next] = true;
        order.push(next);
        for k in 0..n {
            nearest[k] = nearest[k].min(dist[next][k]);
        }
    }
    order
}

fn drop_empty_columns(rows: &mut [Vec<Option<usize>>]) {
    let width = rows.first().map_or(0, Vec::len);
    let keep: Vec<bool> = (0..width).map(|c| rows.iter().any(|r| r[c].is_some())).collect();
    for row in rows.iter_mut() {
        let mut k = keep.iter();
        row.retain(|_| *k.next().expect("one flag per column"));
    }
}

/// Progressive multiple alignment: pairwise edit distances give a guide
/// order, each trace is aligned against the profile of those before it, and
/// one refinement sweep re-aligns every trace against all the others,
/// keeping the change when the sum-of-pairs cost drops.
pub fn align_traces(traces: &[Trace]) -> Result<AlignmentMatrix, WorkflowError> {
    if traces.len() < 2 {
        return Err(WorkflowError::TooFewTraces(traces.len()));
    }
    let vocabulary = Vocabulary::build(traces);
    let n_sym = vocabulary.size();
    let seqs: Vec<Vec<usize>> = traces
        .iter()
        .map(|t| vocabulary.encode(&t.activities).expect("vocabulary built from these traces"))
        .collect();
    let n = seqs.len();
    let mut dist = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = levenshtein(&seqs[i], &seqs[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    let order = guide_order(&dist);
    let mut rows: Vec<Vec<Option<usize>>> = vec![Vec::new(); n];
    rows[order[0]] = seqs[order[0]].iter().map(|&s| Some(s)).collect();
    let mut placed = vec![false; n];
    placed[order[0]] = true;
    let mut width = rows[order[0]].len();
    for &t in &order[1..] {
        let profile = Profile::new((0..n).filter(|&k| placed[k]).map(|k| &rows[k]), width, n_sym);
        let (_, steps) = align_to_profile(&seqs[t], &profile);
        let mut existing: Vec<&mut Vec<Option<usize>>> =
            rows.iter_mut().enumerate().filter(|(k, _)| placed[*k]).map(|(_, r)| r).collect();
        let new_row = merge(&mut existing, &steps);
        width = new_row.len();
        rows[t] = new_row;
        placed[t] = true;
    }

    for t in 0..n {
        let before = sp_cost(&rows, n_sym);
        let mut others: Vec<Vec<Option<usize>>> =
            rows.iter().enumerate().filter(|(k, _)| *k != t).map(|(_, r)| r.clone()).collect();
        drop_empty_columns(&mut others);
        let width = others[0].len();
        let profile = Profile::new(&others, width, n_sym);
        let (_, steps) = align_to_profile(&seqs[t], &profile);
        let mut refs: Vec<&mut Vec<Option<usize>>> = others.iter_mut().collect();
        let new_row = merge(&mut refs, &steps);
        others.insert(t, new_row);
        if sp_cost(&others, n_sym) < before {
            rows = others;
        }
    }
    Ok(AlignmentMatrix { vocabulary, rows })
}
