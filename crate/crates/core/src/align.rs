//! Global pairwise alignment of boot sequences.
//!
//! The test sequence runs along matrix rows, the reference along columns.
//! Gap penalties are asymmetric: consuming a test symbol against a gap
//! inserts the gap into the *reference* and pays `gap_in_reference`;
//! consuming a reference symbol against a gap inserts it into the *test*
//! and pays `gap_in_test`. Reference gaps are penalized harder because
//! reordering a known-legitimate sample is less acceptable than
//! reordering the sequence under inspection.

use serde::{Deserialize, Serialize};

use crate::trace::BootSequence;
use crate::{Error, Result};

/// Match/mismatch scores plus asymmetric gap penalties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringScheme {
    pub match_score: i32,
    pub mismatch_score: i32,
    /// Penalty for a gap inserted into the test sequence.
    pub gap_in_test: i32,
    /// Penalty for a gap inserted into the reference sequence.
    pub gap_in_reference: i32,
}

impl ScoringScheme {
    pub fn new(
        match_score: i32,
        mismatch_score: i32,
        gap_in_test: i32,
        gap_in_reference: i32,
    ) -> Result<ScoringScheme> {
        let scheme = ScoringScheme {
            match_score,
            mismatch_score,
            gap_in_test,
            gap_in_reference,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gap_in_test > 0 || self.gap_in_reference > 0 {
            return Err(Error::InvalidScheme("gap penalties must be <= 0".into()));
        }
        if self.match_score <= self.mismatch_score {
            return Err(Error::InvalidScheme(
                "match_score must exceed mismatch_score".into(),
            ));
        }
        Ok(())
    }

    /// Operational default: +1 match, 0 mismatch, -2 test gaps, -3
    /// reference gaps.
    pub fn operational() -> ScoringScheme {
        ScoringScheme {
            match_score: 1,
            mismatch_score: 0,
            gap_in_test: -2,
            gap_in_reference: -3,
        }
    }

    /// Textbook demonstration scheme with heavy uniform gap penalties;
    /// kept as a named preset for golden-matrix verification.
    pub fn textbook() -> ScoringScheme {
        ScoringScheme {
            match_score: 11,
            mismatch_score: -2,
            gap_in_test: -8,
            gap_in_reference: -8,
        }
    }

    /// Count-the-matches heuristic: +1 per match, everything else free.
    pub fn unit_match() -> ScoringScheme {
        ScoringScheme {
            match_score: 1,
            mismatch_score: 0,
            gap_in_test: 0,
            gap_in_reference: 0,
        }
    }

    /// The same scheme with the two gap roles exchanged.
    pub fn swapped_gaps(&self) -> ScoringScheme {
        ScoringScheme {
            gap_in_test: self.gap_in_reference,
            gap_in_reference: self.gap_in_test,
            ..*self
        }
    }
}

/// One side of an emitted alignment: a symbol or a gap.
pub type AlignedSymbol = Option<u16>;

/// Outcome of a full alignment; the aligned pair is present only when
/// traceback ran.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentResult {
    pub score: i64,
    pub aligned_test: Option<Vec<AlignedSymbol>>,
    pub aligned_reference: Option<Vec<AlignedSymbol>>,
}

/// Default ceiling on `m * n` full-matrix cells (~1 GiB of i32 cells).
pub const DEFAULT_MAX_CELLS: u64 = 268_435_456;

fn check_pair(test: &BootSequence, reference: &BootSequence) -> Result<()> {
    if test.alphabet_fingerprint != reference.alphabet_fingerprint {
        return Err(Error::AlphabetMismatch);
    }
    Ok(())
}

/// Full-matrix global alignment with traceback.
pub fn align(
    test: &BootSequence,
    reference: &BootSequence,
    scheme: &ScoringScheme,
) -> Result<AlignmentResult> {
    check_pair(test, reference)?;
    align_symbols(&test.symbols, &reference.symbols, scheme, DEFAULT_MAX_CELLS)
}

/// As [`align`] but with an explicit matrix-cell budget.
pub fn align_with_budget(
    test: &BootSequence,
    reference: &BootSequence,
    scheme: &ScoringScheme,
    max_cells: u64,
) -> Result<AlignmentResult> {
    check_pair(test, reference)?;
    align_symbols(&test.symbols, &reference.symbols, scheme, max_cells)
}

/// Alignment over raw symbol slices (test = rows, reference = columns).
pub fn align_symbols(
    test: &[u16],
    reference: &[u16],
    scheme: &ScoringScheme,
    max_cells: u64,
) -> Result<AlignmentResult> {
    scheme.validate()?;
    let matrix = fill_matrix(test, reference, scheme, max_cells)?;
    let (aligned_test, aligned_reference) = traceback(test, reference, scheme, &matrix);
    let score = matrix.get(test.len(), reference.len());
    Ok(AlignmentResult {
        score: i64::from(score),
        aligned_test: Some(aligned_test),
        aligned_reference: Some(aligned_reference),
    })
}

/// The filled dynamic-programming matrix, row-major, (m+1) x (n+1).
pub struct ScoreMatrix {
    cells: Vec<i32>,
    cols: usize,
}

impl ScoreMatrix {
    pub fn get(&self, i: usize, j: usize) -> i32 {
        self.cells[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.cells.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// CSV dump: header row/column hold the symbols (as alphabet indices),
    /// cells hold the scores.
    pub fn to_csv(&self, test: &[u16], reference: &[u16]) -> String {
        let mut out = String::new();
        out.push_str(",,");
        let ref_header: Vec<String> = reference.iter().map(|s| s.to_string()).collect();
        out.push_str(&ref_header.join(","));
        out.push('\n');
        for i in 0..self.rows() {
            if i == 0 {
                out.push(',');
            } else {
                out.push_str(&test[i - 1].to_string());
                out.push(',');
            }
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Build the full matrix; exposed for the matrix-export debugging path.
pub fn fill_matrix(
    test: &[u16],
    reference: &[u16],
    scheme: &ScoringScheme,
    max_cells: u64,
) -> Result<ScoreMatrix> {
    let m = test.len();
    let n = reference.len();
    let required = (m as u64 + 1) * (n as u64 + 1);
    if required > max_cells {
        return Err(Error::MemoryBudget {
            required,
            available: max_cells,
        });
    }
    let cols = n + 1;
    let mut cells = vec![0i32; (m + 1) * cols];
    for j in 1..=n {
        cells[j] = scheme.gap_in_test * j as i32;
    }
    for i in 1..=m {
        cells[i * cols] = scheme.gap_in_reference * i as i32;
    }
    for i in 1..=m {
        let ti = test[i - 1];
        let (prev, cur) = cells.split_at_mut(i * cols);
        let prev = &prev[(i - 1) * cols..];
        for j in 1..=n {
            let s = if ti == reference[j - 1] {
                scheme.match_score
            } else {
                scheme.mismatch_score
            };
            let diag = prev[j - 1] + s;
            let up = prev[j] + scheme.gap_in_reference;
            let left = cur[j - 1] + scheme.gap_in_test;
            cur[j] = diag.max(up).max(left);
        }
    }
    Ok(ScoreMatrix { cells, cols })
}

/// Traceback from F(m, n), preferring diagonal, then up, then left on
/// ties. Tie order never changes the score, only the emitted alignment.
fn traceback(
    test: &[u16],
    reference: &[u16],
    scheme: &ScoringScheme,
    matrix: &ScoreMatrix,
) -> (Vec<AlignedSymbol>, Vec<AlignedSymbol>) {
    let mut i = test.len();
    let mut j = reference.len();
    let mut a = Vec::with_capacity(i + j);
    let mut b = Vec::with_capacity(i + j);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let s = if test[i - 1] == reference[j - 1] {
                scheme.match_score
            } else {
                scheme.mismatch_score
            };
            if matrix.get(i, j) == matrix.get(i - 1, j - 1) + s {
                a.push(Some(test[i - 1]));
                b.push(Some(reference[j - 1]));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && matrix.get(i, j) == matrix.get(i - 1, j) + scheme.gap_in_reference {
            a.push(Some(test[i - 1]));
            b.push(None);
            i -= 1;
        } else {
            a.push(None);
            b.push(Some(reference[j - 1]));
            j -= 1;
        }
    }
    a.reverse();
    b.reverse();
    (a, b)
}

/// Alignment score without materializing the matrix.
pub fn score_only(
    test: &BootSequence,
    reference: &BootSequence,
    scheme: &ScoringScheme,
) -> Result<i64> {
    check_pair(test, reference)?;
    Ok(score_only_symbols(&test.symbols, &reference.symbols, scheme)?.0)
}

/// Score-only path over raw slices; also reports how many DP cells were
/// allocated (two rolling rows over the shorter sequence).
pub fn score_only_symbols(
    test: &[u16],
    reference: &[u16],
    scheme: &ScoringScheme,
) -> Result<(i64, usize)> {
    scheme.validate()?;
    // Keep the rolling rows over the shorter sequence. Swapping the row
    // and column roles requires swapping the gap penalties with them.
    if reference.len() <= test.len() {
        Ok(score_rows(test, reference, scheme))
    } else {
        Ok(score_rows(reference, test, &scheme.swapped_gaps()))
    }
}

/// Two-row evaluation: `rows` runs down the matrix, `cols` across.
/// `scheme.gap_in_reference` is paid when a row symbol is consumed
/// against a gap, `scheme.gap_in_test` when a column symbol is.
fn score_rows(rows: &[u16], cols: &[u16], scheme: &ScoringScheme) -> (i64, usize) {
    let n = cols.len();
    let mut prev = vec![0i32; n + 1];
    let mut cur = vec![0i32; n + 1];
    let allocated = prev.len() + cur.len();
    for j in 1..=n {
        prev[j] = scheme.gap_in_test * j as i32;
    }
    for (i, &ri) in rows.iter().enumerate() {
        cur[0] = scheme.gap_in_reference * (i as i32 + 1);
        let mut left = cur[0];
        for j in 1..=n {
            let s = if ri == cols[j - 1] {
                scheme.match_score
            } else {
                scheme.mismatch_score
            };
            let v = (prev[j - 1] + s)
                .max(prev[j] + scheme.gap_in_reference)
                .max(left + scheme.gap_in_test);
            cur[j] = v;
            left = v;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (i64::from(prev[n]), allocated)
}

/// Score an already-aligned pair column by column.
pub fn rescore_alignment(
    aligned_test: &[AlignedSymbol],
    aligned_reference: &[AlignedSymbol],
    scheme: &ScoringScheme,
) -> Result<i64> {
    if aligned_test.len() != aligned_reference.len() {
        return Err(Error::AlignedLengthMismatch(
            aligned_test.len(),
            aligned_reference.len(),
        ));
    }
    let mut score = 0i64;
    for (col, (a, b)) in aligned_test.iter().zip(aligned_reference).enumerate() {
        score += i64::from(match (a, b) {
            (Some(x), Some(y)) if x == y => scheme.match_score,
            (Some(_), Some(_)) => scheme.mismatch_score,
            // Test symbol against a gap: the gap sits in the reference.
            (Some(_), None) => scheme.gap_in_reference,
            (None, Some(_)) => scheme.gap_in_test,
            (None, None) => return Err(Error::DoubleGap(col)),
        });
    }
    Ok(score)
}
