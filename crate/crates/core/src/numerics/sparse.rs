/// Compressed sparse row pattern (no values): row `i` lists the column
/// indices in `indices[offsets[i]..offsets[i + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    indices: Vec<u32>,
    cols: usize,
}

impl Csr {
    /// Builds a pattern from `(row, col)` pairs. Pairs are sorted and
    /// deduplicated; callers validate ranges.
    pub fn from_pairs(rows: usize, cols: usize, mut pairs: Vec<(u32, u32)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; rows + 1];
        for &(r, _) in &pairs {
            offsets[r as usize + 1] += 1;
        }
        for i in 0..rows {
            offsets[i + 1] += offsets[i];
        }
        let indices = pairs.into_iter().map(|(_, c)| c).collect();
        Csr { offsets, indices, cols }
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0u32; self.indices.len()];
        // Row-major traversal keeps every transposed row sorted.
        for r in 0..self.rows() {
            for &c in self.row(r) {
                indices[cursor[c as usize]] = r as u32;
                cursor[c as usize] += 1;
            }
        }
        Csr {
            offsets,
            indices,
            cols: self.rows(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_round_trips() {
        let m = Csr::from_pairs(3, 4, vec![(0, 3), (2, 1), (0, 1), (2, 1), (1, 0)]);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.row(0), &[1, 3]);
        let t = m.transpose();
        assert_eq!(t.rows(), 4);
        assert_eq!(t.row(1), &[0, 2]);
        assert_eq!(t.transpose(), m);
    }
}
