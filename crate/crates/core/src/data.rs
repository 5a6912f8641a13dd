//! Multi-fidelity observation blocks, bi-level aggregation and the CSV format.
//!
//! A dataset is an ordered list of blocks, one per fidelity `t = 1..=T`, where
//! `T` is the target (high) fidelity. The CSV layout is
//! `fidelity,x_1,...,x_d,y` with a header row.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Observations `(X, y)` of a single fidelity level.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityBlock {
    fidelity: usize,
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl FidelityBlock {
    pub fn new(fidelity: usize, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if fidelity == 0 {
            return Err(Error::InvalidData("fidelity index is 1-based".into()));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidData(format!("fidelity {fidelity} block is empty")));
        }
        if x.nrows() != y.len() {
            return Err(Error::InvalidData(format!(
                "fidelity {fidelity}: {} rows in X but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "fidelity {fidelity} contains non-finite values"
            )));
        }
        Ok(Self { fidelity, x, y })
    }

    pub fn fidelity(&self) -> usize {
        self.fidelity
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Inputs with the fidelity token appended as the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedBlock {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl TokenizedBlock {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Appends a constant fidelity-token column to `x`.
pub fn append_token(x: &DMatrix<f64>, token: usize) -> DMatrix<f64> {
    let d = x.ncols();
    x.clone().insert_column(d, token as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiFidelityDataset {
    blocks: Vec<FidelityBlock>,
}

impl MultiFidelityDataset {
    /// Builds a dataset from blocks with strictly increasing fidelity indices.
    pub fn new(blocks: Vec<FidelityBlock>) -> Result<Self> {
        if blocks.len() < 2 {
            return Err(Error::TooFewFidelities);
        }
        let d = blocks[0].dim();
        for pair in blocks.windows(2) {
            if pair[1].fidelity <= pair[0].fidelity {
                return Err(Error::InvalidData(
                    "fidelity indices must be strictly increasing".into(),
                ));
            }
        }
        if let Some(b) = blocks.iter().find(|b| b.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: b.dim(),
            });
        }
        Ok(Self { blocks })
    }

    /// Like [`new`](Self::new) but also requires `N_T <= N_{T-1} <= ... <= N_1`.
    pub fn new_imbalanced(blocks: Vec<FidelityBlock>) -> Result<Self> {
        let data = Self::new(blocks)?;
        if data.blocks.windows(2).any(|p| p[1].len() > p[0].len()) {
            return Err(Error::InvalidData(
                "imbalance regime requires non-increasing block sizes".into(),
            ));
        }
        Ok(data)
    }

    pub fn blocks(&self) -> &[FidelityBlock] {
        &self.blocks
    }

    /// Highest fidelity index `T`.
    pub fn top_fidelity(&self) -> usize {
        self.blocks.last().map(|b| b.fidelity).unwrap_or(0)
    }

    pub fn high(&self) -> &FidelityBlock {
        self.blocks.last().expect("dataset has at least two blocks")
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].dim()
    }

    /// Collapses every block below `T` into one LF block and returns it
    /// alongside the HF block, both with the fidelity token appended.
    pub fn aggregate_bilevel(&self) -> Result<(TokenizedBlock, TokenizedBlock)> {
        if self.blocks.len() < 2 {
            return Err(Error::TooFewFidelities);
        }
        let (high, lower) = self.blocks.split_last().expect("non-empty");
        let d = self.dim();
        let rows: usize = lower.iter().map(FidelityBlock::len).sum();
        let mut x = DMatrix::zeros(rows, d + 1);
        let mut y = DVector::zeros(rows);
        let mut r = 0;
        for block in lower {
            for i in 0..block.len() {
                for j in 0..d {
                    x[(r, j)] = block.x[(i, j)];
                }
                x[(r, d)] = block.fidelity as f64;
                y[r] = block.y[i];
                r += 1;
            }
        }
        let lf = TokenizedBlock { x, y };
        let hf = TokenizedBlock {
            x: append_token(&high.x, high.fidelity),
            y: high.y.clone(),
        };
        Ok((lf, hf))
    }

    /// Parses the `fidelity,x_1..x_d,y` CSV format.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 {
            return Err(Error::InvalidData(
                "expected columns fidelity, x_1..x_d, y".into(),
            ));
        }
        if headers.get(0) != Some("fidelity") {
            return Err(Error::InvalidData("first column must be `fidelity`".into()));
        }
        let d = headers.len() - 2;
        let mut rows: Vec<(usize, Vec<f64>, f64)> = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let row_no = line + 2;
            let fidelity: usize = record[0].parse().map_err(|_| {
                Error::InvalidData(format!(
                    "row {row_no}: fidelity '{}' is not a positive integer",
                    &record[0]
                ))
            })?;
            if fidelity == 0 {
                return Err(Error::InvalidData(format!(
                    "row {row_no}: fidelity must be positive"
                )));
            }
            let mut values = Vec::with_capacity(d + 1);
            for field in record.iter().skip(1) {
                let v: f64 = field.parse().map_err(|_| {
                    Error::InvalidData(format!("row {row_no}: cannot parse '{field}'"))
                })?;
                if !v.is_finite() {
                    return Err(Error::InvalidData(format!("row {row_no}: non-finite value")));
                }
                values.push(v);
            }
            let y = values.pop().expect("d + 1 values");
            rows.push((fidelity, values, y));
        }
        let mut levels: Vec<usize> = rows.iter().map(|r| r.0).collect();
        levels.sort_unstable();
        levels.dedup();
        let blocks = levels
            .into_iter()
            .map(|t| {
                let sel: Vec<_> = rows.iter().filter(|r| r.0 == t).collect();
                let x = DMatrix::from_fn(sel.len(), d, |i, j| sel[i].1[j]);
                let y = DVector::from_iterator(sel.len(), sel.iter().map(|r| r.2));
                FidelityBlock::new(t, x, y)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let d = self.dim();
        let mut header = vec!["fidelity".to_string()];
        header.extend((1..=d).map(|j| format!("x_{j}")));
        header.push("y".into());
        wtr.write_record(&header)?;
        for block in &self.blocks {
            for i in 0..block.len() {
                let mut rec = vec![block.fidelity.to_string()];
                rec.extend((0..d).map(|j| block.x[(i, j)].to_string()));
                rec.push(block.y[i].to_string());
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(t: usize, n: usize, d: usize) -> FidelityBlock {
        let x = DMatrix::from_fn(n, d, |i, j| (i * d + j) as f64 * 0.1 + t as f64);
        let y = DVector::from_fn(n, |i, _| i as f64 - t as f64);
        FidelityBlock::new(t, x, y).unwrap()
    }

    #[test]
    fn two_fidelity_stacking() {
        let data = MultiFidelityDataset::new(vec![block(1, 200, 2), block(2, 10, 2)]).unwrap();
        let (lf, hf) = data.aggregate_bilevel().unwrap();
        assert_eq!((lf.x.nrows(), lf.x.ncols()), (200, 3));
        assert_eq!((hf.x.nrows(), hf.x.ncols()), (10, 3));
        assert!(lf.x.column(2).iter().all(|&t| t == 1.0));
        assert!(hf.x.column(2).iter().all(|&t| t == 2.0));
    }

    #[test]
    fn five_fidelity_stacking() {
        let sizes = [1000, 750, 500, 250, 50];
        let blocks = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| block(i + 1, n, 7))
            .collect();
        let data = MultiFidelityDataset::new_imbalanced(blocks).unwrap();
        let (lf, hf) = data.aggregate_bilevel().unwrap();
        assert_eq!(lf.len(), 2500);
        assert_eq!(hf.len(), 50);
        let mut tokens: Vec<i64> = lf.x.column(7).iter().map(|&t| t as i64).collect();
        tokens.dedup();
        assert_eq!(tokens, vec![1, 2, 3, 4]);
    }

    #[test]
    fn three_fidelity_stacking() {
        let data =
            MultiFidelityDataset::new(vec![block(1, 200, 2), block(2, 50, 2), block(3, 10, 2)])
                .unwrap();
        let (lf, hf) = data.aggregate_bilevel().unwrap();
        assert_eq!(lf.len(), 250);
        assert_eq!(hf.len(), 10);
    }

    #[test]
    fn single_fidelity_rejected() {
        let err = MultiFidelityDataset::new(vec![block(1, 5, 2)]).unwrap_err();
        assert_eq!(err.to_string(), "need at least two fidelities");
    }

    #[test]
    fn aggregation_conserves_triples() {
        let data =
            MultiFidelityDataset::new(vec![block(1, 7, 3), block(2, 4, 3), block(4, 3, 3)])
                .unwrap();
        let (lf, hf) = data.aggregate_bilevel().unwrap();
        let mut expected = Vec::new();
        for b in data.blocks() {
            for i in 0..b.len() {
                let mut row: Vec<f64> = b.x().row(i).iter().copied().collect();
                row.push(b.fidelity() as f64);
                row.push(b.y()[i]);
                expected.push(row);
            }
        }
        let mut got = Vec::new();
        for blk in [&lf, &hf] {
            for i in 0..blk.len() {
                let mut row: Vec<f64> = blk.x.row(i).iter().copied().collect();
                row.push(blk.y[i]);
                got.push(row);
            }
        }
        let key = |a: &Vec<f64>, b: &Vec<f64>| a.partial_cmp(b).unwrap();
        expected.sort_by(key);
        got.sort_by(key);
        assert_eq!(expected, got);
    }

    #[test]
    fn rejects_bad_blocks() {
        let x = DMatrix::from_element(2, 1, 0.0);
        assert!(FidelityBlock::new(1, x.clone(), DVector::zeros(3)).is_err());
        assert!(FidelityBlock::new(0, x.clone(), DVector::zeros(2)).is_err());
        let y = DVector::from_vec(vec![0.0, f64::NAN]);
        assert!(FidelityBlock::new(1, x, y).is_err());
        let res = MultiFidelityDataset::new(vec![block(2, 3, 1), block(1, 3, 1)]);
        assert!(res.is_err());
        let res = MultiFidelityDataset::new(vec![block(1, 3, 1), block(2, 3, 2)]);
        assert!(matches!(res, Err(Error::DimensionMismatch { .. })));
        let res = MultiFidelityDataset::new_imbalanced(vec![block(1, 3, 1), block(2, 4, 1)]);
        assert!(res.is_err());
    }

    #[test]
    fn csv_round_trip() {
        let data = MultiFidelityDataset::new(vec![block(1, 4, 2), block(2, 2, 2)]).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("fidelity,x_1,x_2,y\n"));
        let back = MultiFidelityDataset::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn csv_rejects_garbage() {
        let bad_fid = "fidelity,x_1,y\n1.5,0,1\n2,1,1\n";
        assert!(MultiFidelityDataset::from_csv_reader(bad_fid.as_bytes()).is_err());
        let nan = "fidelity,x_1,y\n1,NaN,1\n2,1,1\n";
        assert!(MultiFidelityDataset::from_csv_reader(nan.as_bytes()).is_err());
        let no_header = "t,x_1,y\n1,0,1\n2,1,1\n";
        assert!(MultiFidelityDataset::from_csv_reader(no_header.as_bytes()).is_err());
        let one_level = "fidelity,x_1,y\n1,0,1\n1,1,1\n";
        assert!(matches!(
            MultiFidelityDataset::from_csv_reader(one_level.as_bytes()),
            Err(Error::TooFewFidelities)
        ));
    }
}
