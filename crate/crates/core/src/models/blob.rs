//! Binary checkpoints for fitted models.
//!
//! ```text
//! "ZSM1" | u32 version = 1 | u8 kind | u32 n_matrices
//!        | n_matrices x (u32 rows | u32 cols | rows*cols f64)
//!        | u32 label-block length | labels joined by '\n'   (classifier only)
//! ```

use super::classifier::{Classifier, SoftmaxParams};
use super::embedding::EmbeddingModel;
use super::generator::GenerativeModel;
use super::linalg::Matrix;
use crate::data::ClassId;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"ZSM1";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelBlob {
    Embedding(EmbeddingModel),
    Generator(GenerativeModel),
    Classifier(Classifier),
}

fn row(v: &[f64]) -> Matrix {
    Matrix {
        rows: 1,
        cols: v.len(),
        data: v.to_vec(),
    }
}

fn scalar(x: f64) -> Matrix {
    row(&[x])
}

impl ModelBlob {
    fn kind(&self) -> u8 {
        match self {
            ModelBlob::Embedding(_) => 1,
            ModelBlob::Generator(_) => 2,
            ModelBlob::Classifier(_) => 3,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let matrices = match self {
            ModelBlob::Embedding(m) => vec![m.weights.clone(), row(&m.bias), scalar(m.lambda)],
            ModelBlob::Generator(m) => vec![m.weights.clone(), row(&m.bias), row(&m.variance), scalar(m.lambda)],
            ModelBlob::Classifier(m) => vec![m.params.weights.clone(), row(&m.params.bias), row(&m.shift), row(&m.scale)],
        };
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.push(self.kind());
        out.extend_from_slice(&(matrices.len() as u32).to_le_bytes());
        for m in &matrices {
            out.extend_from_slice(&(m.rows as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols as u32).to_le_bytes());
            for x in &m.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        if let ModelBlob::Classifier(m) = self {
            let labels = m.classes.iter().map(ClassId::as_str).collect::<Vec<_>>().join("\n");
            out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
            out.extend_from_slice(labels.as_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Blob("missing ZSM1 magic".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Blob(format!("unsupported version {version}")));
        }
        let kind = r.take(1)?[0];
        let count = r.u32()? as usize;
        let mut matrices = Vec::with_capacity(count.min(8));
        for _ in 0..count {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows.checked_mul(cols).ok_or_else(|| Error::Blob("matrix too large".into()))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Blob("matrix too large".into()))?)?;
            let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            matrices.push(Matrix { rows, cols, data });
        }
        let expect = |n: usize| -> Result<()> {
            if matrices.len() == n {
                Ok(())
            } else {
                Err(Error::Blob(format!("expected {n} matrices, found {}", matrices.len())))
            }
        };
        let blob = match kind {
            1 => {
                expect(3)?;
                let mut it = matrices.into_iter();
                let (weights, bias, lambda) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                ModelBlob::Embedding(EmbeddingModel {
                    weights,
                    bias: bias.data,
                    lambda: lambda.data[0],
                })
            }
            2 => {
                expect(4)?;
                let mut it = matrices.into_iter();
                let weights = it.next().unwrap();
                let bias = it.next().unwrap().data;
                let variance = it.next().unwrap().data;
                let lambda = it.next().unwrap().data[0];
                ModelBlob::Generator(GenerativeModel {
                    weights,
                    bias,
                    variance,
                    lambda,
                })
            }
            3 => {
                expect(4)?;
                let len = r.u32()? as usize;
                let text = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Blob("labels are not UTF-8".into()))?;
                let classes: Vec<ClassId> = if text.is_empty() { vec![] } else { text.split('\n').map(ClassId::from).collect() };
                let mut it = matrices.into_iter();
                let weights = it.next().unwrap();
                let bias = it.next().unwrap().data;
                let shift = it.next().unwrap().data;
                let scale = it.next().unwrap().data;
                if classes.len() != weights.rows {
                    return Err(Error::Blob("class count does not match weight rows".into()));
                }
                ModelBlob::Classifier(Classifier {
                    classes,
                    shift,
                    scale,
                    params: SoftmaxParams { weights, bias },
                    loss_history: vec![],
                })
            }
            other => return Err(Error::Blob(format!("unknown model kind {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Blob("trailing bytes".into()));
        }
        Ok(blob)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Blob("truncated".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_round_trip() {
        let e = ModelBlob::Embedding(EmbeddingModel {
            weights: Matrix::from_rows(&[vec![1.0, -2.5], vec![0.1, 3.0], vec![7.0, 8.0]]),
            bias: vec![0.5, 0.25, -1.0],
            lambda: 0.01,
        });
        let g = ModelBlob::Generator(GenerativeModel {
            weights: Matrix::from_rows(&[vec![1.0], vec![2.0]]),
            bias: vec![0.0, 1.0],
            variance: vec![1e-6, 2.0],
            lambda: 1.0,
        });
        let c = ModelBlob::Classifier(Classifier {
            classes: vec!["a".into(), "b".into()],
            shift: vec![0.1],
            scale: vec![2.0],
            params: SoftmaxParams {
                weights: Matrix::from_rows(&[vec![1.0], vec![-1.0]]),
                bias: vec![0.3, -0.3],
            },
            loss_history: vec![],
        });
        for blob in [e, g, c] {
            let bytes = blob.encode();
            assert_eq!(ModelBlob::decode(&bytes).unwrap(), blob);
            assert!(ModelBlob::decode(&bytes[..bytes.len() - 1]).is_err());
        }
        assert!(ModelBlob::decode(b"ZSM2").is_err());
    }
}
