//! JSON input documents.
//!
//! Matrices are accepted either as a list of rows or as one flat row-major
//! list. Every index a user sees is 1-based; the library underneath is
//! 0-based.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use dstab_core::sim::PlantRealization;
use dstab_core::weights::WeightProblem;
use dstab_core::{DMatrix, MixingMatrix, Partition, PartitionedGain, ScalingDiagonal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixData {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl MatrixData {
    pub fn to_matrix(&self, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixData::Flat(v) => {
                ensure!(v.len() == rows * cols, "{what}: expected {} entries, found {}", rows * cols, v.len());
                Ok(DMatrix::from_row_slice(rows, cols, v))
            }
            MatrixData::Rows(r) => {
                ensure!(r.len() == rows, "{what}: expected {rows} rows, found {}", r.len());
                if let Some((i, row)) = r.iter().enumerate().find(|(_, row)| row.len() != cols) {
                    bail!("{what}: row {} has {} entries, expected {cols}", i + 1, row.len());
                }
                Ok(DMatrix::from_row_slice(rows, cols, &r.concat()))
            }
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixData::Rows(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

/// `{m, n, partition, A, K_gains}`; `partition` may be omitted when `m == n` or for pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainDocument {
    pub m: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<usize>>,
    #[serde(rename = "A")]
    pub a: MatrixData,
    #[serde(rename = "K_gains", default, skip_serializing_if = "Option::is_none")]
    pub k_gains: Option<Vec<Vec<f64>>>,
}

impl GainDocument {
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        self.a.to_matrix(self.m, self.n, "A")
    }

    pub fn partition(&self) -> Result<Partition> {
        match &self.partition {
            Some(p) => Ok(Partition::new(p.clone())?),
            None if self.m == self.n => Ok(Partition::singletons(self.m)?),
            None => bail!("partition is required when n ({}) differs from m ({})", self.n, self.m),
        }
    }

    pub fn gain(&self) -> Result<PartitionedGain> {
        Ok(PartitionedGain::new(self.matrix()?, self.partition()?)?)
    }

    /// `K_gains` when given, otherwise all ones.
    pub fn mixing(&self, partition: &Partition) -> Result<MixingMatrix> {
        match &self.k_gains {
            Some(k) => Ok(MixingMatrix::from_blocks(partition, k)?),
            None => Ok(MixingMatrix::ones(partition)),
        }
    }
}

/// `{partition, lambdas, ratios, base}`; `lambdas[group][rank]` defaults to ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightDocument {
    pub partition: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<Vec<f64>>>,
    pub ratios: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
}

impl WeightDocument {
    pub fn problem(&self) -> Result<WeightProblem> {
        let partition = Partition::new(self.partition.clone())?;
        Ok(match &self.lambdas {
            Some(l) => WeightProblem::new(partition, l.clone(), self.ratios.clone())?,
            None => WeightProblem::with_unit_lambdas(partition, self.ratios.clone())?,
        })
    }

    pub fn base(&self) -> f64 {
        self.base.unwrap_or(1.0)
    }
}

/// Plant `(A, B, C, D)` plus the controller gain source.
///
/// `Kbar` (n×m) wins when present; otherwise `K̄ = E·K` is built from
/// `partition`, `K_gains` and `epsilons`, each defaulting to ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantDocument {
    pub q: usize,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "A")]
    pub a: MatrixData,
    #[serde(rename = "B")]
    pub b: MatrixData,
    #[serde(rename = "C")]
    pub c: MatrixData,
    #[serde(rename = "D")]
    pub d: MatrixData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<usize>>,
    #[serde(rename = "K_gains", default, skip_serializing_if = "Option::is_none")]
    pub k_gains: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Kbar", default, skip_serializing_if = "Option::is_none")]
    pub kbar: Option<MatrixData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<f64>>,
}

impl PlantDocument {
    pub fn plant(&self) -> Result<PlantRealization> {
        let (q, m, n) = (self.q, self.m, self.n);
        ensure!(q > 0, "q must be at least 1: a static plant has no state");
        Ok(PlantRealization::new(
            self.a.to_matrix(q, q, "A")?,
            self.b.to_matrix(q, n, "B")?,
            self.c.to_matrix(m, q, "C")?,
            self.d.to_matrix(m, n, "D")?,
        )?)
    }

    pub fn controller_gain(&self) -> Result<DMatrix<f64>> {
        if let Some(k) = &self.kbar {
            return k.to_matrix(self.n, self.m, "Kbar");
        }
        let partition = match &self.partition {
            Some(p) => Partition::new(p.clone())?,
            None if self.m == self.n => Partition::singletons(self.m)?,
            None => bail!("either Kbar or partition is required when n ({}) differs from m ({})", self.n, self.m),
        };
        ensure!(partition.blocks() == self.m, "partition has {} blocks, expected m = {}", partition.blocks(), self.m);
        let k = match &self.k_gains {
            Some(k) => MixingMatrix::from_blocks(&partition, k)?,
            None => MixingMatrix::ones(&partition),
        };
        let e = match &self.epsilons {
            Some(e) => ScalingDiagonal::from_blocks(&partition, e)?,
            None => ScalingDiagonal::identity(&partition),
        };
        Ok(dstab_core::sim::controller_gain(&e, &k)?)
    }

    pub fn initial_state(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let x0 = self.x0.clone().unwrap_or_else(|| vec![1.0; self.m]);
        let z0 = self.z0.clone().unwrap_or_else(|| vec![0.0; self.q]);
        ensure!(x0.len() == self.m, "x0 has {} entries, expected m = {}", x0.len(), self.m);
        ensure!(z0.len() == self.q, "z0 has {} entries, expected q = {}", z0.len(), self.q);
        Ok((x0, z0))
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_accept_rows_and_flat_lists() {
        let rows: GainDocument =
            serde_json::from_str(r#"{"m":2,"n":4,"partition":[2,2],"A":[[1,1,0,0],[0,0,1,1]]}"#).unwrap();
        let flat: GainDocument =
            serde_json::from_str(r#"{"m":2,"n":4,"partition":[2,2],"A":[1,1,0,0,0,0,1,1]}"#).unwrap();
        assert_eq!(rows.matrix().unwrap(), flat.matrix().unwrap());
        assert_eq!(rows.gain().unwrap().partition().sizes(), &[2, 2]);
    }

    #[test]
    fn rejects_malformed_documents() {
        let short: GainDocument = serde_json::from_str(r#"{"m":2,"n":2,"A":[1,2,3]}"#).unwrap();
        assert!(short.matrix().is_err());
        assert!(serde_json::from_str::<GainDocument>(r#"{"m":2,"n":2,"A":[1,2,3,4],"extra":1}"#).is_err());
        let missing: GainDocument = serde_json::from_str(r#"{"m":1,"n":2,"A":[1,2]}"#).unwrap();
        assert!(missing.partition().is_err());
    }

    #[test]
    fn gain_document_round_trips_exactly() {
        let values = [0.1, 1.0 / 3.0, std::f64::consts::PI, -2.5e-300, 1e300, 0.30000000000000004];
        let doc = GainDocument {
            m: 2,
            n: 3,
            partition: Some(vec![2, 1]),
            a: MatrixData::Flat(values.to_vec()),
            k_gains: Some(vec![vec![0.7, 1.0 / 7.0], vec![2.0]]),
        };
        let text = serde_json::to_string(&doc).unwrap();
        let back: GainDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        for (a, b) in back.matrix().unwrap().iter().zip(doc.matrix().unwrap().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn plant_gain_sources() {
        let doc: PlantDocument = serde_json::from_str(
            r#"{"q":1,"m":1,"n":2,"A":[-1],"B":[1,1],"C":[1],"D":[0,0],"partition":[2],"K_gains":[[1,2]],"epsilons":[[3,1]]}"#,
        )
        .unwrap();
        assert_eq!(doc.controller_gain().unwrap(), DMatrix::from_row_slice(2, 1, &[3.0, 2.0]));
        let explicit: PlantDocument =
            serde_json::from_str(r#"{"q":1,"m":1,"n":2,"A":[-1],"B":[1,1],"C":[1],"D":[0,0],"Kbar":[[5],[6]]}"#)
                .unwrap();
        assert_eq!(explicit.controller_gain().unwrap(), DMatrix::from_row_slice(2, 1, &[5.0, 6.0]));
        let bare: PlantDocument =
            serde_json::from_str(r#"{"q":1,"m":1,"n":2,"A":[-1],"B":[1,1],"C":[1],"D":[0,0]}"#).unwrap();
        assert!(bare.controller_gain().is_err());
        let static_plant: PlantDocument =
            serde_json::from_str(r#"{"q":0,"m":1,"n":1,"A":[],"B":[],"C":[],"D":[0]}"#).unwrap();
        assert!(static_plant.plant().is_err());
    }
}
