//! Partition of a static feature vector into interpolatable and
//! non-interpolatable coordinates.
//!
//! Interpolatable coordinates are numeric features whose convex combinations
//! stay plausible (byte histograms, entropies, counts, sizes). Everything else
//! (hashed name buckets, flags, version fields) is non-interpolatable and is
//! only ever replaced by values copied from real rows.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EMBER_V2_SCHEMA: &str = include_str!("../data/ember_v2_schema.json");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    dim: usize,
    interpolatable: Vec<usize>,
    non_interpolatable: Vec<usize>,
    names: Option<Vec<String>>,
}

/// On-disk form; the non-interpolatable set is the complement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    pub dim: usize,
    pub interpolatable: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl FeatureSchema {
    pub fn new(dim: usize, interpolatable: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut interp: Vec<usize> = interpolatable.into_iter().collect();
        interp.sort_unstable();
        if let Some(w) = interp.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidSchema(format!("index {} listed twice", w[0])));
        }
        if let Some(&bad) = interp.iter().find(|&&j| j >= dim) {
            return Err(Error::InvalidSchema(format!("index {bad} out of range for dim {dim}")));
        }
        if interp.is_empty() {
            return Err(Error::InvalidSchema("no interpolatable features".into()));
        }
        if interp.len() == dim {
            return Err(Error::InvalidSchema("no non-interpolatable features".into()));
        }
        let mut is_interp = vec![false; dim];
        for &j in &interp {
            is_interp[j] = true;
        }
        let non_interp = (0..dim).filter(|&j| !is_interp[j]).collect();
        Ok(Self {
            dim,
            interpolatable: interp,
            non_interpolatable: non_interp,
            names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim {
            return Err(Error::dim("schema names", self.dim, names.len()));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn from_file_repr(file: SchemaFile) -> Result<Self> {
        let schema = Self::new(file.dim, file.interpolatable)?;
        match file.names {
            Some(names) => schema.with_names(names),
            None => Ok(schema),
        }
    }

    pub fn to_file_repr(&self) -> SchemaFile {
        SchemaFile {
            dim: self.dim,
            interpolatable: self.interpolatable.clone(),
            names: self.names.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SchemaFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_file_repr(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_file_repr()).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// The packaged partition of the 2381-dimensional EMBER v2 layout.
    pub fn ember_v2() -> Self {
        let file: SchemaFile = serde_json::from_str(EMBER_V2_SCHEMA).expect("packaged schema parses");
        Self::from_file_repr(file).expect("packaged schema is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interpolatable(&self) -> &[usize] {
        &self.interpolatable
    }

    pub fn non_interpolatable(&self) -> &[usize] {
        &self.non_interpolatable
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn interpolatable_dim(&self) -> usize {
        self.interpolatable.len()
    }

    pub fn non_interpolatable_dim(&self) -> usize {
        self.non_interpolatable.len()
    }

    /// Splits `x` into `(s_i, s_n)`.
    pub fn split(&self, x: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
        if x.len() != self.dim {
            return Err(Error::dim("feature vector", self.dim, x.len()));
        }
        let s_i = self.interpolatable.iter().map(|&j| x[j]).collect();
        let s_n = self.non_interpolatable.iter().map(|&j| x[j]).collect();
        Ok((s_i, s_n))
    }

    /// Re-interleaves `(s_i, s_n)` into a full feature vector.
    pub fn join(&self, s_i: &[f32], s_n: &[f32]) -> Result<Vec<f32>> {
        if s_i.len() != self.interpolatable.len() {
            return Err(Error::dim("interpolatable block", self.interpolatable.len(), s_i.len()));
        }
        if s_n.len() != self.non_interpolatable.len() {
            return Err(Error::dim(
                "non-interpolatable block",
                self.non_interpolatable.len(),
                s_n.len(),
            ));
        }
        let mut x = vec![0.0; self.dim];
        for (&j, &v) in self.interpolatable.iter().zip(s_i) {
            x[j] = v;
        }
        for (&j, &v) in self.non_interpolatable.iter().zip(s_n) {
            x[j] = v;
        }
        Ok(x)
    }

    /// Column-wise split of a row matrix; both blocks are row-major.
    pub fn split_matrix(&self, x: &ArrayView2<f32>) -> Result<(Array2<f32>, Array2<f32>)> {
        if x.ncols() != self.dim {
            return Err(Error::dim("feature matrix columns", self.dim, x.ncols()));
        }
        let pick = |idx: &[usize]| x.select(Axis(1), idx).as_standard_layout().into_owned();
        Ok((pick(&self.interpolatable), pick(&self.non_interpolatable)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_selects_by_index() {
        let schema = FeatureSchema::new(4, [0, 2]).unwrap();
        let (s_i, s_n) = schema.split(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s_i, vec![1.0, 3.0]);
        assert_eq!(s_n, vec![2.0, 4.0]);
        assert_eq!(schema.non_interpolatable(), &[1, 3]);
    }

    #[test]
    fn degenerate_partitions_are_rejected() {
        assert!(FeatureSchema::new(3, [0, 1, 2]).is_err());
        assert!(FeatureSchema::new(3, []).is_err());
        assert!(FeatureSchema::new(3, [0, 0]).is_err());
        assert!(FeatureSchema::new(3, [3]).is_err());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let schema = FeatureSchema::new(4, [0, 2]).unwrap();
        assert!(matches!(schema.split(&[1.0; 3]), Err(Error::DimensionMismatch { .. })));
        assert!(schema.join(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ember_partition_covers_every_feature() {
        let schema = FeatureSchema::ember_v2();
        assert_eq!(schema.dim(), 2381);
        assert_eq!(schema.interpolatable_dim() + schema.non_interpolatable_dim(), 2381);
        let names = schema.names().unwrap();
        // Byte histograms interpolate; hashed import buckets do not.
        assert!(schema.interpolatable().contains(&0));
        assert!(names[0].starts_with("histogram"));
        let lib = names.iter().position(|n| n.starts_with("imports.libraries_hashed")).unwrap();
        assert!(schema.non_interpolatable().contains(&lib));
    }

    proptest! {
        #[test]
        fn split_join_is_bitwise_identity(
            (dim, mask, x) in (2usize..40).prop_flat_map(|d| (
                Just(d),
                prop::collection::vec(any::<bool>(), d),
                prop::collection::vec(any::<f32>(), d),
            ))
        ) {
            let mut interp: Vec<usize> = (0..dim).filter(|&j| mask[j]).collect();
            if interp.is_empty() { interp.push(0); }
            if interp.len() == dim { interp.pop(); }
            let schema = FeatureSchema::new(dim, interp).unwrap();
            let (a, b) = schema.split(&x).unwrap();
            let y = schema.join(&a, &b).unwrap();
            let xb: Vec<u32> = x.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(xb, yb);
        }
    }
}
