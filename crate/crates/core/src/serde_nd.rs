//! Serde adapters storing ndarray values as nested JSON arrays.

use ndarray::{Array2, Array3};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err("ragged matrix rows".into());
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((n, m), flat).map_err(|e| e.to_string())
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}

pub mod opt_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<Array2<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Array2<f64>>, D::Error> {
        match Option::<Vec<Vec<f64>>>::deserialize(d)? {
            Some(rows) => from_rows(&rows).map(Some).map_err(D::Error::custom),
            None => Ok(None),
        }
    }
}

pub mod tensor3 {
    use super::*;

    pub fn serialize<S: Serializer>(t: &Array3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let nested: Vec<Vec<Vec<f64>>> = t
            .outer_iter()
            .map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect();
        nested.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array3<f64>, D::Error> {
        let nested = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        let a = nested.len();
        let b = nested.first().map_or(0, Vec::len);
        let c = nested.first().and_then(|m| m.first()).map_or(0, Vec::len);
        if nested.iter().any(|m| m.len() != b || m.iter().any(|r| r.len() != c)) {
            return Err(D::Error::custom("ragged transition tensor"));
        }
        let flat: Vec<f64> = nested.into_iter().flatten().flatten().collect();
        Array3::from_shape_vec((a, b, c), flat).map_err(D::Error::custom)
    }
}
