use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Storage precision of model parameters.
///
/// `F32` is the normal mode and is what the weight container stores.
/// `F64` keeps full precision for gradient checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl ParamData {
    pub fn len(&self) -> usize {
        match self {
            ParamData::F32(v) => v.len(),
            ParamData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            ParamData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ParamData::F64(v) => v.clone(),
        }
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            ParamData::F32(v) => v.clone(),
            ParamData::F64(v) => v.iter().map(|&x| x as f32).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: ParamData,
    /// Running statistics are stored alongside weights but never optimized.
    pub trainable: bool,
}

impl Param {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.to_f64()).expect("param shape matches its data")
    }
}

/// Ordered name → parameter map.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    precision: Precision,
    entries: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new(precision: Precision) -> Self {
        ParamStore {
            precision,
            entries: IndexMap::new(),
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn insert(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        values: Vec<f64>,
        trainable: bool,
    ) -> Result<()> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::dim(format!(
                "{name}: shape {shape:?} but {} values",
                values.len()
            )));
        }
        if self.entries.contains_key(name) {
            return Err(Error::Format(format!("duplicate parameter name '{name}'")));
        }
        let data = match self.precision {
            Precision::F32 => ParamData::F32(values.iter().map(|&v| v as f32).collect()),
            Precision::F64 => ParamData::F64(values),
        };
        self.entries.insert(
            name.to_string(),
            Param {
                shape,
                data,
                trainable,
            },
        );
        Ok(())
    }

    pub(crate) fn insert_raw(&mut self, name: &str, param: Param) {
        self.entries.insert(name.to_string(), param);
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        self.get(name)
            .map(Param::to_tensor)
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    pub fn values(&self, name: &str) -> Result<Vec<f64>> {
        self.get(name)
            .map(|p| p.data.to_f64())
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    /// Overwrites a parameter's values, rounding to the store precision.
    pub fn set(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))?;
        if p.len() != values.len() {
            return Err(Error::dim(format!(
                "{name}: expected {} values, got {}",
                p.len(),
                values.len()
            )));
        }
        match &mut p.data {
            ParamData::F32(d) => d.iter_mut().zip(values).for_each(|(d, &v)| *d = v as f32),
            ParamData::F64(d) => d.copy_from_slice(values),
        }
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries
            .values()
            .filter(|p| p.trainable)
            .map(Param::len)
            .sum()
    }

    /// Count of trainable scalars whose names satisfy `filter`.
    pub fn count_where(&self, filter: impl Fn(&str) -> bool) -> usize {
        self.entries
            .iter()
            .filter(|(k, p)| p.trainable && filter(k))
            .map(|(_, p)| p.len())
            .sum()
    }

    pub fn to_precision(&self, precision: Precision) -> ParamStore {
        let entries = self
            .entries
            .iter()
            .map(|(k, p)| {
                let data = match precision {
                    Precision::F32 => ParamData::F32(p.data.to_f32()),
                    Precision::F64 => ParamData::F64(p.data.to_f64()),
                };
                (
                    k.clone(),
                    Param {
                        shape: p.shape.clone(),
                        data,
                        trainable: p.trainable,
                    },
                )
            })
            .collect();
        ParamStore { precision, entries }
    }
}
