use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{contract, Error, Result};

/// One named tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered, gap-free partition of a flat array into named tensors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    segments: Vec<Segment>,
}

impl ParamLayout {
    pub fn new(named_shapes: &[(&str, Vec<usize>)]) -> Self {
        let mut offset = 0;
        let segments = named_shapes
            .iter()
            .map(|(name, shape)| {
                let seg = Segment {
                    name: (*name).to_string(),
                    shape: shape.clone(),
                    offset,
                };
                offset += seg.len();
                seg
            })
            .collect();
        Self { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len())
    }

    pub fn segment(&self, name: &str) -> Result<&Segment> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| contract(format!("no parameter segment named `{name}`")))
    }

    /// Checks the offsets partition `0..total_len` with no gaps or overlaps.
    pub fn validate(&self) -> Result<()> {
        let mut expected = 0;
        for s in &self.segments {
            if s.offset != expected {
                return Err(contract(format!(
                    "segment `{}` starts at {} but previous ended at {}",
                    s.name, s.offset, expected
                )));
            }
            expected += s.len();
        }
        Ok(())
    }
}

/// A flat parameter array with its segment layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub layout: ParamLayout,
    pub data: Vec<f64>,
}

impl ParamVector {
    pub fn new(layout: ParamLayout, data: Vec<f64>) -> Result<Self> {
        layout.validate()?;
        if layout.total_len() != data.len() {
            return Err(Error::Dimension {
                op: "param_vector",
                lhs: vec![layout.total_len()],
                rhs: vec![data.len()],
            });
        }
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: ParamLayout) -> Self {
        let n = layout.total_len();
        Self {
            layout,
            data: vec![0.0; n],
        }
    }

    /// Packs tensors, in layout order, into one flat vector.
    pub fn flatten(layout: ParamLayout, tensors: &[Tensor]) -> Result<Self> {
        if tensors.len() != layout.segments().len() {
            return Err(contract(format!(
                "expected {} tensors, got {}",
                layout.segments().len(),
                tensors.len()
            )));
        }
        let mut data = Vec::with_capacity(layout.total_len());
        for (seg, t) in layout.segments().iter().zip(tensors) {
            if seg.shape != t.shape() {
                return Err(Error::Dimension {
                    op: "flatten",
                    lhs: seg.shape.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        Self::new(layout, data)
    }

    pub fn unflatten(&self) -> Vec<(String, Tensor)> {
        self.layout
            .segments()
            .iter()
            .map(|s| {
                let t = Tensor::new(s.shape.clone(), self.data[s.offset..s.offset + s.len()].to_vec())
                    .expect("layout validated at construction");
                (s.name.clone(), t)
            })
            .collect()
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let s = self.layout.segment(name)?;
        Tensor::new(s.shape.clone(), self.data[s.offset..s.offset + s.len()].to_vec())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_tensor(&self) -> Tensor {
        Tensor::vector(self.data.clone())
    }

    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.layout.clone(), data)
    }

    pub fn ensure_same_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(contract(format!(
                "parameter layouts differ ({} vs {} values)",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }
}

/// Views each segment of a flat tape variable as its own tensor.
pub fn segment_vars(tape: &mut Tape, flat: Var, layout: &ParamLayout) -> Result<Vec<Var>> {
    if tape.value(flat).len() != layout.total_len() {
        return Err(Error::Dimension {
            op: "segment_vars",
            lhs: tape.shape(flat).to_vec(),
            rhs: vec![layout.total_len()],
        });
    }
    layout
        .segments()
        .iter()
        .map(|s| tape.view(flat, s.offset, &s.shape))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ParamLayout {
        ParamLayout::new(&[("w", vec![2, 3]), ("b", vec![3])])
    }

    #[test]
    fn offsets_partition_flat_array() {
        let l = layout();
        assert_eq!(l.segments()[1].offset, 6);
        assert_eq!(l.total_len(), 9);
        l.validate().unwrap();
    }

    #[test]
    fn flatten_rejects_wrong_shape() {
        let r = ParamVector::flatten(layout(), &[Tensor::zeros(&[3, 2]), Tensor::zeros(&[3])]);
        assert!(r.is_err());
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(ParamVector::new(layout(), vec![0.0; 8]).is_err());
    }
}
