use crate::adapter::AdapterParams;
use crate::encoder::{Retriever, SpeechEncoderParams};
use crate::error::{Error, Result};

/// Everything the optimiser may touch: the speech encoder and the adapter.
/// The same type doubles as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainableParams {
    pub speech: SpeechEncoderParams,
    pub adapter: AdapterParams,
}

impl TrainableParams {
    pub fn from_model(model: &Retriever) -> Self {
        Self {
            speech: model.speech.clone(),
            adapter: model.adapter.clone(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            speech: self.speech.zeros_like(),
            adapter: self.adapter.zeros_like(),
        }
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.speech.layers.len() {
            names.push(format!("speech.{i}.w"));
            names.push(format!("speech.{i}.b"));
        }
        names.push("adapter.w_proj".into());
        names.push("adapter.b_proj".into());
        names
    }

    /// Flat views of every tensor, in `tensor_names` order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.speech.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out.push(self.adapter.w_proj.as_slice().expect("standard layout"));
        out.push(self.adapter.b_proj.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.speech.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.adapter.w_proj.as_slice_mut().expect("standard layout"));
        out.push(self.adapter.b_proj.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    context: "gradient accumulation",
                    expected: a.len(),
                    found: b.len(),
                });
            }
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Rounds every value to the nearest `f32`, as stored in checkpoints.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn apply_to(&self, model: &mut Retriever) {
        model.speech = self.speech.clone();
        model.adapter = self.adapter.clone();
    }
}
