use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::spectral::ImagePlane;

/// Dense row-major tensor. Activations use `N x C x H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(invalid(format!("tensor dimensions must be positive, got {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(invalid(format!(
                "tensor of shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); numel],
        }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Stacks same-shaped images into an `N x C x H x W` batch.
    pub fn from_images(images: &[ImagePlane<T>]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| invalid("cannot batch an empty image list"))?;
        let mut data = Vec::with_capacity(first.data().len() * images.len());
        for img in images {
            if !img.same_shape(first) {
                return Err(invalid(format!(
                    "batch images differ in shape: {:?} vs {:?}",
                    img.dims(),
                    first.dims()
                )));
            }
            data.extend_from_slice(img.data());
        }
        Self::new(
            vec![images.len(), first.channels(), first.height(), first.width()],
            data,
        )
    }

    /// Splits an `N x C x H x W` tensor back into images.
    pub fn to_images(&self) -> Result<Vec<ImagePlane<T>>> {
        let [n, c, h, w] = dims4(&self.shape)?;
        let step = c * h * w;
        (0..n)
            .map(|i| ImagePlane::new(h, w, c, self.data[i * step..(i + 1) * step].to_vec()))
            .collect()
    }
}

pub(crate) fn dims4(shape: &[usize]) -> Result<[usize; 4]> {
    match shape {
        &[n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(invalid(format!("expected an N x C x H x W tensor, got shape {shape:?}"))),
    }
}
