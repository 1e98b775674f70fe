use super::space::ColorSpace;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `height × width × channels` image tagged with its color space.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    space: ColorSpace,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(height: usize, width: usize, space: ColorSpace, data: Vec<T>) -> Result<Self> {
        let expected = height * width * space.channel_count();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{height}x{width} {space} image needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { height, width, space, data })
    }

    pub fn filled(height: usize, width: usize, space: ColorSpace, pixel: &[T]) -> Result<Self> {
        if pixel.len() != space.channel_count() {
            return Err(Error::Shape(format!("{space} pixel needs {} channels", space.channel_count())));
        }
        let data = pixel.iter().copied().cycle().take(height * width * pixel.len()).collect();
        Self::new(height, width, space, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.space.channel_count()
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[T] {
        let c = self.channels();
        let at = (y * self.width + x) * c;
        &self.data[at..at + c]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.channels())
    }

    pub(crate) fn expect_space(&self, expected: ColorSpace) -> Result<()> {
        if self.space != expected {
            return Err(Error::WrongColorSpace { expected: expected.id().into(), actual: self.space.id().into() });
        }
        Ok(())
    }

    /// Applies `f` to every pixel, producing an image in `space`.
    pub fn map_pixels(&self, space: ColorSpace, mut f: impl FnMut(&[T], &mut [T])) -> Image<T> {
        let c_out = space.channel_count();
        let mut data = vec![T::zero(); self.pixel_count() * c_out];
        for (src, dst) in self.pixels().zip(data.chunks_exact_mut(c_out)) {
            f(src, dst);
        }
        Image { height: self.height, width: self.width, space, data }
    }

    /// Single channel as a plain vector.
    pub fn channel(&self, index: usize) -> Vec<T> {
        self.pixels().map(|p| p[index]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            space: self.space,
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    /// `[H, W, C]` tensor view of the pixel data.
    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(&[self.height, self.width, self.channels()], self.data.clone())
            .expect("image data length is an invariant")
    }

    pub fn from_tensor(tensor: &Tensor<T>, space: ColorSpace) -> Result<Self> {
        let s = tensor.shape();
        if s.len() != 3 || s[2] != space.channel_count() {
            return Err(Error::Shape(format!("tensor {s:?} is not a {space} image")));
        }
        Self::new(s[0], s[1], space, tensor.data().to_vec())
    }
}
