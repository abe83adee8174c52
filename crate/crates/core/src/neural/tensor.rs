use super::NeuralError;
use crate::{Field2D, Grid2D};

/// Dense `(batch, channels, rows, cols)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self { dims, data: vec![0.0; dims.iter().product()] }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self, NeuralError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(NeuralError::Shape(format!("zero dimension in {dims:?}")));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(NeuralError::Shape(format!("{} values for dims {dims:?}", data.len())));
        }
        Ok(Self { dims, data })
    }

    /// Stacks fields as the channels of a single batch element.
    pub fn from_fields(fields: &[&Field2D]) -> Result<Self, NeuralError> {
        let first = fields.first().ok_or_else(|| NeuralError::Shape("no fields".into()))?;
        let n = first.n();
        let mut data = Vec::with_capacity(fields.len() * n * n);
        for f in fields {
            if f.grid() != first.grid() {
                return Err(NeuralError::Shape("fields on different grids".into()));
            }
            data.extend_from_slice(f.values());
        }
        Self::from_vec([1, fields.len(), n, n], data)
    }

    /// Channel `c` of batch element `b` as a field on `grid`.
    pub fn to_field(&self, b: usize, c: usize, grid: Grid2D) -> Result<Field2D, NeuralError> {
        if self.dims[2] != grid.n() || self.dims[3] != grid.n() {
            return Err(NeuralError::Shape(format!("plane {}x{} vs grid {}", self.dims[2], self.dims[3], grid.n())));
        }
        Field2D::from_values(grid, self.plane(b, c).to_vec()).map_err(|e| NeuralError::Shape(e.to_string()))
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn rows(&self) -> usize {
        self.dims[2]
    }

    pub fn cols(&self) -> usize {
        self.dims[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let p = self.plane_len();
        let start = (b * self.dims[1] + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let p = self.plane_len();
        let start = (b * self.dims[1] + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Concatenates along channels.
    pub fn concat(a: &Tensor4, b: &Tensor4) -> Result<Tensor4, NeuralError> {
        if a.dims[0] != b.dims[0] || a.dims[2] != b.dims[2] || a.dims[3] != b.dims[3] {
            return Err(NeuralError::Shape(format!("cannot concat {:?} and {:?}", a.dims, b.dims)));
        }
        let [bs, ca, h, w] = a.dims;
        let cb = b.dims[1];
        let mut out = Tensor4::zeros([bs, ca + cb, h, w]);
        for s in 0..bs {
            for c in 0..ca {
                out.plane_mut(s, c).copy_from_slice(a.plane(s, c));
            }
            for c in 0..cb {
                out.plane_mut(s, ca + c).copy_from_slice(b.plane(s, c));
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor4::concat`] given the first part's channel count.
    pub fn split_channels(&self, first: usize) -> (Tensor4, Tensor4) {
        let [bs, c, h, w] = self.dims;
        let mut a = Tensor4::zeros([bs, first, h, w]);
        let mut b = Tensor4::zeros([bs, c - first, h, w]);
        for s in 0..bs {
            for k in 0..c {
                if k < first {
                    a.plane_mut(s, k).copy_from_slice(self.plane(s, k));
                } else {
                    b.plane_mut(s, k - first).copy_from_slice(self.plane(s, k));
                }
            }
        }
        (a, b)
    }
}
