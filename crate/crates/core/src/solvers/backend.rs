use crate::arith::{self, TruncationControl};
use crate::dist::{DistOperator, DistTensor, WorkerTopology};
use crate::error::Result;
use crate::htucker::{GeneralizedMatrix, HTOperator, HTensor};

/// The tensor operations a solver needs, implemented by the serial
/// reference code and by a worker topology.
pub trait Backend {
    type Tensor;
    type Operator;

    fn load(&self, x: &HTensor) -> Result<Self::Tensor>;
    fn load_operator(&self, op: &HTOperator) -> Result<Self::Operator>;
    fn fetch(&self, x: &Self::Tensor) -> Result<HTensor>;

    fn apply(&self, op: &Self::Operator, x: &Self::Tensor) -> Result<Self::Tensor>;
    fn add(&self, a: &Self::Tensor, c: &Self::Tensor) -> Result<Self::Tensor>;
    fn scale(&self, a: &Self::Tensor, alpha: f64) -> Result<Self::Tensor>;
    fn truncate(&self, a: &Self::Tensor, ctl: &TruncationControl) -> Result<Self::Tensor>;
    fn orthogonalize(&self, a: &Self::Tensor) -> Result<Self::Tensor>;
    fn inner(&self, a: &Self::Tensor, c: &Self::Tensor) -> Result<f64>;
    fn map_leaf(&self, a: &Self::Tensor, mu: usize, m: &GeneralizedMatrix) -> Result<Self::Tensor>;
    fn max_rank(&self, a: &Self::Tensor) -> usize;

    /// `alpha·x + y`.
    fn axpy(&self, alpha: f64, x: &Self::Tensor, y: &Self::Tensor) -> Result<Self::Tensor> {
        self.add(&self.scale(x, alpha)?, y)
    }

    fn norm(&self, a: &Self::Tensor) -> Result<f64> {
        Ok(self.inner(a, a)?.max(0.0).sqrt())
    }

    fn copy(&self, a: &Self::Tensor) -> Result<Self::Tensor> {
        self.scale(a, 1.0)
    }
}

/// In-process reference arithmetic.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Backend for Serial {
    type Tensor = HTensor;
    type Operator = HTOperator;

    fn load(&self, x: &HTensor) -> Result<HTensor> {
        Ok(x.clone())
    }

    fn load_operator(&self, op: &HTOperator) -> Result<HTOperator> {
        Ok(op.clone())
    }

    fn fetch(&self, x: &HTensor) -> Result<HTensor> {
        Ok(x.clone())
    }

    fn apply(&self, op: &HTOperator, x: &HTensor) -> Result<HTensor> {
        arith::apply_operator(op, x)
    }

    fn add(&self, a: &HTensor, c: &HTensor) -> Result<HTensor> {
        arith::add(a, c)
    }

    fn scale(&self, a: &HTensor, alpha: f64) -> Result<HTensor> {
        Ok(arith::scale(a, alpha))
    }

    fn truncate(&self, a: &HTensor, ctl: &TruncationControl) -> Result<HTensor> {
        arith::truncate(a, ctl)
    }

    fn orthogonalize(&self, a: &HTensor) -> Result<HTensor> {
        Ok(arith::orthogonalize(a))
    }

    fn inner(&self, a: &HTensor, c: &HTensor) -> Result<f64> {
        arith::inner_product(a, c)
    }

    fn map_leaf(&self, a: &HTensor, mu: usize, m: &GeneralizedMatrix) -> Result<HTensor> {
        arith::map_leaf(a, mu, m)
    }

    fn max_rank(&self, a: &HTensor) -> usize {
        a.max_rank()
    }
}

impl Backend for WorkerTopology {
    type Tensor = DistTensor;
    type Operator = DistOperator;

    fn load(&self, x: &HTensor) -> Result<DistTensor> {
        self.scatter(x)
    }

    fn load_operator(&self, op: &HTOperator) -> Result<DistOperator> {
        self.scatter_operator(op)
    }

    fn fetch(&self, x: &DistTensor) -> Result<HTensor> {
        self.gather(x)
    }

    fn apply(&self, op: &DistOperator, x: &DistTensor) -> Result<DistTensor> {
        self.apply_operator(op, x)
    }

    fn add(&self, a: &DistTensor, c: &DistTensor) -> Result<DistTensor> {
        WorkerTopology::add(self, a, c)
    }

    fn scale(&self, a: &DistTensor, alpha: f64) -> Result<DistTensor> {
        WorkerTopology::scale(self, a, alpha)
    }

    fn truncate(&self, a: &DistTensor, ctl: &TruncationControl) -> Result<DistTensor> {
        WorkerTopology::truncate(self, a, ctl)
    }

    fn orthogonalize(&self, a: &DistTensor) -> Result<DistTensor> {
        WorkerTopology::orthogonalize(self, a)
    }

    fn inner(&self, a: &DistTensor, c: &DistTensor) -> Result<f64> {
        self.inner_product(a, c)
    }

    fn map_leaf(&self, a: &DistTensor, mu: usize, m: &GeneralizedMatrix) -> Result<DistTensor> {
        WorkerTopology::map_leaf(self, a, mu, m)
    }

    fn max_rank(&self, a: &DistTensor) -> usize {
        a.max_rank()
    }
}
