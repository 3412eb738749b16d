use rand::Rng;

use crate::matrixcore::Matrix;
use crate::rng::{stream_rng, Stream};

pub const MLP2_INPUT: usize = 16;
pub const MLP2_HIDDEN: usize = 32;
pub const MLP2_CLASSES: usize = 4;
pub const MLP2_SAMPLES: usize = 256;

/// Gaussian-mixture classification set for the `16 → 32 → 4` tanh network.
///
/// Weights are stored output-major: `W₁` is `32×16`, `W₂` is `4×32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp2Data {
    /// `N × 16` inputs.
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Mlp2Data {
    /// Class means are `N(0, separation²)`, samples add unit Gaussian noise,
    /// and labels cycle through the classes.
    pub fn fixture(seed: u64, samples: usize, separation: f64) -> Self {
        let mut rng = stream_rng(seed, Stream::Data);
        let means = Matrix::gaussian(MLP2_CLASSES, MLP2_INPUT, separation, &mut rng);
        let labels: Vec<usize> = (0..samples).map(|i| i % MLP2_CLASSES).collect();
        let mut inputs = Matrix::gaussian(samples, MLP2_INPUT, 1.0, &mut rng);
        for (i, &y) in labels.iter().enumerate() {
            for j in 0..MLP2_INPUT {
                inputs.set(i, j, inputs.get(i, j) + means.get(y, j));
            }
        }
        Self { inputs, labels }
    }

    pub fn shapes(&self) -> [(usize, usize); 2] {
        [(MLP2_HIDDEN, MLP2_INPUT), (MLP2_CLASSES, MLP2_HIDDEN)]
    }

    /// LeCun-normal weights times `scale`.
    pub fn init<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Vec<Matrix> {
        self.shapes()
            .iter()
            .map(|&(m, n)| Matrix::gaussian(m, n, scale / (n as f64).sqrt(), rng))
            .collect()
    }

    pub(crate) fn loss_and_gradient(&self, w: &[Matrix], want_grad: bool) -> (f64, Vec<Matrix>) {
        let (w1, w2) = (&w[0], &w[1]);
        let n = self.labels.len();
        let hidden = self.inputs.matmul(&w1.transpose()).map(f64::tanh);
        let mut logits = hidden.matmul(&w2.transpose());
        let mut loss = 0.0;
        for (i, &y) in self.labels.iter().enumerate() {
            let row = &mut logits.as_mut_slice()[i * MLP2_CLASSES..(i + 1) * MLP2_CLASSES];
            let peak = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|z| (z - peak).exp()).sum();
            loss += total.ln() + peak - row[y];
            if want_grad {
                // row becomes (softmax - onehot) / N
                for (k, z) in row.iter_mut().enumerate() {
                    let p = (*z - peak).exp() / total;
                    *z = (p - if k == y { 1.0 } else { 0.0 }) / n as f64;
                }
            }
        }
        loss /= n as f64;
        if !want_grad {
            return (loss, Vec::new());
        }
        let dlogits = logits;
        let g2 = dlogits.transpose().matmul(&hidden);
        let dhidden = dlogits
            .matmul(w2)
            .zip_map(&hidden, |d, h| d * (1.0 - h * h));
        let g1 = dhidden.transpose().matmul(&self.inputs);
        (loss, vec![g1, g2])
    }
}
