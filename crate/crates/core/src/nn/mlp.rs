use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, Var};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    fn apply_graph(self, g: &mut Graph, v: Var) -> Var {
        match self {
            Activation::Identity => v,
            Activation::Relu => g.relu(v),
            Activation::Tanh => g.tanh(v),
        }
    }
}

/// Anything that exposes an ordered list of trainable tensors.
pub trait Parameters {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

/// A dense layer: `y = act(x · W + b)` with `W: [in, out]`, `b: [1, out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Multi-layer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Number of parameters of an MLP with the given layer widths
/// (input, hidden..., output).
pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Builds a network with widths `sizes = [in, hidden..., out]`.
    ///
    /// Weights and biases are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let n_layers = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
                let weight = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out));
                let bias = Tensor::matrix(1, fan_out, draw(fan_out));
                Layer {
                    weight,
                    bias,
                    activation: if i + 1 == n_layers { output } else { hidden },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("MLP with no layers".into()));
        }
        for l in &layers {
            if l.weight.shape().len() != 2 || l.bias.shape() != [1, l.out_dim()] {
                return Err(Error::Dimension(format!(
                    "layer weight {:?} / bias {:?}",
                    l.weight.shape(),
                    l.bias.shape()
                )));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.in_dim()];
        w.extend(self.layers.iter().map(Layer::out_dim));
        w
    }

    /// Multiplies the final layer's weights and bias by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let last = self.layers.last_mut().expect("non-empty");
        for v in last.weight.data_mut().iter_mut().chain(last.bias.data_mut()) {
            *v *= factor;
        }
    }

    /// Plain forward pass. Accepts a single row (rank 1) or a batch.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        if input.cols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        let rows = input.rows();
        let mut x = input.data().to_vec();
        for layer in &self.layers {
            let (k, n) = (layer.in_dim(), layer.out_dim());
            let mut out = vec![0.0; rows * n];
            for row in out.chunks_exact_mut(n) {
                row.copy_from_slice(layer.bias.data());
            }
            gemm(&x, false, layer.weight.data(), false, rows, k, n, &mut out, true);
            if layer.activation != Activation::Identity {
                for v in &mut out {
                    *v = layer.activation.apply(*v);
                }
            }
            x = out;
        }
        let mut shape = input.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = self.out_dim();
        Tensor::new(shape, x)
    }

    /// Puts the parameters on `g` as trainable leaves.
    pub fn bind(&self, g: &mut Graph) -> BoundMlp {
        self.bind_with(g, true)
    }

    /// Puts the parameters on `g` as constants (no gradient flows into them).
    pub fn bind_frozen(&self, g: &mut Graph) -> BoundMlp {
        self.bind_with(g, false)
    }

    fn bind_with(&self, g: &mut Graph, trainable: bool) -> BoundMlp {
        let vars = self
            .layers
            .iter()
            .map(|l| {
                let leaf = |g: &mut Graph, t: &Tensor| {
                    if trainable {
                        g.param(t.clone())
                    } else {
                        g.constant(t.clone())
                    }
                };
                (leaf(g, &l.weight), leaf(g, &l.bias), l.activation)
            })
            .collect();
        BoundMlp { vars }
    }

    /// `target ← rho·target + (1−rho)·online`, in place.
    pub fn polyak_update(&mut self, online: &Mlp, rho: f64) -> Result<()> {
        if self.widths() != online.widths() {
            return Err(Error::Dimension(format!(
                "polyak between {:?} and {:?}",
                self.widths(),
                online.widths()
            )));
        }
        polyak_params(self, online, rho)
    }
}

/// Polyak averaging over any pair of parameter sets with matching shapes.
pub fn polyak_params<P: Parameters>(target: &mut P, online: &P, rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("polyak rho {rho} outside [0, 1]")));
    }
    let src = online.params();
    let mut dst = target.params_mut();
    if src.len() != dst.len() || dst.iter().zip(&src).any(|(d, s)| !d.same_shape(s)) {
        return Err(Error::Dimension("polyak architecture mismatch".into()));
    }
    for (d, s) in dst.iter_mut().zip(src) {
        for (t, &o) in d.data_mut().iter_mut().zip(s.data()) {
            *t = rho * *t + (1.0 - rho) * o;
        }
    }
    Ok(())
}

impl Parameters for Mlp {
    fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

/// An [`Mlp`] whose parameters live on a [`Graph`].
#[derive(Debug, Clone)]
pub struct BoundMlp {
    vars: Vec<(Var, Var, Activation)>,
}

impl BoundMlp {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let mut h = x;
        for &(w, b, act) in &self.vars {
            let z = g.matmul(h, w);
            let z = g.add_bias(z, b);
            h = act.apply_graph(g, z);
        }
        h
    }

    /// Leaf handles in the same order as [`Parameters::params`].
    pub fn vars(&self) -> Vec<Var> {
        self.vars.iter().flat_map(|&(w, b, _)| [w, b]).collect()
    }

    /// Extracts this network's gradients, ordered like [`Parameters::params`].
    pub fn grads(&self, grads: &mut Gradients) -> Vec<Tensor> {
        self.vars().into_iter().map(|v| grads.take(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(w: f64, b: f64, act: Activation) -> Mlp {
        Mlp::from_layers(vec![Layer {
            weight: Tensor::matrix(1, 1, vec![w]),
            bias: Tensor::matrix(1, 1, vec![b]),
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn one_by_one_linear() {
        let net = single(2.0, 0.0, Activation::Identity);
        let y = net.forward(&Tensor::vector(vec![3.0])).unwrap();
        assert_eq!(y.data(), &[6.0]);
        assert_eq!(y.shape(), &[1]);
    }

    #[test]
    fn zero_weights_emit_activated_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::new(&[4, 5, 2], Activation::Tanh, Activation::Tanh, &mut rng);
        for l in net.layers_mut() {
            l.weight.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let b = net.layers()[1].bias.data().to_vec();
        for input in [vec![0.0; 4], vec![1.0, -2.0, 3.0, 7.0]] {
            let y = net.forward(&Tensor::vector(input)).unwrap();
            for (o, bv) in y.data().iter().zip(&b) {
                assert_eq!(*o, bv.tanh());
            }
        }
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 4, 1], Activation::Relu, Activation::Identity, &mut rng);
        let bad = Tensor::matrix(2, 2, vec![0.0; 4]);
        assert!(matches!(net.forward(&bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn param_count_is_pure_function_of_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for widths in [vec![3, 256, 256, 1], vec![2, 64, 64, 2], vec![5, 1]] {
            let net = Mlp::new(&widths, Activation::Relu, Activation::Identity, &mut rng);
            assert_eq!(net.num_params(), param_count(&widths));
        }
        assert_eq!(param_count(&[3, 256, 256, 1]), 3 * 256 + 256 + 256 * 256 + 256 + 257);
    }

    #[test]
    fn from_layers_rejects_broken_chain() {
        let l = |i, o| Layer {
            weight: Tensor::zeros(&[i, o]),
            bias: Tensor::zeros(&[1, o]),
            activation: Activation::Relu,
        };
        assert!(Mlp::from_layers(vec![l(2, 3), l(4, 1)]).is_err());
        assert!(Mlp::from_layers(vec![l(2, 3), l(3, 1)]).is_ok());
    }

    #[test]
    fn polyak_edges() {
        let online = single(4.0, 4.0, Activation::Identity);
        let mut t = single(2.0, 2.0, Activation::Identity);
        t.polyak_update(&online, 1.0).unwrap();
        assert_eq!(t, single(2.0, 2.0, Activation::Identity));
        t.polyak_update(&online, 0.5).unwrap();
        assert_eq!(t, single(3.0, 3.0, Activation::Identity));
        t.polyak_update(&online, 0.0).unwrap();
        assert_eq!(t, online);
    }

    #[test]
    fn polyak_converges_geometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let online = Mlp::new(&[3, 8, 2], Activation::Relu, Activation::Identity, &mut rng);
        let mut target = Mlp::new(&[3, 8, 2], Activation::Relu, Activation::Identity, &mut rng);
        let dist = |a: &Mlp, b: &Mlp| -> f64 {
            a.params()
                .iter()
                .zip(b.params())
                .flat_map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| (p - q).powi(2)))
                .sum::<f64>()
                .sqrt()
        };
        let d0 = dist(&target, &online);
        let rho: f64 = 0.9;
        for k in 1..=50 {
            target.polyak_update(&online, rho).unwrap();
            let expected = d0 * rho.powi(k);
            assert!((dist(&target, &online) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn polyak_rejects_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Mlp::new(&[3, 8, 2], Activation::Relu, Activation::Identity, &mut rng);
        let mut b = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        assert!(matches!(b.polyak_update(&a, 0.5), Err(Error::Dimension(_))));
    }

    #[test]
    fn graph_forward_matches_plain_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[3, 16, 16, 2], Activation::Tanh, Activation::Identity, &mut rng);
        let x = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
        let plain = net.forward(&x).unwrap();
        let mut g = Graph::new();
        let bound = net.bind(&mut g);
        let xv = g.constant(x);
        let y = bound.forward(&mut g, xv);
        assert_eq!(g.value(y).data(), plain.data());
    }
}
