use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Backend, Dense, Mlp, MlpVars, Mode, Tensor};
use crate::error::{Error, Result};
use crate::model::time_encoding;
use crate::seed::mix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Unconstrained drift and diffusion networks of `(t, z)`.
    NaiveSde,
    /// Langevin-type: time-free drift, additive noise `σ(t)`.
    Lsde,
    /// Linear multiplicative noise `σ(t) ⊙ z`.
    Lnsde,
    /// Geometric: `dz / z = γ dt + σ(t) dW`.
    Gsde,
    /// Controlled differential equation baseline.
    Ncde,
    /// Ordinary differential equation baseline (no noise).
    Node,
}

impl ModelKind {
    pub fn is_stochastic(self) -> bool {
        !matches!(self, ModelKind::Ncde | ModelKind::Node)
    }
}

/// Diagonal diffusion coefficient `g(t, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionForm {
    /// `σ(t)`
    Additive,
    /// `σ(t) ⊙ z`
    Linear,
    /// `g(t, z)`, an unconstrained network.
    Network,
    /// `sqrt(relu(z) + 1e-8)`
    Sqrt,
    /// `|z|³`
    Cubic,
    /// A learnable constant vector.
    Constant,
    /// No noise.
    Zero,
}

/// Parameterisation of `σ(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaNet {
    /// Affine in the time encoding.
    Affine,
    /// Network of the time encoding with final `tanh`.
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub latent_dim: usize,
    pub time_dim: usize,
    /// Hidden layers in each vector field.
    pub n_layers: usize,
    pub hidden: usize,
    /// Hidden width of the readout; `None` for a single affine layer.
    pub readout_hidden: Option<usize>,
    pub dropout: f64,
    pub sigma_net: SigmaNet,
    /// Overrides the kind's default diffusion.
    pub diffusion: Option<DiffusionForm>,
    /// Feed the controlled state into the drift.
    pub use_control: bool,
    /// Hidden activation; `None` picks relu, or tanh for the geometric kind.
    pub activation: Option<Activation>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Lnsde,
            input_dim: 1,
            output_dim: 2,
            latent_dim: 16,
            time_dim: 8,
            n_layers: 2,
            hidden: 32,
            readout_hidden: Some(32),
            dropout: 0.1,
            sigma_net: SigmaNet::Mlp,
            diffusion: None,
            use_control: true,
            activation: None,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn new(kind: ModelKind, input_dim: usize, output_dim: usize) -> Self {
        Self { kind, input_dim, output_dim, ..Self::default() }
    }

    pub fn diffusion_form(&self) -> DiffusionForm {
        self.diffusion.unwrap_or(match self.kind {
            ModelKind::Lsde => DiffusionForm::Additive,
            ModelKind::Lnsde | ModelKind::Gsde => DiffusionForm::Linear,
            ModelKind::NaiveSde => DiffusionForm::Network,
            ModelKind::Ncde | ModelKind::Node => DiffusionForm::Zero,
        })
    }

    pub fn hidden_activation(&self) -> Activation {
        self.activation.unwrap_or(match self.kind {
            ModelKind::Gsde => Activation::Tanh,
            _ => Activation::Relu,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(Error::InvalidArgument("time_dim must be a positive even number".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.latent_dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if self.kind == ModelKind::Gsde && matches!(self.hidden_activation(), Activation::Relu | Activation::Identity) {
            return Err(Error::InvalidArgument("the geometric drift needs tanh or sigmoid activations".into()));
        }
        if self.kind == ModelKind::Gsde && self.diffusion_form() != DiffusionForm::Linear {
            return Err(Error::InvalidArgument("the geometric kind only supports its own diffusion".into()));
        }
        Ok(())
    }
}

/// A neural SDE (or CDE/ODE baseline) with its readout network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeModel {
    pub config: ModelConfig,
    /// Initial map `h`, a single affine layer.
    pub h: Mlp,
    /// Controlled state `ζ(t, z, X)`.
    pub zeta: Option<Mlp>,
    /// Drift network; for the CDE kind a matrix-valued field.
    pub gamma: Mlp,
    /// `σ(t)` or `g(t, z)`, depending on the diffusion form.
    pub sigma: Option<Mlp>,
    /// Learnable constant diffusion.
    pub sigma_const: Option<Tensor>,
    pub readout: Mlp,
}

impl SdeModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let act = c.hidden_activation();
        let hidden = vec![c.hidden; c.n_layers];
        let path_dim = c.input_dim + 1;
        let seed = |i| mix(c.seed, i);

        let h = Mlp::init(c.input_dim, &[], c.latent_dim, Activation::Identity, false, seed(0))?;
        let zeta = if c.use_control && !matches!(c.kind, ModelKind::NaiveSde | ModelKind::Ncde) {
            Some(Mlp::init(c.time_dim + c.latent_dim + path_dim, &hidden, c.latent_dim, act, true, seed(1))?)
        } else {
            None
        };
        let gamma = match c.kind {
            ModelKind::Lsde => Mlp::init(c.latent_dim, &hidden, c.latent_dim, act, true, seed(2))?,
            ModelKind::Ncde => {
                Mlp::init(c.time_dim + c.latent_dim, &hidden, c.latent_dim * path_dim, act, true, seed(2))?
            }
            _ => Mlp::init(c.time_dim + c.latent_dim, &hidden, c.latent_dim, act, true, seed(2))?,
        };
        let form = c.diffusion_form();
        let sigma = match form {
            DiffusionForm::Additive | DiffusionForm::Linear => Some(match c.sigma_net {
                SigmaNet::Affine => Mlp::init(c.time_dim, &[], c.latent_dim, Activation::Identity, false, seed(3))?,
                SigmaNet::Mlp => Mlp::init(c.time_dim, &hidden, c.latent_dim, act, true, seed(3))?,
            }),
            DiffusionForm::Network => {
                Some(Mlp::init(c.time_dim + c.latent_dim, &hidden, c.latent_dim, act, true, seed(3))?)
            }
            _ => None,
        };
        let sigma_const = (form == DiffusionForm::Constant).then(|| Tensor::filled(vec![c.latent_dim], 0.1));
        let readout_hidden: Vec<usize> = c.readout_hidden.into_iter().collect();
        let readout = Mlp::init(c.latent_dim, &readout_hidden, c.output_dim, Activation::Relu, false, seed(4))?
            .with_dropout(c.dropout)?;
        Ok(Self { config, h, zeta, gamma, sigma, sigma_const, readout })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Parameters in declaration order: h, ζ, γ, σ, constant σ, readout.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = self.h.params();
        if let Some(z) = &self.zeta {
            out.extend(z.params());
        }
        out.extend(self.gamma.params());
        if let Some(s) = &self.sigma {
            out.extend(s.params());
        }
        if let Some(s) = &self.sigma_const {
            out.push(s);
        }
        out.extend(self.readout.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.h.params_mut();
        if let Some(z) = &mut self.zeta {
            out.extend(z.params_mut());
        }
        out.extend(self.gamma.params_mut());
        if let Some(s) = &mut self.sigma {
            out.extend(s.params_mut());
        }
        if let Some(s) = &mut self.sigma_const {
            out.push(s);
        }
        out.extend(self.readout.params_mut());
        out
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Learning-rate multipliers: `readout_mult` on the readout's final
    /// layer, 1 elsewhere.
    pub fn lr_multipliers(&self, readout_mult: f64) -> Vec<f64> {
        let n = self.params().len();
        (0..n).map(|i| if i + 2 >= n { readout_mult } else { 1.0 }).collect()
    }

    pub fn bind<B: Backend>(&self, b: &mut B) -> BoundModel<B::T> {
        BoundModel {
            config: self.config.clone(),
            h: self.h.bind(b),
            zeta: self.zeta.as_ref().map(|m| m.bind(b)),
            gamma: self.gamma.bind(b),
            sigma: self.sigma.as_ref().map(|m| m.bind(b)),
            sigma_const: self.sigma_const.as_ref().map(|t| b.param(t)),
            readout: self.readout.bind(b),
        }
    }

    /// Overwrites `h` with `W` (`[d_z, d_x]`) and `b`.
    pub fn set_initial_map(&mut self, weight: Tensor, bias: Tensor) -> Result<()> {
        let layer = Dense { weight, bias, activation: Activation::Identity };
        if layer.in_dim() != self.config.input_dim || layer.out_dim() != self.config.latent_dim {
            return Err(Error::Shape("initial map has the wrong dimensions".into()));
        }
        self.h = Mlp::from_layers(vec![layer], false)?;
        Ok(())
    }
}

/// Model parameters bound to a backend, plus the field evaluations.
/// Every method works on a batch: rows are samples.
#[derive(Clone, Debug)]
pub struct BoundModel<T> {
    pub config: ModelConfig,
    h: MlpVars<T>,
    zeta: Option<MlpVars<T>>,
    gamma: MlpVars<T>,
    sigma: Option<MlpVars<T>>,
    sigma_const: Option<T>,
    readout: MlpVars<T>,
}

fn encoding_rows(t: f64, dim: usize, rows: usize) -> Tensor {
    let e = time_encoding(t, dim);
    let data = (0..rows).flat_map(|_| e.iter().copied()).collect();
    Tensor::matrix(rows, dim, data)
}

impl<T: Clone> BoundModel<T> {
    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Parameter handles in the same order as [`SdeModel::params`].
    pub fn vars(&self) -> Vec<T> {
        let mut out = self.h.vars();
        if let Some(z) = &self.zeta {
            out.extend(z.vars());
        }
        out.extend(self.gamma.vars());
        if let Some(s) = &self.sigma {
            out.extend(s.vars());
        }
        if let Some(s) = &self.sigma_const {
            out.push(s.clone());
        }
        out.extend(self.readout.vars());
        out
    }

    pub fn encoding<B: Backend<T = T>>(&self, b: &mut B, t: f64, rows: usize) -> T {
        b.constant(encoding_rows(t, self.config.time_dim, rows))
    }

    /// Whether the drift reads the path value through the control net.
    pub fn has_control(&self) -> bool {
        self.zeta.is_some()
    }

    /// `z0 = W_h x0 + b_h`; for the geometric kind `softplus(.) + 1e-6`.
    pub fn init_state<B: Backend<T = T>>(&self, b: &mut B, x0: &T) -> Result<T> {
        let z = self.h.forward(b, x0, Mode::Eval)?;
        Ok(match self.kind() {
            ModelKind::Gsde => {
                let sp = b.unary(&z, crate::autodiff::Unary::Softplus);
                b.offset(&sp, 1e-6)
            }
            _ => z,
        })
    }

    /// `ζ(enc(t), z, X_t)`, or `z` itself when the model has no control net.
    pub fn controlled_state<B: Backend<T = T>>(&self, b: &mut B, t: f64, z: &T, x_t: Option<&T>) -> Result<T> {
        match &self.zeta {
            Some(zeta) => {
                let x_t = x_t.ok_or_else(|| Error::InvalidArgument("control net needs the path value".into()))?;
                let rows = b.value(z).rows();
                let enc = self.encoding(b, t, rows);
                let input = b.concat_cols(&[&enc, z, x_t])?;
                zeta.forward(b, &input, Mode::Eval)
            }
            None => Ok(z.clone()),
        }
    }

    /// Drift network evaluated at the controlled state, before any
    /// multiplication by the state. For the geometric kind this is the
    /// relative drift `γ(t, zbar)`.
    pub fn drift_core<B: Backend<T = T>>(&self, b: &mut B, t: f64, z: &T, x_t: Option<&T>) -> Result<T> {
        let rows = b.value(z).rows();
        match self.kind() {
            ModelKind::Lsde => {
                let zbar = self.controlled_state(b, t, z, x_t)?;
                self.gamma.forward(b, &zbar, Mode::Eval)
            }
            ModelKind::Ncde => Err(Error::InvalidArgument("the CDE field is matrix-valued; use cde_field".into())),
            _ => {
                let zbar = self.controlled_state(b, t, z, x_t)?;
                let enc = self.encoding(b, t, rows);
                let input = b.concat_cols(&[&enc, &zbar])?;
                self.gamma.forward(b, &input, Mode::Eval)
            }
        }
    }

    /// Drift of the SDE in the state variable.
    pub fn drift<B: Backend<T = T>>(&self, b: &mut B, t: f64, z: &T, x_t: Option<&T>) -> Result<T> {
        if self.kind() == ModelKind::Gsde {
            if let Some((index, &value)) = b.value(z).data().iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::NegativeStateGsde { index, value });
            }
            let g = self.drift_core(b, t, z, x_t)?;
            return b.mul(&g, z);
        }
        self.drift_core(b, t, z, x_t)
    }

    /// `f(t, z)` reshaped row-wise as a `d_z x (d_x + 1)` matrix.
    pub fn cde_field<B: Backend<T = T>>(&self, b: &mut B, t: f64, z: &T) -> Result<T> {
        let rows = b.value(z).rows();
        let enc = self.encoding(b, t, rows);
        let input = b.concat_cols(&[&enc, z])?;
        self.gamma.forward(b, &input, Mode::Eval)
    }

    /// `σ(t)` as a `[rows, d_z]` tensor, for forms built on it.
    pub fn sigma_t<B: Backend<T = T>>(&self, b: &mut B, t: f64, rows: usize) -> Result<T> {
        let net = self
            .sigma
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no σ(t) network".into()))?;
        let enc = self.encoding(b, t, rows);
        net.forward(b, &enc, Mode::Eval)
    }

    /// Diagonal diffusion coefficients.
    pub fn diffusion<B: Backend<T = T>>(&self, b: &mut B, t: f64, z: &T) -> Result<T> {
        let rows = b.value(z).rows();
        let d = self.config.latent_dim;
        match self.config.diffusion_form() {
            DiffusionForm::Additive => self.sigma_t(b, t, rows),
            DiffusionForm::Linear => {
                let s = self.sigma_t(b, t, rows)?;
                b.mul(&s, z)
            }
            DiffusionForm::Network => {
                let enc = self.encoding(b, t, rows);
                let input = b.concat_cols(&[&enc, z])?;
                self.sigma.as_ref().expect("network diffusion").forward(b, &input, Mode::Eval)
            }
            DiffusionForm::Sqrt => {
                let r = b.relu(z);
                let r = b.offset(&r, 1e-8);
                Ok(b.unary(&r, crate::autodiff::Unary::Sqrt))
            }
            DiffusionForm::Cubic => {
                let a = b.unary(z, crate::autodiff::Unary::Abs);
                let sq = b.square(z);
                b.mul(&a, &sq)
            }
            DiffusionForm::Constant => {
                let c = self.sigma_const.as_ref().expect("constant diffusion");
                // Broadcast the [d_z] vector over rows via an affine map of zeros.
                let zeros = b.constant(Tensor::zeros(vec![rows, 1]));
                let w = b.constant(Tensor::zeros(vec![d, 1]));
                b.affine(&zeros, &w, c)
            }
            DiffusionForm::Zero => Ok(b.constant(Tensor::zeros(vec![rows, d]))),
        }
    }

    /// `g ⊙ ∂g/∂z` on the diagonal, when it has a closed form.
    pub fn milstein_term<B: Backend<T = T>>(&self, b: &mut B, t: f64, z: &T, g: &T) -> Result<Option<T>> {
        let rows = b.value(z).rows();
        Ok(match self.config.diffusion_form() {
            DiffusionForm::Additive | DiffusionForm::Constant | DiffusionForm::Zero => None,
            DiffusionForm::Linear => {
                let s = self.sigma_t(b, t, rows)?;
                Some(b.mul(g, &s)?)
            }
            DiffusionForm::Sqrt => {
                // g g' = 1/2 where z > 0
                let mask = b.value(z).map(|v| if v > 0.0 { 0.5 } else { 0.0 });
                Some(b.constant(mask))
            }
            DiffusionForm::Cubic => {
                // g' = 3 z |z|
                let a = b.unary(z, crate::autodiff::Unary::Abs);
                let za = b.mul(z, &a)?;
                let slope = b.scale(&za, 3.0);
                Some(b.mul(g, &slope)?)
            }
            DiffusionForm::Network => None,
        })
    }

    pub fn readout<B: Backend<T = T>>(&self, b: &mut B, z_t: &T, mode: Mode) -> Result<T> {
        self.readout.forward(b, z_t, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Eval, Tape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect())
    }

    fn model(kind: ModelKind) -> SdeModel {
        let mut cfg = ModelConfig::new(kind, 2, 3);
        cfg.latent_dim = 4;
        cfg.hidden = 8;
        cfg.seed = 17;
        SdeModel::new(cfg).unwrap()
    }

    #[test]
    fn identity_initial_map() {
        let mut m = model(ModelKind::Lsde);
        let mut cfg = m.config.clone();
        cfg.latent_dim = 2;
        m = SdeModel::new(cfg).unwrap();
        m.set_initial_map(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]), Tensor::zeros(vec![2])).unwrap();
        let mut e = Eval;
        let bm = m.bind(&mut e);
        let z0 = bm.init_state(&mut e, &Tensor::matrix(1, 2, vec![1.0, 2.0])).unwrap();
        assert_eq!(z0.data(), &[1.0, 2.0]);
        m.set_initial_map(Tensor::zeros(vec![2, 2]), Tensor::vector(vec![0.5, -0.5])).unwrap();
        let bm = m.bind(&mut e);
        let z0 = bm.init_state(&mut e, &Tensor::matrix(1, 2, vec![7.0, -3.0])).unwrap();
        assert_eq!(z0.data(), &[0.5, -0.5]);
    }

    #[test]
    fn initial_map_is_lipschitz_in_operator_norm() {
        let m = model(ModelKind::Lnsde);
        let bound = m.h.layers[0].weight.spectral_norm(1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut e = Eval;
        let bm = m.bind(&mut e);
        for _ in 0..1000 {
            let x = rand_rows(&mut rng, 1, 2, 5.0);
            let y = rand_rows(&mut rng, 1, 2, 5.0);
            let hx = bm.init_state(&mut e, &x).unwrap();
            let hy = bm.init_state(&mut e, &y).unwrap();
            let dz = hx.data().iter().zip(hy.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let dx = x.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(dz <= bound * dx * (1.0 + 1e-9));
        }
    }

    #[test]
    fn zeroed_control_net_gives_zero_state() {
        let mut m = model(ModelKind::Lnsde);
        m.zeta.as_mut().unwrap().scale_params(0.0);
        let mut e = Eval;
        let bm = m.bind(&mut e);
        let z = Tensor::matrix(1, 4, vec![1.0, -2.0, 3.0, 4.0]);
        let x = Tensor::matrix(1, 3, vec![0.1, 5.0, -5.0]);
        assert!(bm.controlled_state(&mut e, 0.3, &z, Some(&x)).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn controlled_state_is_bounded_and_lipschitz_in_z() {
        let m = model(ModelKind::Lnsde);
        let zeta = m.zeta.clone().unwrap();
        let lip = zeta.lipschitz_upper_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut e = Eval;
        let bm = m.bind(&mut e);
        let z = rand_rows(&mut rng, 10_000, 4, 50.0);
        let x = rand_rows(&mut rng, 10_000, 3, 50.0);
        let zb = bm.controlled_state(&mut e, 0.7, &z, Some(&x)).unwrap();
        assert!(zb.max_abs() <= 1.0);
        for _ in 0..500 {
            let t = rng.gen_range(0.0..1.0);
            let z1 = rand_rows(&mut rng, 1, 4, 3.0);
            let z2 = rand_rows(&mut rng, 1, 4, 3.0);
            let xx = rand_rows(&mut rng, 1, 3, 3.0);
            let a = bm.controlled_state(&mut e, t, &z1, Some(&xx)).unwrap();
            let b = bm.controlled_state(&mut e, t, &z2, Some(&xx)).unwrap();
            let dy = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let dz = z1.data().iter().zip(z2.data()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            assert!(dy <= lip * dz + 1e-12);
        }
    }

    #[test]
    fn geometric_drift_vanishes_at_zero_and_rejects_negative_state() {
        let m = model(ModelKind::Gsde);
        let mut e = Eval;
        let bm = m.bind(&mut e);
        let x = Tensor::matrix(1, 3, vec![0.0, 1.0, 2.0]);
        let z = Tensor::zeros(vec![1, 4]);
        assert!(bm.drift(&mut e, 0.5, &z, Some(&x)).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(bm.diffusion(&mut e, 0.5, &z).unwrap().data().iter().all(|&v| v == 0.0));
        let neg = Tensor::matrix(1, 4, vec![0.1, -0.2, 0.0, 1.0]);
        assert!(matches!(bm.drift(&mut e, 0.5, &neg, Some(&x)), Err(Error::NegativeStateGsde { index: 1, .. })));
    }

    #[test]
    fn constant_langevin_drift() {
        let mut m = model(ModelKind::Lsde);
        let c = [0.3, -0.1, 0.0, 2.0];
        let last = m.gamma.layers.len() - 1;
        m.gamma.scale_params(0.0);
        m.gamma.final_tanh = false;
        m.gamma.layers[last].bias = Tensor::vector(c.to_vec());
        let mut e = Eval;
        let bm = m.bind(&mut e);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let z = rand_rows(&mut rng, 1, 4, 4.0);
            let x = rand_rows(&mut rng, 1, 3, 4.0);
            let d = bm.drift(&mut e, rng.gen_range(0.0..1.0), &z, Some(&x)).unwrap();
            assert_eq!(d.data(), &c);
        }
    }

    #[test]
    fn bounded_fields_with_final_tanh() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for kind in [ModelKind::Lnsde, ModelKind::Lsde] {
            let m = model(kind);
            let mut e = Eval;
            let bm = m.bind(&mut e);
            let z = rand_rows(&mut rng, 10_000, 4, 20.0);
            let x = rand_rows(&mut rng, 10_000, 3, 20.0);
            assert!(bm.drift(&mut e, 0.4, &z, Some(&x)).unwrap().max_abs() <= 1.0);
        }
        let m = model(ModelKind::Lsde);
        let mut e = Eval;
        let bm = m.bind(&mut e);
        assert!(bm.diffusion(&mut e, 0.4, &Tensor::zeros(vec![3, 4])).unwrap().max_abs() <= 1.0);
    }

    #[test]
    fn diffusion_shapes_and_special_cases() {
        let mut e = Eval;
        let z = Tensor::matrix(2, 4, vec![1.0, -2.0, 0.5, 3.0, 0.0, 0.1, -0.1, 9.0]);
        for kind in [ModelKind::NaiveSde, ModelKind::Lsde, ModelKind::Lnsde, ModelKind::Gsde, ModelKind::Ncde, ModelKind::Node] {
            let m = model(kind);
            let bm = m.bind(&mut e);
            let zz = z.map(f64::abs);
            let g = bm.diffusion(&mut e, 0.2, &zz).unwrap();
            assert_eq!(g.shape(), &[2, 4], "{kind:?}");
        }
        let node = model(ModelKind::Node);
        let bm = node.bind(&mut e);
        assert!(bm.diffusion(&mut e, 0.2, &z).unwrap().data().iter().all(|&v| v == 0.0));

        let lnsde = model(ModelKind::Lnsde);
        let bm = lnsde.bind(&mut e);
        assert!(bm.diffusion(&mut e, 0.2, &Tensor::zeros(vec![1, 4])).unwrap().data().iter().all(|&v| v == 0.0));

        let lsde = model(ModelKind::Lsde);
        let bm = lsde.bind(&mut e);
        let a = bm.diffusion(&mut e, 0.2, &z).unwrap();
        let b = bm.diffusion(&mut e, 0.2, &z.map(|v| v * 7.0 - 1.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn readout_identity_and_lipschitz() {
        let mut cfg = ModelConfig::new(ModelKind::Lnsde, 2, 3);
        cfg.latent_dim = 3;
        cfg.readout_hidden = None;
        let mut m = SdeModel::new(cfg).unwrap();
        m.readout.layers[0].weight = Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let mut e = Eval;
        let bm = m.bind(&mut e);
        let z = Tensor::matrix(1, 3, vec![0.2, -1.0, 5.0]);
        assert_eq!(bm.readout(&mut e, &z, Mode::Eval).unwrap(), z);

        let m = model(ModelKind::Lnsde);
        let lf = m.readout.lipschitz_upper_bound();
        let bm = m.bind(&mut e);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let a = rand_rows(&mut rng, 1, 4, 3.0);
            let b = rand_rows(&mut rng, 1, 4, 3.0);
            let fa = bm.readout(&mut e, &a, Mode::Eval).unwrap();
            let fb = bm.readout(&mut e, &b, Mode::Eval).unwrap();
            let dy = fa.data().iter().zip(fb.data()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let dx = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            assert!(dy <= lf * dx + 1e-12);
            assert_eq!(fa, bm.readout(&mut e, &a, Mode::Eval).unwrap());
        }
    }

    #[test]
    fn geometric_kind_rejects_relu() {
        let mut cfg = ModelConfig::new(ModelKind::Gsde, 2, 2);
        cfg.activation = Some(Activation::Relu);
        assert!(SdeModel::new(cfg).is_err());
    }

    #[test]
    fn tape_and_eager_agree_and_vars_align_with_params() {
        let m = model(ModelKind::Gsde);
        let mut t = Tape::new();
        let bt = m.bind(&mut t);
        assert_eq!(bt.vars().len(), m.params().len());
        for (v, p) in bt.vars().iter().zip(m.params()) {
            assert_eq!(t.value(v), p);
        }
        let mut e = Eval;
        let be = m.bind(&mut e);
        let z = Tensor::matrix(1, 4, vec![0.1, 0.2, 0.3, 0.4]);
        let x = Tensor::matrix(1, 3, vec![0.0, 1.0, -1.0]);
        let zt = t.constant(z.clone());
        let xt = t.constant(x.clone());
        let dt = bt.drift(&mut t, 0.3, &zt, Some(&xt)).unwrap();
        let de = be.drift(&mut e, 0.3, &z, Some(&x)).unwrap();
        assert_eq!(t.value(&dt), &de);
    }
}
