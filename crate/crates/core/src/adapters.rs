//! Parameter-efficient adapters for a frozen `d₁ × d₂` weight.
//!
//! Every adapter produces an additive update `ΔW` and acts on row vectors as
//! `y = x · (W + ΔW)`. Four kinds share the [`Adapter`] interface:
//!
//! * `sdctft`: `n` DCT coefficients chosen band-by-band from the frozen
//!   weight's spectrum ([`build_selection_plan`]), `ΔW = α · iDCT(ΔW_F)`.
//! * `rdctft`: the same reconstruction with uniformly random positions.
//! * `fourierft`: `n` real coefficients at random DFT positions,
//!   `ΔW = α · Re(iDFT(ΔW_F))`.
//! * `lora`: `ΔW = α · A·B` with `A: d₁×r`, `B: r×d₂`.
//!
//! The trainable state of a spectral adapter is exactly its `n` coefficients;
//! positions outside the plan cannot change.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::selection::{build_random_plan, build_selection_plan, SelectionPlan};
use crate::spectral::{check_sparse_entries, Basis, Dct2d, Dft2d};

/// ChaCha stream used for coefficient / factor initialization. Plans draw
/// from stream 0 of the same seed.
const INIT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    Sdctft,
    Rdctft,
    Fourierft,
    Lora,
}

impl AdapterKind {
    pub const ALL: [AdapterKind; 4] = [
        AdapterKind::Sdctft,
        AdapterKind::Rdctft,
        AdapterKind::Fourierft,
        AdapterKind::Lora,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdapterKind::Sdctft => "sdctft",
            AdapterKind::Rdctft => "rdctft",
            AdapterKind::Fourierft => "fourierft",
            AdapterKind::Lora => "lora",
        }
    }

    pub fn is_spectral(self) -> bool {
        !matches!(self, AdapterKind::Lora)
    }
}

impl std::fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AdapterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AdapterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown adapter kind {s:?}")))
    }
}

/// Adapter hyperparameters. Only the fields relevant to `kind` are set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub kind: AdapterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub seed: u64,
}

impl AdapterConfig {
    pub fn sdctft(n: usize, delta: f64, alpha: f64, seed: u64) -> Self {
        Self {
            kind: AdapterKind::Sdctft,
            n: Some(n),
            r: None,
            alpha,
            delta: Some(delta),
            seed,
        }
    }

    pub fn rdctft(n: usize, alpha: f64, seed: u64) -> Self {
        Self {
            kind: AdapterKind::Rdctft,
            n: Some(n),
            r: None,
            alpha,
            delta: None,
            seed,
        }
    }

    pub fn fourierft(n: usize, alpha: f64, seed: u64) -> Self {
        Self {
            kind: AdapterKind::Fourierft,
            ..Self::rdctft(n, alpha, seed)
        }
    }

    pub fn lora(r: usize, alpha: f64, seed: u64) -> Self {
        Self {
            kind: AdapterKind::Lora,
            n: None,
            r: Some(r),
            alpha,
            delta: None,
            seed,
        }
    }

    /// Builds the config for `kind` from a single budget value (`n` for the
    /// spectral kinds, `r` for LoRA).
    pub fn with_budget(kind: AdapterKind, budget: usize, delta: Option<f64>, alpha: f64, seed: u64) -> Result<Self> {
        let cfg = match kind {
            AdapterKind::Sdctft => Self::sdctft(budget, delta.unwrap_or(crate::selection::DEFAULT_DELTA), alpha, seed),
            AdapterKind::Rdctft => Self::rdctft(budget, alpha, seed),
            AdapterKind::Fourierft => Self::fourierft(budget, alpha, seed),
            AdapterKind::Lora => Self::lora(budget, alpha, seed),
        };
        if delta.is_some() && kind != AdapterKind::Sdctft {
            return Err(Error::InvalidConfig(format!("delta only applies to sdctft, not {kind}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The budget value (`n` or `r`).
    pub fn budget(&self) -> usize {
        self.n.or(self.r).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be finite and > 0, got {}", self.alpha));
        }
        match self.kind {
            AdapterKind::Lora => {
                if self.n.is_some() || self.delta.is_some() {
                    return bad("lora takes a rank r, not n or delta".into());
                }
                if self.r.unwrap_or(0) == 0 {
                    return bad("lora rank r must be >= 1".into());
                }
            }
            kind => {
                if self.r.is_some() {
                    return bad(format!("{kind} takes a coefficient count n, not a rank"));
                }
                if self.n.unwrap_or(0) == 0 {
                    return bad(format!("{kind} coefficient count n must be >= 1"));
                }
                match (kind, self.delta) {
                    (AdapterKind::Sdctft, Some(d)) if (0.0..=1.0).contains(&d) => {}
                    (AdapterKind::Sdctft, d) => return bad(format!("sdctft needs delta in [0, 1], got {d:?}")),
                    (_, Some(_)) => return bad(format!("delta only applies to sdctft, not {kind}")),
                    (_, None) => {}
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum SpectralBasis<T> {
    Dct(Dct2d<T>),
    Dft(Dft2d<T>),
}

/// Sparse spectral update bound to a selection plan.
#[derive(Debug, Clone)]
pub struct SpectralAdapter<T> {
    config: AdapterConfig,
    plan: SelectionPlan,
    indices: Vec<(usize, usize)>,
    coeffs: Vec<T>,
    alpha: T,
    basis: SpectralBasis<T>,
}

impl<T: Scalar> SpectralAdapter<T> {
    fn new(config: AdapterConfig, plan: SelectionPlan, coeffs: Vec<T>) -> Result<Self> {
        let indices = plan.indices();
        if coeffs.len() != indices.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} coefficients", indices.len()),
                actual: format!("{}", coeffs.len()),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("non-finite spectral coefficient".into()));
        }
        check_sparse_entries(indices.iter().copied(), plan.rows, plan.cols)?;
        let basis = match config.kind {
            AdapterKind::Fourierft => SpectralBasis::Dft(Dft2d::new(plan.rows, plan.cols)?),
            _ => SpectralBasis::Dct(Dct2d::new(plan.rows, plan.cols)?),
        };
        Ok(Self {
            alpha: T::of(config.alpha),
            config,
            plan,
            indices,
            coeffs,
            basis,
        })
    }

    pub fn plan(&self) -> &SelectionPlan {
        &self.plan
    }

    pub fn indices(&self) -> &[(usize, usize)] {
        &self.indices
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn basis(&self) -> Basis {
        match self.basis {
            SpectralBasis::Dct(_) => Basis::Dct,
            SpectralBasis::Dft(_) => Basis::DftRealPart,
        }
    }

    fn entries(&self) -> Vec<(usize, usize, T)> {
        self.indices.iter().zip(&self.coeffs).map(|(&(u, v), &c)| (u, v, c)).collect()
    }

    fn delta_weight(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.plan.rows, self.plan.cols);
        let entries = self.entries();
        match &self.basis {
            SpectralBasis::Dct(t) => t.accumulate_sparse(&entries, self.alpha, &mut out),
            SpectralBasis::Dft(t) => t.accumulate_real_sparse(&entries, self.alpha, &mut out),
        }
        out
    }

    fn grad(&self, upstream: &Matrix<T>) -> Result<Vec<T>> {
        let raw = match &self.basis {
            SpectralBasis::Dct(t) => t.forward_at(upstream, &self.indices)?,
            SpectralBasis::Dft(t) => t.real_adjoint_at(upstream, &self.indices)?,
        };
        Ok(raw.into_iter().map(|g| g * self.alpha).collect())
    }

    /// Sets the coefficients to the least-squares fit of `α·ΔW ≈ target`.
    /// The selected DCT basis images are orthonormal, so the fit is the
    /// target's spectrum at the plan indices divided by `α`.
    pub fn fit_least_squares(&mut self, target: &Matrix<T>) -> Result<()> {
        let SpectralBasis::Dct(t) = &self.basis else {
            return Err(Error::WrongBasis {
                expected: Basis::Dct.name(),
                actual: Basis::DftRealPart.name(),
            });
        };
        let fitted = t.forward_at(target, &self.indices)?;
        for (c, f) in self.coeffs.iter_mut().zip(fitted) {
            *c = f / self.alpha;
        }
        Ok(())
    }
}

/// Low-rank update `α · A·B`.
#[derive(Debug, Clone)]
pub struct LoraAdapter<T> {
    config: AdapterConfig,
    a: Matrix<T>,
    b: Matrix<T>,
    alpha: T,
}

impl<T: Scalar> LoraAdapter<T> {
    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn b(&self) -> &Matrix<T> {
        &self.b
    }

    pub fn a_mut(&mut self) -> &mut Matrix<T> {
        &mut self.a
    }

    pub fn b_mut(&mut self) -> &mut Matrix<T> {
        &mut self.b
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }
}

/// Gradient of a scalar loss with respect to an adapter's trainable values.
#[derive(Debug, Clone, PartialEq)]
pub enum AdapterGrad<T> {
    Spectral(Vec<T>),
    Lora { a: Matrix<T>, b: Matrix<T> },
}

impl<T: Scalar> AdapterGrad<T> {
    /// Parameter groups in the same order as [`Adapter::param_groups_mut`].
    pub fn groups(&self) -> Vec<&[T]> {
        match self {
            AdapterGrad::Spectral(g) => vec![g],
            AdapterGrad::Lora { a, b } => vec![a.as_slice(), b.as_slice()],
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        self.groups().concat()
    }
}

/// Any of the supported adapters.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Adapter<T> {
    Spectral(SpectralAdapter<T>),
    Lora(LoraAdapter<T>),
}

/// Initializes an sDCTFT adapter: plan from the spectrum of `w`,
/// coefficients drawn from `N(0, 2/n)`.
pub fn init_sdctft<T: Scalar>(w: &Matrix<T>, cfg: &AdapterConfig) -> Result<Adapter<T>> {
    expect_kind(cfg, AdapterKind::Sdctft)?;
    let spectrum = Dct2d::new(w.rows(), w.cols())?.forward(w)?;
    let n = cfg.budget();
    let plan = build_selection_plan(&spectrum, n, cfg.delta.unwrap_or_default(), cfg.seed)?;
    spectral_with_kaiming(cfg, plan)
}

/// Same reconstruction as sDCTFT over a uniformly random plan.
pub fn init_rdctft<T: Scalar>(w: &Matrix<T>, cfg: &AdapterConfig) -> Result<Adapter<T>> {
    expect_kind(cfg, AdapterKind::Rdctft)?;
    w.check_finite()?;
    let plan = build_random_plan(w.rows(), w.cols(), cfg.budget(), cfg.seed)?;
    spectral_with_kaiming(cfg, plan)
}

/// Real coefficients at uniformly random DFT positions.
pub fn init_fourierft<T: Scalar>(w: &Matrix<T>, cfg: &AdapterConfig) -> Result<Adapter<T>> {
    expect_kind(cfg, AdapterKind::Fourierft)?;
    w.check_finite()?;
    let plan = build_random_plan(w.rows(), w.cols(), cfg.budget(), cfg.seed)?;
    spectral_with_kaiming(cfg, plan)
}

/// `A ~ N(0, 2/d₁)`, `B = 0`, so the initial update is zero.
pub fn init_lora<T: Scalar>(w: &Matrix<T>, cfg: &AdapterConfig) -> Result<Adapter<T>> {
    expect_kind(cfg, AdapterKind::Lora)?;
    w.check_finite()?;
    let (d1, d2) = w.shape();
    let r = cfg.budget();
    let mut rng = init_rng(cfg.seed);
    let a = Matrix::random_normal(d1, r, (2.0 / d1 as f64).sqrt(), &mut rng);
    Ok(Adapter::Lora(LoraAdapter {
        config: cfg.clone(),
        a,
        b: Matrix::zeros(r, d2),
        alpha: T::of(cfg.alpha),
    }))
}

fn expect_kind(cfg: &AdapterConfig, kind: AdapterKind) -> Result<()> {
    cfg.validate()?;
    if cfg.kind != kind {
        return Err(Error::InvalidConfig(format!("expected a {kind} config, got {}", cfg.kind)));
    }
    Ok(())
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    rng
}

fn spectral_with_kaiming<T: Scalar>(cfg: &AdapterConfig, plan: SelectionPlan) -> Result<Adapter<T>> {
    let n = plan.n_total;
    let normal = Normal::new(0.0, (2.0 / n as f64).sqrt()).expect("finite std");
    let mut rng = init_rng(cfg.seed);
    let coeffs = (0..n).map(|_| T::of(normal.sample(&mut rng))).collect();
    Ok(Adapter::Spectral(SpectralAdapter::new(cfg.clone(), plan, coeffs)?))
}

impl<T: Scalar> Adapter<T> {
    /// Initializes the adapter named by `cfg.kind` for the frozen weight `w`.
    pub fn init(w: &Matrix<T>, cfg: &AdapterConfig) -> Result<Self> {
        match cfg.kind {
            AdapterKind::Sdctft => init_sdctft(w, cfg),
            AdapterKind::Rdctft => init_rdctft(w, cfg),
            AdapterKind::Fourierft => init_fourierft(w, cfg),
            AdapterKind::Lora => init_lora(w, cfg),
        }
    }

    pub fn config(&self) -> &AdapterConfig {
        match self {
            Adapter::Spectral(s) => &s.config,
            Adapter::Lora(l) => &l.config,
        }
    }

    pub fn kind(&self) -> AdapterKind {
        self.config().kind
    }

    /// Shape of the adapted weight.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Adapter::Spectral(s) => (s.plan.rows, s.plan.cols),
            Adapter::Lora(l) => (l.a.rows(), l.b.cols()),
        }
    }

    /// Trainable values in this adapter: `n` or `r·(d₁+d₂)`.
    pub fn param_count(&self) -> usize {
        match self {
            Adapter::Spectral(s) => s.coeffs.len(),
            Adapter::Lora(l) => l.a.as_slice().len() + l.b.as_slice().len(),
        }
    }

    pub fn as_spectral(&self) -> Option<&SpectralAdapter<T>> {
        match self {
            Adapter::Spectral(s) => Some(s),
            Adapter::Lora(_) => None,
        }
    }

    pub fn as_spectral_mut(&mut self) -> Option<&mut SpectralAdapter<T>> {
        match self {
            Adapter::Spectral(s) => Some(s),
            Adapter::Lora(_) => None,
        }
    }

    pub fn as_lora_mut(&mut self) -> Option<&mut LoraAdapter<T>> {
        match self {
            Adapter::Lora(l) => Some(l),
            Adapter::Spectral(_) => None,
        }
    }

    /// The reconstructed update `ΔW`.
    pub fn delta_weight(&self) -> Matrix<T> {
        match self {
            Adapter::Spectral(s) => s.delta_weight(),
            Adapter::Lora(l) => l
                .a
                .matmul(&l.b)
                .expect("lora factors have matching inner dimension")
                .scale(l.alpha),
        }
    }

    /// `W + ΔW`.
    pub fn merged_weight(&self, w: &Matrix<T>) -> Result<Matrix<T>> {
        let (rows, cols) = self.shape();
        w.ensure_shape(rows, cols)?;
        w.add(&self.delta_weight())
    }

    /// `x · (W + ΔW)` for a row vector `x` of length `d₁`.
    pub fn forward(&self, w: &Matrix<T>, x: &[T]) -> Result<Vec<T>> {
        self.merged_weight(w)?.vecmul(x)
    }

    /// Applies [`Adapter::forward`] to every row of `batch`.
    pub fn forward_batch(&self, w: &Matrix<T>, batch: &Matrix<T>) -> Result<Matrix<T>> {
        batch.matmul(&self.merged_weight(w)?)
    }

    /// Maps `∂L/∂(W+ΔW)` to the gradient over the trainable values.
    pub fn grad(&self, upstream: &Matrix<T>) -> Result<AdapterGrad<T>> {
        let (rows, cols) = self.shape();
        upstream.ensure_shape(rows, cols)?;
        match self {
            Adapter::Spectral(s) => Ok(AdapterGrad::Spectral(s.grad(upstream)?)),
            Adapter::Lora(l) => Ok(AdapterGrad::Lora {
                a: upstream.matmul_t(&l.b)?.scale(l.alpha),
                b: l.a.t_matmul(upstream)?.scale(l.alpha),
            }),
        }
    }

    /// Mutable views of the trainable values, grouped like [`AdapterGrad::groups`].
    pub fn param_groups_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Adapter::Spectral(s) => vec![&mut s.coeffs],
            Adapter::Lora(l) => vec![l.a.as_mut_slice(), l.b.as_mut_slice()],
        }
    }

    pub fn params(&self) -> Vec<T> {
        match self {
            Adapter::Spectral(s) => s.coeffs.clone(),
            Adapter::Lora(l) => [l.a.as_slice(), l.b.as_slice()].concat(),
        }
    }

    /// Overwrites the trainable values from a flat slice in [`Adapter::params`] order.
    pub fn set_params(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.param_count()),
                actual: format!("{}", values.len()),
            });
        }
        let mut rest = values;
        for group in self.param_groups_mut() {
            let (head, tail) = rest.split_at(group.len());
            group.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Sets every trainable value to zero, making `ΔW = 0`.
    pub fn zero(&mut self) {
        for group in self.param_groups_mut() {
            group.fill(T::zero());
        }
    }

    pub fn to_checkpoint(&self) -> AdapterCheckpoint<T> {
        match self {
            Adapter::Spectral(s) => AdapterCheckpoint {
                kind: s.config.kind,
                config: s.config.clone(),
                plan: Some(s.plan.clone()),
                coeffs: Some(s.coeffs.clone()),
                a: None,
                b: None,
            },
            Adapter::Lora(l) => AdapterCheckpoint {
                kind: l.config.kind,
                config: l.config.clone(),
                plan: None,
                coeffs: None,
                a: Some(l.a.clone()),
                b: Some(l.b.clone()),
            },
        }
    }

    pub fn from_checkpoint(ckpt: AdapterCheckpoint<T>) -> Result<Self> {
        ckpt.config.validate()?;
        if ckpt.kind != ckpt.config.kind {
            return Err(Error::InvalidConfig("checkpoint kind disagrees with its config".into()));
        }
        match (ckpt.kind, ckpt.plan, ckpt.coeffs, ckpt.a, ckpt.b) {
            (AdapterKind::Lora, None, None, Some(a), Some(b)) => {
                if a.cols() != ckpt.config.budget() || b.rows() != a.cols() {
                    return Err(Error::InvalidConfig("lora factor shapes disagree with rank".into()));
                }
                Ok(Adapter::Lora(LoraAdapter {
                    alpha: T::of(ckpt.config.alpha),
                    config: ckpt.config,
                    a,
                    b,
                }))
            }
            (kind, Some(plan), Some(coeffs), None, None) if kind.is_spectral() => {
                plan.validate()?;
                if plan.n_total != ckpt.config.budget() {
                    return Err(Error::InvalidConfig("plan size disagrees with n".into()));
                }
                Ok(Adapter::Spectral(SpectralAdapter::new(ckpt.config, plan, coeffs)?))
            }
            _ => Err(Error::InvalidConfig("checkpoint fields do not match its kind".into())),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_checkpoint())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(text)?)
    }
}

/// Serialized adapter state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct AdapterCheckpoint<T> {
    pub kind: AdapterKind,
    pub config: AdapterConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<SelectionPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Matrix<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Matrix<T>>,
}
