use serde::{Deserialize, Serialize};

use super::losses::{
    bayes_inner_loss, bayes_query_loss, prototype, proto_inner_loss, proto_query_loss,
    squared_distance, support_predictive, supcon_loss,
};
use crate::bayescore::{AnomalyReference, NiwPrior};
use crate::diffnet::{inner_update, meta_gradient, EmbeddingNet, MetaGradient, MetaOrder, OuterFn, ParamFn, Scalar};
use crate::episodes::Episode;
use crate::error::{Error, Result};
use crate::eval::{kcenter_coreset, nn_score};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub tau: f64,
    pub inner_steps: usize,
    pub episodes_per_epoch: usize,
    pub val_episodes: usize,
    pub epochs: usize,
    pub second_order: bool,
    pub meta_batch: usize,
    pub optimizer: Optimizer,
    /// Unit-normalize embeddings inside the contrastive term.
    pub normalize_contrastive: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha: 5e-4,
            beta: 1e-4,
            gamma: 1.0,
            lambda: 0.1,
            tau: 0.07,
            inner_steps: 1,
            episodes_per_epoch: 50,
            val_episodes: 20,
            epochs: 50,
            second_order: true,
            meta_batch: 1,
            optimizer: Optimizer::Sgd,
            normalize_contrastive: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hp.alpha", self.alpha),
            ("hp.beta", self.beta),
            ("hp.gamma", self.gamma),
            ("hp.tau", self.tau),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("hp.lambda", "must be finite and >= 0"));
        }
        if self.inner_steps == 0 {
            return Err(Error::invalid("hp.inner_steps", "must be >= 1"));
        }
        if self.meta_batch == 0 {
            return Err(Error::invalid("hp.meta_batch", "must be >= 1"));
        }
        Ok(())
    }

    pub fn meta_order(&self) -> MetaOrder {
        if self.second_order {
            MetaOrder::Second
        } else {
            MetaOrder::First
        }
    }
}

/// Anything that turns parameters, a normal support set and test inputs into
/// anomaly scores (larger is more anomalous).
pub trait Scorer: Sync {
    fn name(&self) -> &'static str;
    fn scores(&self, params: &[f64], support: &[Vec<f64>], test_inputs: &[Vec<f64>]) -> Result<Vec<f64>>;
}

/// A meta-learnable method: an inner adaptation plus an outer episode loss.
pub trait MetaMethod: Scorer {
    fn net(&self) -> &EmbeddingNet;
    fn meta_gradient(&self, params: &[f64], episode: &Episode) -> Result<MetaGradient>;
    /// Episode loss without the gradient, for validation.
    fn episode_loss(&self, params: &[f64], episode: &Episode) -> Result<f64>;
}

/// The Bayesian method: NIW posterior of support embeddings, Student-t
/// predictive, likelihood-ratio query loss, optional contrastive term.
#[derive(Debug, Clone)]
pub struct BayesMethod {
    pub net: EmbeddingNet,
    pub prior: NiwPrior,
    pub reference: AnomalyReference,
    pub alpha: f64,
    pub inner_steps: usize,
    pub order: MetaOrder,
    /// Contrastive coefficient actually applied; 0 for the plain arms.
    pub lambda: f64,
    pub tau: f64,
    pub normalize_contrastive: bool,
}

impl BayesMethod {
    pub fn new(net: EmbeddingNet, prior: NiwPrior, reference: AnomalyReference, hp: &HyperParams, contrastive: bool) -> Result<Self> {
        if prior.dim() != net.output_dim {
            return Err(Error::DimensionMismatch {
                context: "prior dimension vs embedding dimension",
                expected: net.output_dim,
                got: prior.dim(),
            });
        }
        Ok(BayesMethod {
            net,
            prior,
            reference,
            alpha: hp.alpha,
            inner_steps: hp.inner_steps,
            order: hp.meta_order(),
            lambda: if contrastive { hp.lambda } else { 0.0 },
            tau: hp.tau,
            normalize_contrastive: hp.normalize_contrastive,
        })
    }

    fn inner<'a>(&'a self, support: &'a [Vec<f64>]) -> BayesInner<'a> {
        BayesInner {
            net: &self.net,
            prior: &self.prior,
            support,
        }
    }

    pub fn adapt(&self, params: &[f64], support: &[Vec<f64>]) -> Result<Vec<f64>> {
        inner_update(&self.inner(support), params, self.alpha, self.inner_steps)
    }

    /// Query loss plus `λ·supcon` evaluated at the adapted parameters.
    pub fn outer_loss<S: Scalar>(&self, adapted: &[S], episode: &Episode) -> Result<S> {
        let support = self.net.embed_all(adapted, &episode.support)?;
        let query = self.net.embed_all(adapted, &episode.query_inputs())?;
        let labels = episode.labels();
        let p0 = support_predictive(&self.prior, &support)?;
        let p1 = self.reference.to_student_t(self.net.output_dim)?;
        let q = bayes_query_loss(&p0, &p1, &query, &labels)?;
        if self.lambda == 0.0 {
            return Ok(q);
        }
        let c = supcon_loss(&query, &labels, self.tau, self.normalize_contrastive)?;
        Ok(q + c * self.lambda)
    }
}

/// Inner loss of the Bayesian method as a function of θ.
pub struct BayesInner<'a> {
    pub net: &'a EmbeddingNet,
    pub prior: &'a NiwPrior,
    pub support: &'a [Vec<f64>],
}

impl ParamFn for BayesInner<'_> {
    fn eval<S: Scalar>(&self, params: &[S]) -> Result<S> {
        let z = self.net.embed_all(params, self.support)?;
        bayes_inner_loss(self.prior, &z)
    }
}

struct BayesOuter<'a> {
    method: &'a BayesMethod,
    episode: &'a Episode,
}

impl OuterFn for BayesOuter<'_> {
    fn eval<S: Scalar>(&self, _base: &[S], adapted: &[S]) -> Result<S> {
        self.method.outer_loss(adapted, self.episode)
    }
}

impl Scorer for BayesMethod {
    fn name(&self) -> &'static str {
        "bayes"
    }

    /// `log p1(z*) − log p0(z* | S)` with everything under adapted parameters.
    fn scores(&self, params: &[f64], support: &[Vec<f64>], test_inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let adapted = self.adapt(params, support)?;
        let zs = self.net.embed_all(&adapted, support)?;
        let p0 = support_predictive(&self.prior, &zs)?;
        let p1 = self.reference.to_student_t::<f64>(self.net.output_dim)?;
        test_inputs
            .iter()
            .map(|x| {
                let z = self.net.embed(&adapted, x)?;
                Ok(p1.logpdf(&z)? - p0.logpdf(&z)?)
            })
            .collect()
    }
}

impl MetaMethod for BayesMethod {
    fn net(&self) -> &EmbeddingNet {
        &self.net
    }

    fn meta_gradient(&self, params: &[f64], episode: &Episode) -> Result<MetaGradient> {
        let outer = BayesOuter { method: self, episode };
        meta_gradient(&self.inner(&episode.support), &outer, params, self.alpha, self.inner_steps, self.order)
    }

    fn episode_loss(&self, params: &[f64], episode: &Episode) -> Result<f64> {
        let adapted = self.adapt(params, &episode.support)?;
        self.outer_loss(&adapted, episode)
    }
}

/// The prototype baseline: squared distance to the mean support embedding.
#[derive(Debug, Clone)]
pub struct ProtoMaml {
    pub net: EmbeddingNet,
    pub alpha: f64,
    pub inner_steps: usize,
    pub order: MetaOrder,
}

impl ProtoMaml {
    pub fn new(net: EmbeddingNet, hp: &HyperParams) -> Self {
        ProtoMaml {
            net,
            alpha: hp.alpha,
            inner_steps: hp.inner_steps,
            order: hp.meta_order(),
        }
    }

    fn inner<'a>(&'a self, support: &'a [Vec<f64>]) -> ProtoInner<'a> {
        ProtoInner {
            net: &self.net,
            support,
        }
    }

    pub fn adapt(&self, params: &[f64], support: &[Vec<f64>]) -> Result<Vec<f64>> {
        inner_update(&self.inner(support), params, self.alpha, self.inner_steps)
    }

    /// BCE query loss with the prototype from `base` and queries embedded
    /// with `adapted`.
    pub fn outer_loss<S: Scalar>(&self, base: &[S], adapted: &[S], episode: &Episode) -> Result<S> {
        let c = prototype(&self.net.embed_all(base, &episode.support)?);
        let query = self.net.embed_all(adapted, &episode.query_inputs())?;
        proto_query_loss(&c, &query, &episode.labels())
    }
}

pub struct ProtoInner<'a> {
    pub net: &'a EmbeddingNet,
    pub support: &'a [Vec<f64>],
}

impl ParamFn for ProtoInner<'_> {
    fn eval<S: Scalar>(&self, params: &[S]) -> Result<S> {
        proto_inner_loss(&self.net.embed_all(params, self.support)?)
    }
}

struct ProtoOuter<'a> {
    method: &'a ProtoMaml,
    episode: &'a Episode,
}

impl OuterFn for ProtoOuter<'_> {
    fn eval<S: Scalar>(&self, base: &[S], adapted: &[S]) -> Result<S> {
        self.method.outer_loss(base, adapted, self.episode)
    }
}

/// `‖z − c‖²` for each query embedding, `c` the prototype of `support`.
pub fn proto_scores(support: &[Vec<f64>], query: &[Vec<f64>]) -> Vec<f64> {
    let c = prototype(support);
    query.iter().map(|z| squared_distance(z, &c)).collect()
}

impl Scorer for ProtoMaml {
    fn name(&self) -> &'static str {
        "protomaml"
    }

    fn scores(&self, params: &[f64], support: &[Vec<f64>], test_inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let adapted = self.adapt(params, support)?;
        let zs = self.net.embed_all(params, support)?;
        let zq = self.net.embed_all(&adapted, test_inputs)?;
        Ok(proto_scores(&zs, &zq))
    }
}

impl MetaMethod for ProtoMaml {
    fn net(&self) -> &EmbeddingNet {
        &self.net
    }

    fn meta_gradient(&self, params: &[f64], episode: &Episode) -> Result<MetaGradient> {
        let outer = ProtoOuter { method: self, episode };
        meta_gradient(&self.inner(&episode.support), &outer, params, self.alpha, self.inner_steps, self.order)
    }

    fn episode_loss(&self, params: &[f64], episode: &Episode) -> Result<f64> {
        let adapted = self.adapt(params, &episode.support)?;
        self.outer_loss(params, &adapted, episode)
    }
}

/// Nearest-neighbour scoring against a k-center coreset of the support
/// embeddings. No training.
#[derive(Debug, Clone)]
pub struct CoresetNn {
    pub net: EmbeddingNet,
    pub fraction: f64,
}

impl Scorer for CoresetNn {
    fn name(&self) -> &'static str {
        "coreset_nn"
    }

    fn scores(&self, params: &[f64], support: &[Vec<f64>], test_inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let memory: Vec<Vec<f64>> = self.net.embed_all(params, support)?;
        let picked = kcenter_coreset(&memory, self.fraction, 0)?;
        let coreset: Vec<Vec<f64>> = picked.into_iter().map(|i| memory[i].clone()).collect();
        test_inputs
            .iter()
            .map(|x| nn_score(&coreset, &self.net.embed(params, x)?))
            .collect()
    }
}
