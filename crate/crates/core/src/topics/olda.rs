use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::special::{dirichlet_expectation, ln_gamma, trigamma};
use super::{TopicError, TopicMembership};
use crate::textprep::{CleanDoc, Vocabulary};

/// Sparse bag of words: `(term index, count)`.
pub type Bow = Vec<(usize, u32)>;

/// Dirichlet prior setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    /// Start at 1/k and learn from the data with a Newton step per batch.
    Auto,
    Symmetric(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OldaConfig {
    pub k: usize,
    pub alpha: Prior,
    pub eta: Prior,
    /// Learning-rate decay.
    pub kappa: f64,
    /// Learning-rate delay.
    pub tau0: f64,
    /// Mean absolute change in γ that ends a document's E-step.
    pub e_tol: f64,
    pub e_max_iter: usize,
    pub seed: u64,
    /// Corpus size used to scale batch statistics; defaults to the number
    /// of documents seen so far.
    pub corpus_size: Option<usize>,
}

impl Default for OldaConfig {
    fn default() -> Self {
        Self {
            k: 6,
            alpha: Prior::Auto,
            eta: Prior::Auto,
            kappa: 0.7,
            tau0: 1024.0,
            e_tol: 1e-4,
            e_max_iter: 100,
            seed: 0,
            corpus_size: None,
        }
    }
}

/// Online LDA state. `lambda` holds the variational topic-word parameters,
/// row-major `k × |V|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicModel {
    pub version: u32,
    pub config: OldaConfig,
    pub vocab: Vocabulary,
    pub k: usize,
    pub alpha: Vec<f64>,
    pub eta: Vec<f64>,
    lambda: Vec<f64>,
    pub update_count: u64,
    pub docs_seen: u64,
    #[serde(skip)]
    exp_elog_beta: OnceLock<Vec<f64>>,
}

impl PartialEq for TopicModel {
    fn eq(&self, o: &Self) -> bool {
        self.config == o.config
            && self.vocab == o.vocab
            && self.alpha == o.alpha
            && self.eta == o.eta
            && self.lambda == o.lambda
            && self.update_count == o.update_count
            && self.docs_seen == o.docs_seen
    }
}

/// Result of one document's E-step.
struct DocPosterior {
    gamma: Vec<f64>,
    /// `k × ids.len()` contribution to the sufficient statistics, before the
    /// final multiplication by exp(E[log β]).
    sstats: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitStats {
    pub docs: usize,
    pub skipped_empty: usize,
    pub rho: f64,
    pub mean_e_iterations: f64,
}

fn prior_value(p: Prior, k: usize) -> f64 {
    match p {
        Prior::Auto => 1.0 / k as f64,
        Prior::Symmetric(v) => v,
    }
}

impl TopicModel {
    pub const VERSION: u32 = 1;

    /// Fresh model with λ drawn from Gamma(100, 1/100).
    pub fn new(vocab: Vocabulary, config: OldaConfig) -> Result<Self, TopicError> {
        Self::validate(&config)?;
        if vocab.is_empty() {
            return Err(TopicError::EmptyVocabulary);
        }
        let k = config.k;
        let v = vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let g = Gamma::new(100.0, 0.01).expect("valid gamma");
        let lambda = (0..k * v).map(|_| g.sample(&mut rng)).collect();
        Ok(Self {
            version: Self::VERSION,
            alpha: vec![prior_value(config.alpha, k); k],
            eta: vec![prior_value(config.eta, k); v],
            k,
            config,
            vocab,
            lambda,
            update_count: 0,
            docs_seen: 0,
            exp_elog_beta: OnceLock::new(),
        })
    }

    /// Model whose every topic is uniform over the vocabulary.
    pub fn uniform(vocab: Vocabulary, config: OldaConfig) -> Result<Self, TopicError> {
        let mut m = Self::new(vocab, config)?;
        m.lambda.iter_mut().for_each(|x| *x = 1.0);
        Ok(m)
    }

    /// Model with given topic-word parameters (rows need not be normalized).
    pub fn from_lambda(vocab: Vocabulary, config: OldaConfig, lambda: Vec<f64>) -> Result<Self, TopicError> {
        let mut m = Self::new(vocab, config)?;
        if lambda.len() != m.lambda.len() || lambda.iter().any(|x| x.is_nan() || *x <= 0.0) {
            return Err(TopicError::VocabularyMismatch {
                expected: m.lambda.len(),
                got: lambda.len(),
            });
        }
        m.lambda = lambda;
        Ok(m)
    }

    fn validate(c: &OldaConfig) -> Result<(), TopicError> {
        let bad = |what: &str| Err(TopicError::BadConfig(what.to_string()));
        if c.k == 0 {
            return bad("k must be at least 1");
        }
        for p in [c.alpha, c.eta] {
            if let Prior::Symmetric(v) = p {
                if v.is_nan() || v <= 0.0 {
                    return bad("priors must be positive");
                }
            }
        }
        if !(c.kappa > 0.5 && c.kappa <= 1.0) {
            return bad("kappa must be in (0.5, 1]");
        }
        if c.tau0.is_nan() || c.tau0 < 0.0 || c.e_tol.is_nan() || c.e_tol <= 0.0 || c.e_max_iter == 0 {
            return bad("tau0 >= 0, e_tol > 0 and e_max_iter >= 1 required");
        }
        Ok(())
    }

    pub fn n_terms(&self) -> usize {
        self.vocab.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Row-stochastic topic-word matrix, row-major `k × |V|`.
    pub fn topic_word(&self) -> Vec<f64> {
        let v = self.n_terms();
        let mut out = self.lambda.clone();
        for row in out.chunks_mut(v) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        out
    }

    /// The `n` most probable words of `topic`, ties broken by term order.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<(String, f64)> {
        let v = self.n_terms();
        let row = &self.lambda[topic * v..(topic + 1) * v];
        let s: f64 = row.iter().sum();
        let mut idx: Vec<usize> = (0..v).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx.into_iter()
            .take(n)
            .map(|i| (self.vocab.term(i).to_string(), row[i] / s))
            .collect()
    }

    /// Per topic, `n` rows of `word<TAB>probability`, each block headed by
    /// `# topic <j>`.
    pub fn report(&self, n: usize) -> String {
        let mut out = String::new();
        for t in 0..self.k {
            out.push_str(&format!("# topic {t}\n"));
            for (w, p) in self.top_words(t, n) {
                out.push_str(&format!("{w}\t{p:.6}\n"));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("model serializes");
        v["topic_word"] = serde_json::to_value(self.topic_word()).expect("floats serialize");
        v.to_string()
    }

    pub fn from_json(s: &str) -> Result<Self, TopicError> {
        let m: TopicModel = serde_json::from_str(s).map_err(|e| TopicError::Snapshot(e.to_string()))?;
        if m.version != Self::VERSION {
            return Err(TopicError::Snapshot(format!("unsupported version {}", m.version)));
        }
        if m.lambda.len() != m.k * m.vocab.len() || m.alpha.len() != m.k || m.eta.len() != m.vocab.len() {
            return Err(TopicError::Snapshot("inconsistent dimensions".into()));
        }
        Ok(m)
    }

    fn elog_beta_exp(&self) -> &[f64] {
        self.exp_elog_beta.get_or_init(|| {
            let v = self.n_terms();
            self.lambda
                .chunks(v)
                .flat_map(|row| dirichlet_expectation(row).into_iter().map(f64::exp))
                .collect()
        })
    }

    pub fn bow(&self, doc: &CleanDoc) -> Bow {
        self.vocab.counts(doc)
    }

    fn check_bow(&self, bow: &Bow) -> Result<(), TopicError> {
        match bow.iter().find(|(i, _)| *i >= self.n_terms()) {
            Some(&(i, _)) => Err(TopicError::VocabularyMismatch {
                expected: self.n_terms(),
                got: i + 1,
            }),
            None => Ok(()),
        }
    }

    /// Coordinate ascent on one document's γ and φ with topics frozen.
    fn e_step(&self, bow: &Bow, exp_elog_beta: &[f64], want_sstats: bool) -> (DocPosterior, usize) {
        let k = self.k;
        let v = self.n_terms();
        let n = bow.len();
        let cts: Vec<f64> = bow.iter().map(|&(_, c)| c as f64).collect();
        let total: f64 = cts.iter().sum();
        // Deterministic start: the prior plus an even share of the words.
        let mut gamma: Vec<f64> = self.alpha.iter().map(|a| a + total / k as f64).collect();
        let mut et: Vec<f64> = dirichlet_expectation(&gamma).into_iter().map(f64::exp).collect();
        let beta_d = |t: usize, j: usize| exp_elog_beta[t * v + bow[j].0];
        let phinorm = |et: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|j| (0..k).map(|t| et[t] * beta_d(t, j)).sum::<f64>() + 1e-100)
                .collect()
        };
        let mut pn = phinorm(&et);
        let mut iters = 0;
        for _ in 0..self.config.e_max_iter {
            iters += 1;
            let last = gamma.clone();
            for t in 0..k {
                let s: f64 = (0..n).map(|j| cts[j] / pn[j] * beta_d(t, j)).sum();
                gamma[t] = self.alpha[t] + et[t] * s;
            }
            et = dirichlet_expectation(&gamma).into_iter().map(f64::exp).collect();
            pn = phinorm(&et);
            let change = gamma.iter().zip(&last).map(|(a, b)| (a - b).abs()).sum::<f64>() / k as f64;
            if change < self.config.e_tol {
                break;
            }
        }
        let sstats = if want_sstats {
            let mut s = vec![0.0; k * n];
            for t in 0..k {
                for j in 0..n {
                    s[t * n + j] = et[t] * cts[j] / pn[j];
                }
            }
            s
        } else {
            Vec::new()
        };
        (DocPosterior { gamma, sstats }, iters)
    }

    /// One online variational update on `batch`. Empty documents are
    /// skipped; the update counter advances once regardless.
    pub fn fit_online(&mut self, batch: &[CleanDoc]) -> Result<FitStats, TopicError> {
        let bows: Vec<Bow> = batch.iter().map(|d| self.bow(d)).collect();
        self.fit_bows(&bows)
    }

    pub fn fit_bows(&mut self, bows: &[Bow]) -> Result<FitStats, TopicError> {
        for b in bows {
            self.check_bow(b)?;
        }
        let live: Vec<&Bow> = bows.iter().filter(|b| !b.is_empty()).collect();
        let rho = (self.config.tau0 + self.update_count as f64).powf(-self.config.kappa);
        let skipped = bows.len() - live.len();
        if live.is_empty() {
            self.update_count += 1;
            return Ok(FitStats {
                docs: 0,
                skipped_empty: skipped,
                rho,
                mean_e_iterations: 0.0,
            });
        }
        let k = self.k;
        let v = self.n_terms();
        let eeb = self.elog_beta_exp().to_vec();
        let posts: Vec<(DocPosterior, usize)> =
            live.par_iter().map(|b| self.e_step(b, &eeb, true)).collect();

        // Summed in input order so results do not depend on thread timing.
        let mut sstats = vec![0.0; k * v];
        let mut iters = 0usize;
        for (b, (p, it)) in live.iter().zip(&posts) {
            iters += it;
            let n = b.len();
            for t in 0..k {
                for (j, &(w, _)) in b.iter().enumerate() {
                    sstats[t * v + w] += p.sstats[t * n + j];
                }
            }
        }
        for (s, e) in sstats.iter_mut().zip(&eeb) {
            *s *= e;
        }

        if self.config.alpha == Prior::Auto {
            let n = live.len() as f64;
            let mut logphat = vec![0.0; k];
            for (p, _) in &posts {
                for (acc, x) in logphat.iter_mut().zip(dirichlet_expectation(&p.gamma)) {
                    *acc += x / n;
                }
            }
            self.alpha = update_dir_prior(&self.alpha, n, &logphat, rho);
        }

        self.docs_seen += live.len() as u64;
        let d = self.config.corpus_size.map_or(self.docs_seen as f64, |c| c as f64);
        let scale = d / live.len() as f64;
        for t in 0..k {
            for w in 0..v {
                let i = t * v + w;
                self.lambda[i] = (1.0 - rho) * self.lambda[i] + rho * (self.eta[w] + scale * sstats[i]);
            }
        }

        if self.config.eta == Prior::Auto {
            let mut logphat = vec![0.0; v];
            for row in self.lambda.chunks(v) {
                for (acc, x) in logphat.iter_mut().zip(dirichlet_expectation(row)) {
                    *acc += x / k as f64;
                }
            }
            self.eta = update_dir_prior(&self.eta, k as f64, &logphat, rho);
        }

        self.update_count += 1;
        self.exp_elog_beta = OnceLock::new();
        Ok(FitStats {
            docs: live.len(),
            skipped_empty: skipped,
            rho,
            mean_e_iterations: iters as f64 / live.len() as f64,
        })
    }

    /// Several passes of mini-batch updates over a fixed corpus.
    pub fn fit_passes(&mut self, docs: &[CleanDoc], batch_size: usize, passes: usize) -> Result<(), TopicError> {
        let bows: Vec<Bow> = docs.iter().map(|d| self.bow(d)).collect();
        if self.config.corpus_size.is_none() {
            self.config.corpus_size = Some(bows.iter().filter(|b| !b.is_empty()).count().max(1));
        }
        for _ in 0..passes {
            for chunk in bows.chunks(batch_size.max(1)) {
                self.fit_bows(chunk)?;
            }
        }
        Ok(())
    }

    /// Normalized γ of `bow`; exactly uniform when the bow is empty.
    pub fn theta_bow(&self, bow: &Bow) -> Vec<f64> {
        if bow.is_empty() {
            return vec![1.0 / self.k as f64; self.k];
        }
        let (p, _) = self.e_step(bow, self.elog_beta_exp(), false);
        let s: f64 = p.gamma.iter().sum();
        p.gamma.iter().map(|g| g / s).collect()
    }

    /// Topic proportions of `doc`; members are topics with θ ≥ `eps_c`.
    pub fn infer(&self, doc: &CleanDoc, eps_c: f64) -> TopicMembership {
        let theta = self.theta_bow(&self.bow(doc));
        TopicMembership::new(&doc.doc_id, theta, eps_c)
    }

    pub fn infer_many(&self, docs: &[CleanDoc], eps_c: f64) -> Vec<TopicMembership> {
        self.elog_beta_exp();
        docs.par_iter().map(|d| self.infer(d, eps_c)).collect()
    }

    /// `exp(-Σ_d Σ_w n_dw log Σ_k θ_dk β_kw / N)` with θ inferred per
    /// document and β the normalized topics. Out-of-vocabulary tokens are
    /// ignored.
    pub fn perplexity(&self, docs: &[CleanDoc]) -> Result<f64, TopicError> {
        let bows: Vec<Bow> = docs.iter().map(|d| self.bow(d)).collect();
        let n: u64 = bows.iter().flat_map(|b| b.iter().map(|&(_, c)| c as u64)).sum();
        if n == 0 {
            return Err(TopicError::EmptyCorpus);
        }
        let beta = self.topic_word();
        let v = self.n_terms();
        self.elog_beta_exp();
        let ll: Vec<f64> = bows
            .par_iter()
            .map(|b| {
                if b.is_empty() {
                    return 0.0;
                }
                let theta = self.theta_bow(b);
                b.iter()
                    .map(|&(w, c)| {
                        let p: f64 = (0..self.k).map(|t| theta[t] * beta[t * v + w]).sum();
                        c as f64 * p.ln()
                    })
                    .sum()
            })
            .collect();
        Ok((-ll.iter().sum::<f64>() / n as f64).exp())
    }

    /// Evidence lower bound per word, in nats, computed as in common online
    /// LDA toolkits with the corpus scaled to `total_docs`.
    pub fn per_word_bound(&self, docs: &[CleanDoc], total_docs: Option<usize>) -> Result<f64, TopicError> {
        let bows: Vec<Bow> = docs.iter().map(|d| self.bow(d)).collect();
        let n: f64 = bows.iter().flat_map(|b| b.iter().map(|&(_, c)| c as f64)).sum();
        if n == 0.0 || docs.is_empty() {
            return Err(TopicError::EmptyCorpus);
        }
        let k = self.k;
        let v = self.n_terms();
        let elog_beta: Vec<f64> = self.lambda.chunks(v).flat_map(dirichlet_expectation).collect();
        let eeb = self.elog_beta_exp();
        let sum_alpha: f64 = self.alpha.iter().sum();
        let mut score = 0.0;
        for b in &bows {
            let gamma = if b.is_empty() {
                self.alpha.clone()
            } else {
                self.e_step(b, eeb, false).0.gamma
            };
            let elog_theta = dirichlet_expectation(&gamma);
            for &(w, c) in b {
                let terms: Vec<f64> = (0..k).map(|t| elog_theta[t] + elog_beta[t * v + w]).collect();
                let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                score += c as f64 * (m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln());
            }
            for t in 0..k {
                score += (self.alpha[t] - gamma[t]) * elog_theta[t] + ln_gamma(gamma[t]) - ln_gamma(self.alpha[t]);
            }
            score += ln_gamma(sum_alpha) - ln_gamma(gamma.iter().sum());
        }
        let ratio = total_docs.unwrap_or(docs.len()) as f64 / docs.len() as f64;
        score *= ratio;
        let sum_eta: f64 = self.eta.iter().sum();
        for t in 0..k {
            let row = &self.lambda[t * v..(t + 1) * v];
            for w in 0..v {
                score += (self.eta[w] - row[w]) * elog_beta[t * v + w] + ln_gamma(row[w]) - ln_gamma(self.eta[w]);
            }
            score += ln_gamma(sum_eta) - ln_gamma(row.iter().sum());
        }
        Ok(score / (ratio * n))
    }
}

/// One Newton step on a Dirichlet prior given the mean expected log
/// proportions `logphat` over `n` observations; kept only if it stays
/// positive.
pub fn update_dir_prior(prior: &[f64], n: f64, logphat: &[f64], rho: f64) -> Vec<f64> {
    let sum: f64 = prior.iter().sum();
    let psi_sum = statrs::function::gamma::digamma(sum);
    let gradf: Vec<f64> = prior
        .iter()
        .zip(logphat)
        .map(|(&p, &l)| n * (psi_sum - statrs::function::gamma::digamma(p) + l))
        .collect();
    let c = n * trigamma(sum);
    let q: Vec<f64> = prior.iter().map(|&p| -n * trigamma(p)).collect();
    let b = gradf.iter().zip(&q).map(|(g, q)| g / q).sum::<f64>() / (1.0 / c + q.iter().map(|q| 1.0 / q).sum::<f64>());
    let updated: Vec<f64> = prior
        .iter()
        .zip(gradf.iter().zip(&q))
        .map(|(&p, (g, q))| p + rho * (-(g - b) / q))
        .collect();
    if updated.iter().all(|x| *x > 0.0 && x.is_finite()) {
        updated
    } else {
        prior.to_vec()
    }
}
