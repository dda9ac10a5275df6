//! Logits-space primitives: embedding norms, norm adjustment, temperature
//! softmax, top-k/top-p candidate sets, family masking and sampling.
//!
//! All math is `f64`. Ties are broken by lower token id everywhere.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::vocab::{FamilySet, LanguageFamily, TokenId, VocabClassification};
use crate::{Error, Result};

/// L2 norms of the output-embedding columns, one per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNorms(Vec<f64>);

impl EmbeddingNorms {
    pub fn new(norms: Vec<f64>) -> Result<Self> {
        if let Some(i) = norms.iter().position(|n| !(n.is_finite() && *n > 0.0)) {
            return Err(Error::ZeroNorm(i));
        }
        Ok(Self(norms))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Norm of each column of the output projection.
pub fn embedding_norms<C: AsRef<[f64]>>(columns: &[C]) -> Result<EmbeddingNorms> {
    let norms = columns
        .iter()
        .map(|c| c.as_ref().iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    EmbeddingNorms::new(norms)
}

/// Divides every logit by its token's embedding norm, leaving
/// `|h| * cos(h, e_i)`.
pub fn norm_adjust(logits: &[f64], norms: &EmbeddingNorms) -> Result<Vec<f64>> {
    if logits.len() != norms.len() {
        return Err(Error::LengthMismatch {
            what: "logits",
            expected: norms.len(),
            got: logits.len(),
        });
    }
    Ok(logits
        .iter()
        .zip(norms.as_slice())
        .map(|(l, n)| l / n)
        .collect())
}

/// Numerically stable softmax of `logits / temperature`; `-inf` maps to 0.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits
        .iter()
        .copied()
        .filter(|l| l.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .map(|&l| {
            if l.is_finite() {
                ((l - max) / temperature).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub top_k: usize,
    pub top_p: f64,
    pub temperature: f64,
}

impl SamplingParams {
    pub fn new(top_k: usize, top_p: f64, temperature: f64) -> Result<Self> {
        let p = Self {
            top_k,
            top_p,
            temperature,
        };
        p.validate()?;
        Ok(p)
    }

    /// Argmax decoding expressed as a candidate-set rule.
    pub const fn greedy() -> Self {
        Self {
            top_k: 1,
            top_p: 1.0,
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::config("top_k must be positive"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            top_k: 20,
            top_p: 0.95,
            temperature: 1.0,
        }
    }
}

/// Tokens that may be sampled at one step, most probable first, with
/// renormalized probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub ids: Vec<TokenId>,
    pub probs: Vec<f64>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn top(&self) -> Option<TokenId> {
        self.ids.first().copied()
    }

    pub fn families(&self, classes: &VocabClassification) -> FamilySet {
        classes.families_of(&self.ids)
    }
}

fn by_prob_desc(probs: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b))
}

/// The `k` most probable ids with nonzero probability, in descending order.
pub(crate) fn top_k_indices(probs: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    let cmp = by_prob_desc(probs);
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, &cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(&cmp);
    idx
}

/// Temperature softmax, then top-k, then the smallest prefix whose
/// cumulative (full-distribution) probability reaches top-p, renormalized.
pub fn candidate_set(logits: &[f64], params: &SamplingParams) -> CandidateSet {
    let probs = softmax_with_temperature(logits, params.temperature);
    nucleus_from_probs(&probs, params.top_k, params.top_p)
}

pub(crate) fn nucleus_from_probs(probs: &[f64], top_k: usize, top_p: f64) -> CandidateSet {
    let order = top_k_indices(probs, top_k.max(1));
    let mut cum = 0.0;
    let mut keep = order.len();
    for (n, &i) in order.iter().enumerate() {
        cum += probs[i];
        if cum >= top_p {
            keep = n + 1;
            break;
        }
    }
    let kept = &order[..keep];
    let mass: f64 = kept.iter().map(|&i| probs[i]).sum();
    CandidateSet {
        ids: kept.iter().map(|&i| i as TokenId).collect(),
        probs: kept.iter().map(|&i| probs[i] / mass).collect(),
    }
}

/// Sets logits of tokens in `banned` families to `-inf`. Only CJ and Latin
/// may be banned.
pub fn mask_families(
    logits: &[f64],
    classes: &VocabClassification,
    banned: FamilySet,
) -> Result<Vec<f64>> {
    if let Some(f) = banned.difference(FamilySet::MASKABLE).iter().next() {
        return Err(Error::UnmaskableFamily(f));
    }
    mask_families_unchecked(logits, classes, banned)
}

/// Masking without the CJ/Latin restriction, for rule ablations.
pub(crate) fn mask_families_unchecked(
    logits: &[f64],
    classes: &VocabClassification,
    banned: FamilySet,
) -> Result<Vec<f64>> {
    if logits.len() != classes.len() {
        return Err(Error::LengthMismatch {
            what: "logits",
            expected: classes.len(),
            got: logits.len(),
        });
    }
    Ok(logits
        .iter()
        .zip(classes.families())
        .map(|(&l, &f)| if banned.contains(f) { f64::NEG_INFINITY } else { l })
        .collect())
}

/// Draws one id from the set. Consumes exactly one uniform draw.
pub fn sample<R: Rng + ?Sized>(set: &CandidateSet, rng: &mut R) -> TokenId {
    assert!(!set.is_empty(), "cannot sample from an empty candidate set");
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (&id, &p) in set.ids.iter().zip(&set.probs) {
        cum += p;
        if u < cum {
            return id;
        }
    }
    *set.ids.last().expect("non-empty")
}

/// Percentage of each family's tokens whose embedding norm is in the top
/// `percentile` fraction of all norms. Empty families map to `None`.
pub fn top_norm_fraction(
    norms: &EmbeddingNorms,
    classes: &VocabClassification,
    percentile: f64,
) -> Result<BTreeMap<LanguageFamily, Option<f64>>> {
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::config(format!("percentile must be in (0, 1), got {percentile}")));
    }
    if norms.len() != classes.len() {
        return Err(Error::LengthMismatch {
            what: "norms",
            expected: classes.len(),
            got: norms.len(),
        });
    }
    let n = norms.len();
    let take = ((percentile * n as f64).ceil() as usize).min(n);
    let top = top_k_indices(norms.as_slice(), take);
    let mut hits = [0usize; 4];
    for i in top {
        hits[classes.family(i as TokenId).index()] += 1;
    }
    Ok(LanguageFamily::ALL
        .iter()
        .map(|&f| {
            let total = classes.count(f);
            let frac = (total > 0).then(|| 100.0 * hits[f.index()] as f64 / total as f64);
            (f, frac)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use LanguageFamily::*;

    fn four_families() -> VocabClassification {
        VocabClassification::from_families(vec![Cj, Latin, Symbols, LowRes])
    }

    #[test]
    fn norms_of_columns() {
        let n = embedding_norms(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(n.as_slice(), &[5.0]);
        let id = embedding_norms(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(id.as_slice(), &[1.0, 1.0]);
        assert!(matches!(embedding_norms(&[vec![0.0, 0.0]]), Err(Error::ZeroNorm(0))));
    }

    #[test]
    fn adjust_flips_argmax() {
        let norms = EmbeddingNorms::new(vec![1.0, 2.0]).unwrap();
        let adj = norm_adjust(&[2.0, 3.0], &norms).unwrap();
        assert_eq!(adj, vec![2.0, 1.5]);
        let ones = EmbeddingNorms::new(vec![1.0; 3]).unwrap();
        let l = [0.5, f64::NEG_INFINITY, -2.0];
        assert_eq!(norm_adjust(&l, &ones).unwrap(), l.to_vec());
        assert!(norm_adjust(&[1.0], &norms).is_err());
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_with_temperature(&[0.0, 0.0], 1.0), vec![0.5, 0.5]);
        let p = softmax_with_temperature(&[2.0, 1.0, 0.0], 1.0);
        for (a, b) in p.iter().zip([0.66524, 0.24473, 0.09003]) {
            assert!((a - b).abs() < 1e-5, "{p:?}");
        }
        assert_eq!(softmax_with_temperature(&[f64::NEG_INFINITY, 0.0], 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn candidate_examples() {
        let logits = [2.0, 1.0, 0.0];
        let c = candidate_set(&logits, &SamplingParams::new(3, 0.9, 1.0).unwrap());
        assert_eq!(c.ids, vec![0, 1]);
        assert!((c.probs[0] - 0.73106).abs() < 1e-4 && (c.probs[1] - 0.26894).abs() < 1e-4, "{c:?}");
        let c = candidate_set(&logits, &SamplingParams::new(1, 0.3, 1.0).unwrap());
        assert_eq!(c.ids, vec![0]);
        assert_eq!(c.probs, vec![1.0]);
        let c = candidate_set(&[0.0, f64::NEG_INFINITY, 1.0], &SamplingParams::new(3, 1.0, 1.0).unwrap());
        assert_eq!(c.ids, vec![2, 0]);
    }

    #[test]
    fn ties_prefer_lower_id() {
        let c = candidate_set(&[1.0, 1.0, 1.0, 1.0], &SamplingParams::new(2, 1.0, 1.0).unwrap());
        assert_eq!(c.ids, vec![0, 1]);
    }

    #[test]
    fn masking() {
        let classes = four_families();
        let l = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mask_families(&l, &classes, FamilySet::EMPTY).unwrap(), l.to_vec());
        let m = mask_families(&l, &classes, FamilySet::single(Cj)).unwrap();
        assert_eq!(m, vec![f64::NEG_INFINITY, 2.0, 3.0, 4.0]);
        assert!(matches!(
            mask_families(&l, &classes, FamilySet::single(Symbols)),
            Err(Error::UnmaskableFamily(Symbols))
        ));
        assert!(mask_families(&l, &classes, FamilySet::single(LowRes)).is_err());
    }

    #[test]
    fn sampling() {
        let single = CandidateSet { ids: vec![3], probs: vec![1.0] };
        for seed in 0..5 {
            assert_eq!(sample(&single, &mut ChaCha8Rng::seed_from_u64(seed)), 3);
        }
        let half = CandidateSet { ids: vec![7, 9], probs: vec![0.5, 0.5] };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let sevens = (0..10_000).filter(|_| sample(&half, &mut rng) == 7).count();
        assert!((sevens as f64 / 10_000.0 - 0.5).abs() < 0.02);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| sample(&half, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(1), draw(1));
    }

    #[test]
    fn norm_fraction() {
        // families interleaved so that lower-id tie breaking spreads evenly
        let classes = VocabClassification::from_families(
            (0..300).map(|i| [Cj, Latin, LowRes][i % 3]).collect(),
        );
        let uniform = EmbeddingNorms::new(vec![1.0; 300]).unwrap();
        let fr = top_norm_fraction(&uniform, &classes, 0.05).unwrap();
        for f in [Cj, Latin, LowRes] {
            assert_eq!(fr[&f], Some(5.0));
        }
        assert_eq!(fr[&Symbols], None);

        let spread: Vec<f64> = (0..300).map(|i| 1.0 + ((i * 37) % 101) as f64 * 1e-3).collect();
        let skewed: Vec<f64> = spread
            .iter()
            .enumerate()
            .map(|(i, n)| if i % 3 == 0 { n * 1.5 } else { *n })
            .collect();
        let fr = top_norm_fraction(&EmbeddingNorms::new(skewed).unwrap(), &classes, 0.05).unwrap();
        assert!(fr[&Cj] > fr[&Latin]);
        assert!(top_norm_fraction(&uniform, &classes, 1.0).is_err());
    }
}
