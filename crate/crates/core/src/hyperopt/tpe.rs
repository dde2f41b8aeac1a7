//! Tree-structured Parzen estimator.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::space::{DimKind, Dimension, HyperPoint, ParamValue, SearchSpace};
use super::Trial;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpeConfig {
    /// Fraction of trials treated as good.
    pub gamma: f64,
    pub n_candidates: usize,
    /// Redraw duplicates in all-discrete spaces.
    pub dedup: bool,
    pub max_redraws: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_candidates: 24,
            dedup: true,
            max_redraws: 10,
        }
    }
}

/// Smallest kernel bandwidth as a fraction of the dimension's range, reached
/// once a density holds 99 observations. Sparser densities are floored at
/// `range / (1 + m)` so a tight early cluster cannot stop exploration.
const MIN_BANDWIDTH_FRAC: f64 = 0.01;

/// Continuous bounds in the space the kernels live in: log for log-scale
/// reals, half-integer padding for integers.
fn numeric_bounds(kind: &DimKind) -> Option<(f64, f64)> {
    match *kind {
        DimKind::Int { lo, hi } => Some((lo as f64 - 0.5, hi as f64 + 0.5)),
        DimKind::Real { lo, hi } => Some((lo, hi)),
        DimKind::LogReal { lo, hi } => Some((lo.ln(), hi.ln())),
        DimKind::Categorical { .. } => None,
    }
}

fn to_numeric(kind: &DimKind, v: &ParamValue) -> Option<f64> {
    match kind {
        DimKind::LogReal { .. } => v.as_f64().map(f64::ln),
        _ => v.as_f64(),
    }
}

fn from_numeric(kind: &DimKind, x: f64) -> ParamValue {
    match *kind {
        DimKind::Int { lo, hi } => ParamValue::Int((x.round() as i64).clamp(lo, hi)),
        DimKind::Real { lo, hi } => ParamValue::Real(x.clamp(lo, hi)),
        DimKind::LogReal { lo, hi } => ParamValue::Real(x.exp().clamp(lo, hi)),
        DimKind::Categorical { .. } => unreachable!("categorical has no numeric form"),
    }
}

/// Gaussian mixture over the observations plus one wide prior component.
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl Parzen {
    fn fit(obs: &[f64], lo: f64, hi: f64) -> Self {
        let range = (hi - lo).max(f64::MIN_POSITIVE);
        let m = obs.len();
        let bw = if m > 0 {
            let mean = obs.iter().sum::<f64>() / m as f64;
            let sd = (obs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
            let floor = range / (1.0 + m as f64).min(1.0 / MIN_BANDWIDTH_FRAC);
            (1.06 * sd * (m as f64).powf(-0.2)).clamp(floor, range)
        } else {
            range
        };
        let mut mus = obs.to_vec();
        let mut sigmas = vec![bw; m];
        mus.push(0.5 * (lo + hi));
        sigmas.push(range);
        Self { mus, sigmas, lo, hi }
    }

    fn pdf(&self, x: f64) -> f64 {
        let s: f64 = self
            .mus
            .iter()
            .zip(&self.sigmas)
            .map(|(mu, sd)| (-0.5 * ((x - mu) / sd).powi(2)).exp() / sd)
            .sum();
        s / (self.mus.len() as f64 * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let k = rng.random_range(0..self.mus.len());
        let normal = Normal::new(self.mus[k], self.sigmas[k]).expect("positive bandwidth");
        for _ in 0..100 {
            let x = normal.sample(rng);
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        self.mus[k].clamp(self.lo, self.hi)
    }
}

/// Smoothed frequencies `(count + 1) / (n + K)`.
struct CategoricalDensity {
    probs: Vec<f64>,
}

impl CategoricalDensity {
    fn fit(choices: &[ParamValue], obs: &[&ParamValue]) -> Self {
        let k = choices.len() as f64;
        let n = obs.len() as f64;
        let probs = choices
            .iter()
            .map(|c| (obs.iter().filter(|&&o| o == c).count() as f64 + 1.0) / (n + k))
            .collect();
        Self { probs }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

enum DimDensity {
    Numeric(Parzen),
    Categorical(CategoricalDensity),
}

impl DimDensity {
    fn fit(dim: &Dimension, trials: &[&Trial]) -> Self {
        let obs: Vec<&ParamValue> = trials.iter().filter_map(|t| t.point.get(&dim.name)).collect();
        match &dim.kind {
            DimKind::Categorical { choices } => DimDensity::Categorical(CategoricalDensity::fit(choices, &obs)),
            kind => {
                let (lo, hi) = numeric_bounds(kind).expect("numeric dimension");
                let xs: Vec<f64> = obs.iter().filter_map(|v| to_numeric(kind, v)).collect();
                DimDensity::Numeric(Parzen::fit(&xs, lo, hi))
            }
        }
    }

    fn pdf(&self, dim: &Dimension, v: &ParamValue) -> f64 {
        match (self, &dim.kind) {
            (DimDensity::Categorical(c), DimKind::Categorical { choices }) => {
                choices.iter().position(|x| x == v).map_or(0.0, |i| c.probs[i])
            }
            (DimDensity::Numeric(p), kind) => to_numeric(kind, v).map_or(0.0, |x| p.pdf(x)),
            _ => 0.0,
        }
    }

    fn sample<R: Rng>(&self, dim: &Dimension, rng: &mut R) -> ParamValue {
        match (self, &dim.kind) {
            (DimDensity::Categorical(c), DimKind::Categorical { choices }) => choices[c.sample(rng)].clone(),
            (DimDensity::Numeric(p), kind) => from_numeric(kind, p.sample(rng)),
            _ => unreachable!("density kind matches its dimension"),
        }
    }
}

/// Proposes the next point from the trial history.
///
/// With fewer than two trials this is a uniform draw. Otherwise trials are
/// split at the `gamma` quantile of performance; per-dimension densities
/// `l` (good) and `g` (bad) are fitted over the trials where the dimension
/// is active, and the candidate drawn from `l` with the largest
/// `sum(log l - log g)` over its active dimensions wins.
pub fn tpe_suggest<R: Rng>(history: &[Trial], space: &SearchSpace, cfg: &TpeConfig, rng: &mut R) -> HyperPoint {
    if history.len() < 2 {
        return space.sample_uniform(rng);
    }
    let mut ranked: Vec<&Trial> = history.iter().collect();
    ranked.sort_by(|a, b| a.performance.total_cmp(&b.performance).then(a.index.cmp(&b.index)));
    let n_good = ((cfg.gamma * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len() - 1);
    let (good, bad) = ranked.split_at(n_good);
    let l: Vec<DimDensity> = space.dimensions.iter().map(|d| DimDensity::fit(d, good)).collect();
    let g: Vec<DimDensity> = space.dimensions.iter().map(|d| DimDensity::fit(d, bad)).collect();

    let dedup = cfg.dedup && space.is_discrete();
    let mut best: Option<(f64, HyperPoint)> = None;
    for _ in 0..=(if dedup { cfg.max_redraws } else { 0 }) {
        let mut batch: Vec<(f64, HyperPoint)> = (0..cfg.n_candidates.max(1))
            .map(|_| {
                let mut p = HyperPoint::new();
                let mut score = 0.0;
                for (i, d) in space.dimensions.iter().enumerate() {
                    if d.is_active(&p) {
                        let v = l[i].sample(d, rng);
                        score += l[i].pdf(d, &v).ln() - g[i].pdf(d, &v).ln();
                        p.insert(d.name.clone(), v);
                    }
                }
                (score, p)
            })
            .collect();
        // stable sort keeps draw order among equal scores
        batch.sort_by(|a, b| b.0.total_cmp(&a.0));
        if best.is_none() {
            best = batch.first().cloned();
        }
        if !dedup {
            break;
        }
        if let Some(fresh) = batch.into_iter().find(|(_, p)| history.iter().all(|t| &t.point != p)) {
            return fresh.1;
        }
    }
    best.expect("at least one candidate").1
}
