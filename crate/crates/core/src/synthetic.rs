//! Random networks shaped like the public benchmark knowledge bases.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::network::{DiseaseSpec, EdgeSpec, FindingSpec, NetworkSpec, QmrNetwork};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub n_diseases: usize,
    pub n_findings: usize,
    pub mean_findings_per_disease: f64,
    /// Edge probabilities are drawn uniformly from `[lo, hi]`.
    pub prob_range: (f64, f64),
}

impl SyntheticParams {
    pub fn new(n_diseases: usize, n_findings: usize, mean: f64, prob_range: (f64, f64)) -> Self {
        Self { n_diseases, n_findings, mean_findings_per_disease: mean, prob_range }
    }

    /// SymCAT-sized subsets (200, 300 or 400 diseases); other sizes scale the 300 row.
    pub fn symcat_like(n_diseases: usize) -> Self {
        let (findings, per_disease) = match n_diseases {
            200 => (328, 11.485),
            300 => (349, 11.477),
            400 => (355, 11.458),
            n => ((n as f64 * 349.0 / 300.0).round() as usize, 11.477),
        };
        Self::new(n_diseases, findings, per_disease, (0.1, 0.9))
    }

    /// HPO-sized subsets (500 or 1000 diseases); other sizes scale the 500 row.
    pub fn hpo_like(n_diseases: usize) -> Self {
        let (findings, per_disease) = match n_diseases {
            500 => (1901, 9.682),
            1000 => (3599, 16.183),
            n => ((n as f64 * 1901.0 / 500.0).round() as usize, 9.682),
        };
        Self::new(n_diseases, findings, per_disease, (0.1, 0.9))
    }

    fn check(&self) -> Result<()> {
        let (lo, hi) = self.prob_range;
        if self.n_diseases == 0 || self.n_findings == 0 {
            return Err(Error::InfeasibleParameters("need at least one disease and one finding".into()));
        }
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::InfeasibleParameters(format!("probability range [{lo}, {hi}]")));
        }
        let mean = self.mean_findings_per_disease;
        if !(mean >= 1.0) || mean > self.n_findings as f64 {
            return Err(Error::InfeasibleParameters(format!(
                "mean findings per disease {mean} outside [1, {}]",
                self.n_findings
            )));
        }
        Ok(())
    }
}

/// Generate a network with uniform priors.
///
/// Each disease gets `1 + Poisson(mean - 1)` findings (capped at the number of
/// findings). When there are at least as many edges as findings every finding
/// receives at least one parent, so the diseases-per-finding ratio is
/// `edges / n_findings` as in the published dataset statistics.
pub fn generate_synthetic_network(params: &SyntheticParams, seed: u64) -> Result<QmrNetwork> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_findings = params.n_findings;

    let extra = params.mean_findings_per_disease - 1.0;
    let poisson = if extra > 0.0 { Some(Poisson::new(extra).expect("positive rate")) } else { None };
    let counts: Vec<usize> = (0..params.n_diseases)
        .map(|_| {
            let k = 1 + poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
            k.min(n_findings)
        })
        .collect();

    let mut adjacency: Vec<Vec<usize>> = counts.iter().map(|&k| Vec::with_capacity(k)).collect();
    let total: usize = counts.iter().sum();
    if total >= n_findings {
        let mut owners: Vec<usize> =
            counts.iter().enumerate().flat_map(|(d, &k)| std::iter::repeat_n(d, k)).collect();
        owners.shuffle(&mut rng);
        let mut order: Vec<usize> = (0..n_findings).collect();
        order.shuffle(&mut rng);
        for (slot, &owner) in owners.iter().enumerate() {
            if slot < n_findings {
                adjacency[owner].push(order[slot]);
            } else {
                loop {
                    let f = rng.random_range(0..n_findings);
                    if !adjacency[owner].contains(&f) {
                        adjacency[owner].push(f);
                        break;
                    }
                }
            }
        }
    } else {
        for (d, &k) in counts.iter().enumerate() {
            adjacency[d] = rand::seq::index::sample(&mut rng, n_findings, k).into_vec();
        }
    }

    let width_d = params.n_diseases.to_string().len();
    let width_f = n_findings.to_string().len();
    let disease_name = |d: usize| format!("disease-{d:0width_d$}");
    let finding_name = |f: usize| format!("finding-{f:0width_f$}");
    let (lo, hi) = params.prob_range;
    let prior = 1.0 / params.n_diseases as f64;

    let mut edges = Vec::with_capacity(total);
    for (d, list) in adjacency.iter_mut().enumerate() {
        list.sort_unstable();
        for &f in list.iter() {
            let prob = if lo == hi { lo } else { rng.random_range(lo..=hi) };
            edges.push(EdgeSpec { disease: disease_name(d), finding: finding_name(f), prob });
        }
    }

    let spec = NetworkSpec {
        diseases: (0..params.n_diseases).map(|d| DiseaseSpec { name: disease_name(d), prior }).collect(),
        findings: (0..n_findings).map(|f| FindingSpec { name: finding_name(f) }).collect(),
        edges,
    };
    QmrNetwork::from_spec(&spec)
}
