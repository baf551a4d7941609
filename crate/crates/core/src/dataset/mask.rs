//! Dirichlet masking: how many tokens of each modality the encoder sees.
//!
//! Text form of a [`MaskPlan`]:
//!
//! ```text
//! tokens 784
//! gray input 0 5 17
//! gray target 1 2 3 4 6 …
//! dem input
//! dem target 0 1 2 …
//! ```

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::TOKENS_PER_PATCH;
use crate::error::{invalid, Error, Result};

/// Input/target split of one modality's token indices, both sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModalityMask {
    pub name: String,
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    tokens_per_modality: usize,
    modalities: Vec<ModalityMask>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.starts_with('#') && !name.chars().any(char::is_whitespace)
}

impl MaskPlan {
    pub fn new(tokens_per_modality: usize, modalities: Vec<ModalityMask>) -> Result<Self> {
        let plan = Self {
            tokens_per_modality,
            modalities,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Checks that every modality partitions `0..tokens_per_modality`.
    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return invalid("mask plan has no modalities");
        }
        for (k, m) in self.modalities.iter().enumerate() {
            if !valid_name(&m.name) {
                return invalid(format!("bad modality name '{}'", m.name));
            }
            if self.modalities[..k].iter().any(|o| o.name == m.name) {
                return invalid(format!("duplicate modality '{}'", m.name));
            }
            let mut seen = vec![false; self.tokens_per_modality];
            for list in [&m.inputs, &m.targets] {
                if list.windows(2).any(|w| w[0] >= w[1]) {
                    return invalid(format!("{}: token lists must be strictly increasing", m.name));
                }
                for &t in list.iter() {
                    match seen.get_mut(t) {
                        None => {
                            return invalid(format!(
                                "{}: token {t} out of range 0..{}",
                                m.name, self.tokens_per_modality
                            ))
                        }
                        Some(s) if *s => return invalid(format!("{}: token {t} is both input and target", m.name)),
                        Some(s) => *s = true,
                    }
                }
            }
            if m.inputs.len() + m.targets.len() != self.tokens_per_modality {
                return invalid(format!("{}: inputs and targets do not cover every token", m.name));
            }
        }
        Ok(())
    }

    pub fn tokens_per_modality(&self) -> usize {
        self.tokens_per_modality
    }

    pub fn modalities(&self) -> &[ModalityMask] {
        &self.modalities
    }

    /// Input counts per modality, in plan order.
    pub fn input_counts(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.inputs.len()).collect()
    }

    pub fn input_total(&self) -> usize {
        self.modalities.iter().map(|m| m.inputs.len()).sum()
    }

    /// Replaces the default numeric modality names.
    pub fn with_names<S: AsRef<str>>(mut self, names: &[S]) -> Result<Self> {
        if names.len() != self.modalities.len() {
            return invalid(format!(
                "{} names for {} modalities",
                names.len(),
                self.modalities.len()
            ));
        }
        for (m, n) in self.modalities.iter_mut().zip(names) {
            m.name = n.as_ref().to_string();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("tokens {}\n", self.tokens_per_modality);
        for m in &self.modalities {
            for (kind, list) in [("input", &m.inputs), ("target", &m.targets)] {
                out.push_str(&m.name);
                out.push(' ');
                out.push_str(kind);
                for t in list {
                    let _ = write!(out, " {t}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Parses [`MaskPlan::to_text`] output. Blank lines and `#` comments are
    /// skipped; errors carry the 1-based line number as their offset.
    pub fn parse(text: &str) -> Result<Self> {
        let fail = |line: usize, message: String| Error::Format {
            offset: line as u64,
            message,
        };
        let mut tokens = None;
        let mut modalities: Vec<(ModalityMask, bool, bool)> = Vec::new();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            last_line = line_no;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let head = fields.next().expect("non-empty line");
            let Some(n) = tokens else {
                if head != "tokens" {
                    return Err(fail(line_no, "expected 'tokens <count>' header".into()));
                }
                let value = fields
                    .next()
                    .ok_or_else(|| fail(line_no, "missing token count".into()))?;
                let n: usize = value
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad token count '{value}'")))?;
                if n == 0 || n > 1 << 20 {
                    return Err(fail(line_no, format!("token count {n} out of range")));
                }
                if fields.next().is_some() {
                    return Err(fail(line_no, "trailing fields after token count".into()));
                }
                tokens = Some(n);
                continue;
            };
            let kind = fields
                .next()
                .ok_or_else(|| fail(line_no, "expected 'input' or 'target' after the modality name".into()))?;
            let is_input = match kind {
                "input" => true,
                "target" => false,
                other => return Err(fail(line_no, format!("unknown list kind '{other}'"))),
            };
            let mut list = Vec::new();
            for f in fields {
                let t: usize = f
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad token index '{f}'")))?;
                if t >= n {
                    return Err(fail(line_no, format!("token {t} out of range 0..{n}")));
                }
                if list.last().is_some_and(|&prev| prev >= t) {
                    return Err(fail(line_no, "token lists must be strictly increasing".into()));
                }
                list.push(t);
            }
            let pos = match modalities.iter().position(|(m, _, _)| m.name == head) {
                Some(p) => p,
                None => {
                    if !valid_name(head) {
                        return Err(fail(line_no, format!("bad modality name '{head}'")));
                    }
                    modalities.push((
                        ModalityMask {
                            name: head.to_string(),
                            inputs: Vec::new(),
                            targets: Vec::new(),
                        },
                        false,
                        false,
                    ));
                    modalities.len() - 1
                }
            };
            let entry = &mut modalities[pos];
            let (seen, slot) = if is_input {
                (&mut entry.1, &mut entry.0.inputs)
            } else {
                (&mut entry.2, &mut entry.0.targets)
            };
            if *seen {
                return Err(fail(line_no, format!("duplicate {kind} list for '{head}'")));
            }
            *seen = true;
            *slot = list;
        }
        let Some(n) = tokens else {
            return Err(fail(last_line.max(1), "missing 'tokens <count>' header".into()));
        };
        if let Some((m, _, _)) = modalities.iter().find(|(_, i, t)| !(*i && *t)) {
            return Err(fail(last_line, format!("'{}' needs both an input and a target list", m.name)));
        }
        let plan = Self {
            tokens_per_modality: n,
            modalities: modalities.into_iter().map(|(m, _, _)| m).collect(),
        };
        plan.validate().map_err(|e| fail(last_line, e.to_string()))?;
        Ok(plan)
    }
}

/// Draws mask plans over a fixed number of tokens per modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskSampler {
    tokens_per_modality: usize,
}

impl Default for MaskSampler {
    fn default() -> Self {
        Self {
            tokens_per_modality: TOKENS_PER_PATCH,
        }
    }
}

impl MaskSampler {
    pub fn new(tokens_per_modality: usize) -> Result<Self> {
        if tokens_per_modality == 0 {
            return invalid("tokens per modality must be positive");
        }
        Ok(Self { tokens_per_modality })
    }

    pub fn tokens_per_modality(&self) -> usize {
        self.tokens_per_modality
    }

    /// Proportions `λ ~ Dirichlet(alphas)` from normalized Gamma(α, 1)
    /// variates. The variates are drawn in log space so that tiny α does not
    /// underflow every component to zero.
    pub fn proportions<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if alphas.is_empty() {
            return invalid("need at least one modality");
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return invalid(format!("Dirichlet concentration {a} must be positive and finite"));
        }
        let mut logs = Vec::with_capacity(alphas.len());
        for &a in alphas {
            let lg = if a >= 1.0 {
                let g = Gamma::new(a, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                g.sample(rng).ln()
            } else {
                // G(α) = G(α+1)·U^(1/α)
                let g = Gamma::new(a + 1.0, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                let u = 1.0 - rng.random::<f64>();
                g.sample(rng).ln() + u.ln() / a
            };
            logs.push(lg);
        }
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
        let sum: f64 = weights.iter().sum();
        Ok(weights.into_iter().map(|w| w / sum).collect())
    }

    fn check_budget(&self, modalities: usize, budget: usize) -> Result<()> {
        let total = modalities * self.tokens_per_modality;
        if budget == 0 || budget > total {
            return invalid(format!("input budget {budget} outside 1..={total}"));
        }
        Ok(())
    }

    pub fn dirichlet(&self, alphas: &[f64], input_budget: usize, seed: u64) -> Result<MaskPlan> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lambda = Self::proportions(alphas, &mut rng)?;
        self.check_budget(alphas.len(), input_budget)?;
        self.plan_from(&lambda, input_budget, &mut rng)
    }

    /// Equal proportions for every modality.
    pub fn uniform(&self, modalities: usize, input_budget: usize, seed: u64) -> Result<MaskPlan> {
        if modalities == 0 {
            return invalid("need at least one modality");
        }
        self.check_budget(modalities, input_budget)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.plan_from(&vec![1.0 / modalities as f64; modalities], input_budget, &mut rng)
    }

    fn plan_from<R: Rng + ?Sized>(&self, lambda: &[f64], budget: usize, rng: &mut R) -> Result<MaskPlan> {
        let counts = allocate(lambda, budget, self.tokens_per_modality);
        let n = self.tokens_per_modality;
        let modalities = counts
            .iter()
            .enumerate()
            .map(|(k, &count)| {
                let mut inputs = index::sample(rng, n, count).into_vec();
                inputs.sort_unstable();
                let mut is_input = vec![false; n];
                inputs.iter().for_each(|&t| is_input[t] = true);
                let targets = (0..n).filter(|&t| !is_input[t]).collect();
                ModalityMask {
                    name: k.to_string(),
                    inputs,
                    targets,
                }
            })
            .collect();
        MaskPlan::new(n, modalities)
    }
}

/// Largest-remainder split of `total` by `weights`; ties go to the lowest index.
fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let shares: Vec<f64> = if sum > 0.0 && sum.is_finite() {
        weights.iter().map(|w| w / sum * total as f64).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (shares[a] - shares[a].floor(), shares[b] - shares[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    // rounding can overshoot by a unit when the shares sum slightly above total
    for &k in order.iter().rev() {
        if assigned <= total {
            break;
        }
        if counts[k] > 0 {
            counts[k] -= 1;
            assigned -= 1;
        }
    }
    for &k in order.iter().cycle().take(total - assigned) {
        counts[k] += 1;
    }
    counts
}

/// Largest-remainder allocation with each modality capped at `cap` tokens;
/// budget above a cap is re-split over the remaining modalities.
fn allocate(lambda: &[f64], budget: usize, cap: usize) -> Vec<usize> {
    let m = lambda.len();
    let mut counts = vec![0usize; m];
    let mut open: Vec<usize> = (0..m).collect();
    let mut remaining = budget;
    while remaining > 0 && !open.is_empty() {
        let weights: Vec<f64> = open.iter().map(|&k| lambda[k]).collect();
        let split = largest_remainder(&weights, remaining);
        let overflow = open
            .iter()
            .zip(&split)
            .any(|(&k, &s)| counts[k] + s > cap);
        if !overflow {
            for (&k, &s) in open.iter().zip(&split) {
                counts[k] += s;
            }
            break;
        }
        let mut still_open = Vec::new();
        for (&k, &s) in open.iter().zip(&split) {
            if counts[k] + s >= cap {
                remaining -= cap - counts[k];
                counts[k] = cap;
            } else {
                still_open.push(k);
            }
        }
        open = still_open;
    }
    counts
}

/// [`MaskSampler::dirichlet`] over 784 tokens per modality.
pub fn dirichlet_mask(alphas: &[f64], input_budget: usize, seed: u64) -> Result<MaskPlan> {
    MaskSampler::default().dirichlet(alphas, input_budget, seed)
}

/// [`MaskSampler::uniform`] over 784 tokens per modality.
pub fn uniform_mask(modalities: usize, input_budget: usize, seed: u64) -> Result<MaskPlan> {
    MaskSampler::default().uniform(modalities, input_budget, seed)
}
