//! The training objective.
//!
//! Per triplet member: distribution matching between the creative and
//! augmented sequences (`l_sim`, squared mean/std gaps summed over feature
//! dimensions), template L2 regularization (`l_reg`, mean squared row norm),
//! the global-branch MSE, and a margin hinge anchoring the creative mean to
//! the fuzzy mean (`l_anch`). Once per triplet: transition-vector alignment
//! over the three edges style `(i,j)->(i,k)`, concept `(i,j)->(m,j)` and
//! joint `(i,k)->(m,j)` (`l_disen`).
//!
//! `l_align = l_sim + l_reg + l_global_mse`, and
//! `l_total = l_align + alpha*l_disen + beta*l_anch`, with the per-member
//! terms averaged over the three members.

use crate::encoders::EmbeddingSequence;
use crate::numerics::{cosine, real, Real, Tensor2D, Vector, COSINE_EPS};
use crate::tokenizer::TokenTemplate;
use ndarray::{Array1, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("global branch: {0}")]
    Global(String),
    #[error("loss weights: {0}")]
    Weights(String),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.5, beta: 0.1, margin: 0.85 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(LossError::Weights("alpha and beta must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.margin) {
            return Err(LossError::Weights("margin must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Scalar values of every component, reported in `f64` regardless of the
/// working precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_sim: f64,
    pub l_reg: f64,
    pub l_global_mse: f64,
    pub l_align: f64,
    pub l_disen: f64,
    pub l_anch: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn zeros() -> Self {
        Self {
            l_sim: 0.0,
            l_reg: 0.0,
            l_global_mse: 0.0,
            l_align: 0.0,
            l_disen: 0.0,
            l_anch: 0.0,
            l_total: 0.0,
        }
    }

    pub fn add(&mut self, other: &Self) {
        self.l_sim += other.l_sim;
        self.l_reg += other.l_reg;
        self.l_global_mse += other.l_global_mse;
        self.l_align += other.l_align;
        self.l_disen += other.l_disen;
        self.l_anch += other.l_anch;
        self.l_total += other.l_total;
    }

    pub fn scale(&mut self, s: f64) {
        self.l_sim *= s;
        self.l_reg *= s;
        self.l_global_mse *= s;
        self.l_align *= s;
        self.l_disen *= s;
        self.l_anch *= s;
        self.l_total *= s;
    }
}

/// Distribution-matching term: squared gaps between per-column means and
/// population standard deviations of the two sequences.
pub fn loss_sim<T: Real>(
    creative: &EmbeddingSequence<T>,
    augmented: &EmbeddingSequence<T>,
) -> Result<T, LossError> {
    if creative.tokens.ncols() != augmented.tokens.ncols() {
        return Err(LossError::Shape(format!(
            "creative width {} != augmented width {}",
            creative.tokens.ncols(),
            augmented.tokens.ncols()
        )));
    }
    let (mu_c, sigma_c) = crate::numerics::seq_mean_std(&creative.tokens)?;
    let (mu_a, sigma_a) = crate::numerics::seq_mean_std(&augmented.tokens)?;
    Ok(stat_gap(mu_c.view(), sigma_c.view(), mu_a.view(), sigma_a.view()))
}

fn stat_gap<T: Real>(
    mu_c: ArrayView1<T>,
    sigma_c: ArrayView1<T>,
    mu_a: ArrayView1<T>,
    sigma_a: ArrayView1<T>,
) -> T {
    let mut acc = T::zero();
    for k in 0..mu_c.len() {
        let dm = mu_c[k] - mu_a[k];
        let ds = sigma_c[k] - sigma_a[k];
        acc += dm * dm + ds * ds;
    }
    acc
}

/// Mean squared Euclidean row norm of the template.
pub fn loss_reg<T: Real>(template: &TokenTemplate<T>) -> T {
    let n = template.tokens.nrows();
    let mut acc = T::zero();
    for &v in template.tokens.iter() {
        acc += v * v;
    }
    acc / real::<T>(n as f64)
}

/// Transition-vector alignment over the three triplet edges. Means are
/// indexed anchor `(i,j)`, style neighbor `(i,k)`, concept neighbor `(m,j)`.
pub fn loss_disen<T: Real>(
    creative_means: &[Vector<T>; 3],
    augmented_means: &[Vector<T>; 3],
) -> Result<T, LossError> {
    let eps = real::<T>(COSINE_EPS);
    let mut acc = T::zero();
    for &(src, dst) in EDGES.iter() {
        let dc = &creative_means[dst] - &creative_means[src];
        let da = &augmented_means[dst] - &augmented_means[src];
        acc += T::one() - cosine(dc.view(), da.view(), eps)?;
    }
    Ok(acc / real::<T>(EDGES.len() as f64))
}

/// Edge set: style `(0 -> 1)`, concept `(0 -> 2)`, joint `(1 -> 2)`.
const EDGES: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Margin hinge on the cosine between the creative and fuzzy pooled means.
pub fn loss_anchor<T: Real>(
    c_mean: ArrayView1<T>,
    f_mean: ArrayView1<T>,
    margin: f64,
) -> Result<T, LossError> {
    let eps = real::<T>(COSINE_EPS);
    let c = cosine(c_mean, f_mean, eps)?;
    Ok((real::<T>(margin) - c).max(T::zero()))
}

/// Inputs of one triplet member.
pub struct MemberInputs<'a, T> {
    pub template: &'a TokenTemplate<T>,
    pub fuzzy: &'a EmbeddingSequence<T>,
    /// Per-column mean of the member's augmented sequence.
    pub aug_mean: &'a Vector<T>,
    /// Per-column population std of the member's augmented sequence.
    pub aug_std: &'a Vector<T>,
    /// Pooled global target; required iff the template predicts one.
    pub global_target: Option<&'a Vector<T>>,
}

/// Loss gradients w.r.t. one member's template tokens and global prediction.
#[derive(Debug, Clone)]
pub struct MemberGrads<T> {
    pub d_template: Tensor2D<T>,
    pub d_global: Option<Vector<T>>,
}

struct MemberStats<T> {
    mu_c: Vector<T>,
    sigma_c: Vector<T>,
    mu_f: Vector<T>,
    rows_total: usize,
}

fn member_stats<T: Real>(m: &MemberInputs<'_, T>) -> Result<MemberStats<T>, LossError> {
    let t = &m.template.tokens;
    let f = &m.fuzzy.tokens;
    if t.ncols() != f.ncols() {
        return Err(LossError::Shape(format!(
            "template width {} != fuzzy width {}",
            t.ncols(),
            f.ncols()
        )));
    }
    if m.aug_mean.len() != t.ncols() || m.aug_std.len() != t.ncols() {
        return Err(LossError::Shape("augmented stats width differs".into()));
    }
    let d = t.ncols();
    let rows_total = t.nrows() + f.nrows();
    let inv = T::one() / real::<T>(rows_total as f64);
    let mut mu_c = Array1::<T>::zeros(d);
    for row in t.rows().into_iter().chain(f.rows()) {
        for (k, &v) in row.iter().enumerate() {
            mu_c[k] += v;
        }
    }
    mu_c *= inv;
    let mut var = Array1::<T>::zeros(d);
    for row in t.rows().into_iter().chain(f.rows()) {
        for (k, &v) in row.iter().enumerate() {
            let dd = v - mu_c[k];
            var[k] += dd * dd;
        }
    }
    var *= inv;
    let sigma_c = var.mapv(num_traits::Float::sqrt);
    let mu_f = f.mean_axis(Axis(0)).expect("fuzzy non-empty");
    Ok(MemberStats { mu_c, sigma_c, mu_f, rows_total })
}

/// Gradient of the epsilon-guarded cosine w.r.t. its first argument.
fn d_cosine_du<T: Real>(u: ArrayView1<T>, v: ArrayView1<T>) -> Vector<T> {
    let eps = real::<T>(COSINE_EPS);
    let dot = u.dot(&v);
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    let denom = nu * nv + eps;
    let mut out = Array1::zeros(u.len());
    for k in 0..u.len() {
        let mut g = v[k] / denom;
        if nu > T::zero() {
            g -= dot * nv * u[k] / (nu * denom * denom);
        }
        out[k] = g;
    }
    out
}

/// One addend of the objective, selectable for targeted gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    Sim,
    Reg,
    GlobalMse,
    Anchor,
    Disen,
    Total,
}

/// Coefficients applied to the raw terms in the differentiated scalar.
#[derive(Clone, Copy)]
struct TermCoeffs {
    sim: f64,
    reg: f64,
    mse: f64,
    anch: f64,
    disen: f64,
}

impl LossTerm {
    fn coeffs(self, weights: &LossWeights) -> TermCoeffs {
        let zero = TermCoeffs { sim: 0.0, reg: 0.0, mse: 0.0, anch: 0.0, disen: 0.0 };
        match self {
            LossTerm::Sim => TermCoeffs { sim: 1.0, ..zero },
            LossTerm::Reg => TermCoeffs { reg: 1.0, ..zero },
            LossTerm::GlobalMse => TermCoeffs { mse: 1.0, ..zero },
            LossTerm::Anchor => TermCoeffs { anch: 1.0, ..zero },
            LossTerm::Disen => TermCoeffs { disen: 1.0, ..zero },
            LossTerm::Total => TermCoeffs {
                sim: 1.0,
                reg: 1.0,
                mse: 1.0,
                anch: weights.beta,
                disen: weights.alpha,
            },
        }
    }
}

/// Full objective over a triplet. Returns the component breakdown and the
/// gradients of `l_total` w.r.t. each member's template tokens and global
/// prediction.
pub fn loss_total<T: Real>(
    members: &[MemberInputs<'_, T>; 3],
    weights: &LossWeights,
) -> Result<(LossBreakdown, [MemberGrads<T>; 3]), LossError> {
    loss_weighted(members, weights, LossTerm::Total)
}

/// Value and gradients of a single raw term (or the weighted total).
pub fn loss_term<T: Real>(
    members: &[MemberInputs<'_, T>; 3],
    weights: &LossWeights,
    term: LossTerm,
) -> Result<(f64, [MemberGrads<T>; 3]), LossError> {
    let (breakdown, grads) = loss_weighted(members, weights, term)?;
    let value = match term {
        LossTerm::Sim => breakdown.l_sim,
        LossTerm::Reg => breakdown.l_reg,
        LossTerm::GlobalMse => breakdown.l_global_mse,
        LossTerm::Anchor => breakdown.l_anch,
        LossTerm::Disen => breakdown.l_disen,
        LossTerm::Total => breakdown.l_total,
    };
    Ok((value, grads))
}

fn loss_weighted<T: Real>(
    members: &[MemberInputs<'_, T>; 3],
    weights: &LossWeights,
    term: LossTerm,
) -> Result<(LossBreakdown, [MemberGrads<T>; 3]), LossError> {
    weights.validate()?;
    let coeffs = term.coeffs(weights);
    let third = T::one() / real::<T>(3.0);
    let two = real::<T>(2.0);
    let c_sim = real::<T>(coeffs.sim);
    let c_reg = real::<T>(coeffs.reg);
    let c_mse = real::<T>(coeffs.mse);
    let c_anch = real::<T>(coeffs.anch);
    let c_disen = real::<T>(coeffs.disen);

    let stats: Vec<MemberStats<T>> = members
        .iter()
        .map(member_stats)
        .collect::<Result<_, _>>()?;

    let mut l_sim = T::zero();
    let mut l_reg = T::zero();
    let mut l_mse = T::zero();
    let mut l_anch = T::zero();
    // Per-member gradient accumulators: one d-vector flowing through the
    // creative mean (spread uniformly over template rows at the end), plus
    // element-wise template terms.
    let mut d_mu: Vec<Vector<T>> = Vec::with_capacity(3);
    let mut grads: Vec<MemberGrads<T>> = Vec::with_capacity(3);

    for (m, st) in members.iter().zip(&stats) {
        let t = &m.template.tokens;
        let (n_rows, d) = t.dim();
        let inv_total = T::one() / real::<T>(st.rows_total as f64);
        let mut d_template = Tensor2D::<T>::zeros((n_rows, d));
        let mut d_mu_m = Array1::<T>::zeros(d);

        // l_sim: mean part through mu_c, std part element-wise. At
        // sigma_c = 0 the square root is kinked; subgradient 0 is used.
        let sim = stat_gap(st.mu_c.view(), st.sigma_c.view(), m.aug_mean.view(), m.aug_std.view());
        l_sim += sim;
        for k in 0..d {
            d_mu_m[k] += c_sim * two * (st.mu_c[k] - m.aug_mean[k]) * third;
        }
        for r in 0..n_rows {
            for k in 0..d {
                if st.sigma_c[k] > T::zero() {
                    let dsig = two * (st.sigma_c[k] - m.aug_std[k]);
                    d_template[[r, k]] +=
                        c_sim * third * dsig * (t[[r, k]] - st.mu_c[k]) * inv_total / st.sigma_c[k];
                }
            }
        }

        // l_reg
        l_reg += loss_reg(m.template);
        let reg_scale = c_reg * third * two / real::<T>(n_rows as f64);
        for r in 0..n_rows {
            for k in 0..d {
                d_template[[r, k]] += reg_scale * t[[r, k]];
            }
        }

        // l_anch (hinge active strictly below the margin; subgradient 0 at it)
        let eps = real::<T>(COSINE_EPS);
        let cos_anch = cosine(st.mu_c.view(), st.mu_f.view(), eps)?;
        let margin = real::<T>(weights.margin);
        l_anch += (margin - cos_anch).max(T::zero());
        if cos_anch < margin {
            let dcos = d_cosine_du(st.mu_c.view(), st.mu_f.view());
            for k in 0..d {
                d_mu_m[k] -= c_anch * third * dcos[k];
            }
        }

        // global-branch MSE
        let d_global = match (&m.template.global_vector, m.global_target) {
            (Some(pred), Some(target)) => {
                if pred.len() != target.len() {
                    return Err(LossError::Shape(format!(
                        "global prediction length {} != target {}",
                        pred.len(),
                        target.len()
                    )));
                }
                let dg = real::<T>(target.len() as f64);
                let mut mse = T::zero();
                let mut grad = Array1::<T>::zeros(pred.len());
                for k in 0..pred.len() {
                    let diff = pred[k] - target[k];
                    mse += diff * diff;
                    grad[k] = c_mse * third * two * diff / dg;
                }
                l_mse += mse / dg;
                Some(grad)
            }
            (None, None) => None,
            (Some(_), None) => {
                return Err(LossError::Global("prediction present but target missing".into()))
            }
            (None, Some(_)) => {
                return Err(LossError::Global("target present but no prediction".into()))
            }
        };

        d_mu.push(d_mu_m);
        grads.push(MemberGrads { d_template, d_global });
    }

    // l_disen over the fixed edge set; gradients flow into the creative means.
    let mu_list: [Vector<T>; 3] =
        [stats[0].mu_c.clone(), stats[1].mu_c.clone(), stats[2].mu_c.clone()];
    let aug_list: [Vector<T>; 3] = [
        members[0].aug_mean.clone(),
        members[1].aug_mean.clone(),
        members[2].aug_mean.clone(),
    ];
    let l_disen = loss_disen(&mu_list, &aug_list)?;
    let edge_w = c_disen / real::<T>(EDGES.len() as f64);
    for &(src, dst) in EDGES.iter() {
        let dc = &mu_list[dst] - &mu_list[src];
        let da = &aug_list[dst] - &aug_list[src];
        let dcos = d_cosine_du(dc.view(), da.view());
        // d(1 - cos)/d(mu_dst) = -dcos, and the source gets the opposite sign.
        for k in 0..dcos.len() {
            let g = edge_w * dcos[k];
            d_mu[dst][k] -= g;
            d_mu[src][k] += g;
        }
    }

    // Spread the mean-mediated gradients uniformly over template rows.
    for (i, st) in stats.iter().enumerate() {
        let inv_total = T::one() / real::<T>(st.rows_total as f64);
        let t_rows = members[i].template.tokens.nrows();
        for r in 0..t_rows {
            for k in 0..d_mu[i].len() {
                grads[i].d_template[[r, k]] += d_mu[i][k] * inv_total;
            }
        }
    }

    l_sim = l_sim * third;
    l_reg = l_reg * third;
    l_mse = l_mse * third;
    l_anch = l_anch * third;
    let l_align = l_sim + l_reg + l_mse;
    let alpha = real::<T>(weights.alpha);
    let beta = real::<T>(weights.beta);
    let l_total = l_align + alpha * l_disen + beta * l_anch;

    let breakdown = LossBreakdown {
        l_sim: to_f64(l_sim),
        l_reg: to_f64(l_reg),
        l_global_mse: to_f64(l_mse),
        l_align: to_f64(l_align),
        l_disen: to_f64(l_disen),
        l_anch: to_f64(l_anch),
        l_total: to_f64(l_total),
    };
    let grads: [MemberGrads<T>; 3] = match grads.try_into() {
        Ok(g) => g,
        Err(_) => unreachable!("exactly three members pushed"),
    };
    Ok((breakdown, grads))
}

fn to_f64<T: Real>(v: T) -> f64 {
    num_traits::ToPrimitive::to_f64(&v).expect("loss values fit in f64")
}
