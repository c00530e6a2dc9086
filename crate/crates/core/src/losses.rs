//! Adversarial, content and reverberation losses as tape expressions, plus
//! value-level helpers.
//!
//! Discriminators emit raw patch scores. With [`LossForm::Log`] the
//! probability of "real" is `sigmoid(score)`; every log term is computed
//! through a stable log-sigmoid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::netarch::{DiscriminatorRole, FeatureMap};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    #[default]
    Log,
    LeastSquares,
}

impl FromStr for LossForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(LossForm::Log),
            "least_squares" | "lsgan" => Ok(LossForm::LeastSquares),
            other => Err(Error::Config(format!("unknown loss form `{other}` (expected log or least_squares)"))),
        }
    }
}

impl fmt::Display for LossForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossForm::Log => "log",
            LossForm::LeastSquares => "least_squares",
        })
    }
}

/// Which player's objective an adversarial term is evaluated for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Discriminator,
    Generator,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub w_content: f64,
    pub w_reverb: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda1: 10.0, lambda2: 10.0, w_content: 1.0, w_reverb: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("w_content", self.w_content),
            ("w_reverb", self.w_reverb),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// The four raw terms plus both discriminator objectives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    /// Generator-side realism term.
    pub l_dr: f64,
    /// Generator-side content-discriminator term.
    pub l_dc: f64,
    pub l_content: f64,
    pub l_reverb: f64,
    /// Discriminator-side objectives.
    pub d_r: f64,
    pub d_c: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_dr: f64,
    pub l_dc: f64,
    pub l_content: f64,
    pub l_reverb: f64,
    pub total_generator: f64,
    pub total_d_r: f64,
    pub total_d_c: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.l_dr, self.l_dc, self.l_content, self.l_reverb, self.total_generator, self.total_d_r, self.total_d_c]
            .iter()
            .all(|v| v.is_finite())
    }
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "l_dr={} l_dc={} l_content={} l_reverb={} total_g={} total_dr={} total_dc={}",
            self.l_dr, self.l_dc, self.l_content, self.l_reverb, self.total_generator, self.total_d_r, self.total_d_c
        )
    }
}

pub fn total_objective(parts: LossParts, w: &LossWeights) -> Result<LossBreakdown> {
    let LossParts { l_dr, l_dc, l_content, l_reverb, d_r, d_c } = parts;
    let out = LossBreakdown {
        l_dr,
        l_dc,
        l_content,
        l_reverb,
        total_generator: w.lambda1 * l_dr + w.lambda2 * l_dc + w.w_content * l_content + w.w_reverb * l_reverb,
        total_d_r: d_r,
        total_d_c: d_c,
    };
    if !out.is_finite() {
        return Err(Error::Divergence(out.to_string()));
    }
    Ok(out)
}

/// Fails with an error naming `role` if any score is NaN or infinite.
pub fn check_scores<T: Scalar>(scores: &Tensor<T>, role: DiscriminatorRole) -> Result<()> {
    if scores.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteScores { network: role.label().to_string() })
    }
}

/// Adversarial objective (to minimise) for either player.
///
/// `real` is only read on the discriminator side. For the realism
/// discriminator real samples come from the target domain; for the content
/// discriminator they are the source images.
pub fn adversarial_loss<T: Scalar>(
    tape: &mut Tape<T>,
    role: DiscriminatorRole,
    real: Option<Var>,
    fake: Var,
    side: Side,
    form: LossForm,
) -> Result<Var> {
    check_scores(tape.value(fake), role)?;
    match side {
        Side::Generator => Ok(match form {
            LossForm::Log => {
                let ls = tape.log_sigmoid(fake);
                let m = tape.mean(ls);
                tape.scale(m, -1.0)
            }
            LossForm::LeastSquares => {
                let d = tape.offset(fake, -1.0);
                let sq = tape.square(d);
                tape.mean(sq)
            }
        }),
        Side::Discriminator => {
            let real = real.ok_or_else(|| Error::InvalidInput("discriminator-side loss needs real scores".into()))?;
            check_scores(tape.value(real), role)?;
            let (a, b) = match form {
                LossForm::Log => {
                    let lr = tape.log_sigmoid(real);
                    let mr = tape.mean(lr);
                    let neg = tape.scale(fake, -1.0);
                    let lf = tape.log_sigmoid(neg);
                    let mf = tape.mean(lf);
                    (tape.scale(mr, -1.0), tape.scale(mf, -1.0))
                }
                LossForm::LeastSquares => {
                    let d = tape.offset(real, -1.0);
                    let sr = tape.square(d);
                    let sf = tape.square(fake);
                    (tape.mean(sr), tape.mean(sf))
                }
            };
            tape.add(a, b)
        }
    }
}

pub fn adversarial_loss_dr<T: Scalar>(
    tape: &mut Tape<T>,
    scores_real_y: Option<Var>,
    scores_fake_gx: Var,
    side: Side,
    form: LossForm,
) -> Result<Var> {
    adversarial_loss(tape, DiscriminatorRole::DomainRealism, scores_real_y, scores_fake_gx, side, form)
}

pub fn adversarial_loss_dc<T: Scalar>(
    tape: &mut Tape<T>,
    scores_real_x: Option<Var>,
    scores_fake_gx: Var,
    side: Side,
    form: LossForm,
) -> Result<Var> {
    adversarial_loss(tape, DiscriminatorRole::Content, scores_real_x, scores_fake_gx, side, form)
}

/// Mean absolute difference of two equally shaped feature maps.
pub fn content_loss<T: Scalar>(tape: &mut Tape<T>, features_gx: Var, features_x: Var) -> Result<Var> {
    let d = tape.sub(features_gx, features_x)?;
    let a = tape.abs(d);
    Ok(tape.mean(a))
}

/// Sum over taps of the Frobenius norm of the Gram-matrix difference.
pub fn reverberation_loss<T: Scalar>(tape: &mut Tape<T>, taps_gx: &[Var], taps_y: &[Var]) -> Result<Var> {
    if taps_gx.len() != crate::netarch::generator::TAP_COUNT || taps_y.len() != taps_gx.len() {
        return Err(Error::InvalidInput(format!(
            "reverberation loss needs {} taps per side, got {} and {}",
            crate::netarch::generator::TAP_COUNT,
            taps_gx.len(),
            taps_y.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (&a, &b) in taps_gx.iter().zip(taps_y) {
        let (ca, _, _) = tape.value(a).dims3();
        let (cb, _, _) = tape.value(b).dims3();
        if ca != cb {
            return Err(Error::Shape(format!("tap channel mismatch: {ca} vs {cb}")));
        }
        let ga = tape.gram(a);
        let gb = tape.gram(b);
        let d = tape.sub(ga, gb)?;
        let n = tape.frobenius_norm(d);
        total = Some(match total {
            None => n,
            Some(t) => tape.add(t, n)?,
        });
    }
    Ok(total.expect("three taps"))
}

/// Normalised channel Gram matrix of one feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix<T> {
    /// `[C, C]`.
    pub values: Tensor<T>,
    pub layer_index: usize,
    /// Divisor applied to the raw inner products (`C * H' * W'`).
    pub normalization: f64,
}

pub fn gram<T: Scalar>(f: &FeatureMap<T>) -> GramMatrix<T> {
    let (c, h, w) = f.values.dims3();
    let mut tape = Tape::new();
    let x = tape.constant(f.values.clone());
    let g = tape.gram(x);
    GramMatrix { values: tape.value(g).clone(), layer_index: f.layer_index, normalization: (c * h * w) as f64 }
}

/// Value of [`content_loss`] on plain feature maps.
pub fn content_loss_value<T: Scalar>(features_gx: &FeatureMap<T>, features_x: &FeatureMap<T>) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(features_gx.values.clone());
    let b = tape.constant(features_x.values.clone());
    let l = content_loss(&mut tape, a, b)?;
    Ok(tape.value(l).item().f64())
}

/// Value of [`reverberation_loss`] on plain feature maps.
pub fn reverberation_loss_value<T: Scalar>(taps_gx: &[FeatureMap<T>], taps_y: &[FeatureMap<T>]) -> Result<f64> {
    let mut tape = Tape::new();
    let a: Vec<Var> = taps_gx.iter().map(|f| tape.constant(f.values.clone())).collect();
    let b: Vec<Var> = taps_y.iter().map(|f| tape.constant(f.values.clone())).collect();
    let l = reverberation_loss(&mut tape, &a, &b)?;
    Ok(tape.value(l).item().f64())
}

/// Value of [`adversarial_loss`] on plain patch maps.
pub fn adversarial_loss_value<T: Scalar>(
    role: DiscriminatorRole,
    real: Option<&Tensor<T>>,
    fake: &Tensor<T>,
    side: Side,
    form: LossForm,
) -> Result<f64> {
    let mut tape = Tape::new();
    let r = real.map(|t| tape.constant(t.clone()));
    let f = tape.constant(fake.clone());
    let l = adversarial_loss(&mut tape, role, r, f, side, form)?;
    Ok(tape.value(l).item().f64())
}
