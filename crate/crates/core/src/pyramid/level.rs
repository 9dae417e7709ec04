use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::encode::{encode_all, NormFrame};
use super::mlp::MlpParams;
use super::tape::{Tape, Var};
use crate::correspond::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::fem::SparseSymMatrix;
use crate::geom::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// Mean squared distance over matched pairs, mm².
    pub align: f64,
    /// Mean `−ln(1 − c)` over all points (unweighted).
    pub rigid: f64,
    /// `α_l · uᵀKu` of the zero-padded cumulative field (unweighted by λ₂).
    pub fem: f64,
    pub total: f64,
}

/// Everything the loss of one pyramid level needs, with the frozen
/// contribution of earlier levels baked in.
pub struct LevelProblem<'a> {
    level: usize,
    x_mm: DMatrix<f64>,
    u_prev: DMatrix<f64>,
    x_prev_norm: DMatrix<f64>,
    gamma: DMatrix<f64>,
    src: Vec<usize>,
    y_matched: DMatrix<f64>,
    stiffness: Option<&'a SparseSymMatrix>,
    frame: NormFrame,
    lambda1: f64,
    lambda2: f64,
    alpha: f64,
}

pub(crate) fn rows_of(points: &[Point3]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 3, |i, c| points[i][c])
}

pub struct LevelSpec<'a> {
    /// 1-based level index.
    pub level: usize,
    pub x: &'a [Point3],
    /// Cumulative displacement of earlier levels, `n × 3` mm.
    pub u_prev: &'a DMatrix<f64>,
    pub y: &'a [Point3],
    pub corr: &'a CorrespondenceSet,
    pub stiffness: Option<&'a SparseSymMatrix>,
    pub frame: NormFrame,
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
}

impl<'a> LevelProblem<'a> {
    pub fn new(s: LevelSpec<'a>) -> Result<Self> {
        let n = s.x.len();
        if s.u_prev.shape() != (n, 3) {
            return Err(Error::LengthMismatch {
                expected: 3 * n,
                actual: s.u_prev.len(),
            });
        }
        s.corr.check_clouds(s.x, s.y)?;
        if s.corr.is_empty() {
            return Err(Error::InvalidInput("loss needs at least one correspondence".into()));
        }
        if let Some(k) = s.stiffness {
            if k.dim() < 3 * n {
                return Err(Error::LengthMismatch {
                    expected: 3 * n,
                    actual: k.dim(),
                });
            }
        }
        let x_mm = rows_of(s.x);
        let x_prev: Vec<Point3> = (0..n).map(|i| s.frame.to_normalized(&(s.x[i] + s.u_prev.row(i).transpose()))).collect();
        let y_matched = DMatrix::from_fn(s.corr.len(), 3, |r, c| s.y[s.corr.pairs()[r].1][c]);
        Ok(LevelProblem {
            level: s.level,
            u_prev: s.u_prev.clone(),
            gamma: encode_all(&x_prev, s.level),
            x_prev_norm: rows_of(&x_prev),
            x_mm,
            src: s.corr.pairs().iter().map(|p| p.0).collect(),
            y_matched,
            stiffness: s.stiffness,
            frame: s.frame,
            lambda1: s.lambda1,
            lambda2: s.lambda2,
            alpha: s.alpha,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Returns the `(Δu in mm, c, total, terms)` nodes.
    fn record(&self, tape: &mut Tape, params: &[Var]) -> (Var, [Var; 4]) {
        let gamma = tape.leaf(self.gamma.clone());
        let x_prev = tape.leaf(self.x_prev_norm.clone());
        let out = MlpParams::forward_on(tape, params, gamma);
        let logit = tape.cols(out, 0, 1);
        let c = tape.sigmoid(logit);
        let a = tape.cols(out, 1, 3);
        let ax = tape.mul(a, x_prev);
        let du = tape.mul_col(ax, c);
        let du_mm = tape.scale(du, self.frame.scale());

        let u_prev = tape.leaf(self.u_prev.clone());
        let u = tape.add(u_prev, du_mm);
        let x0 = tape.leaf(self.x_mm.clone());
        let xl = tape.add(x0, u);
        let matched = tape.gather_rows(xl, self.src.clone());
        let y = tape.leaf(self.y_matched.clone());
        let diff = tape.sub(matched, y);
        let ss = tape.sum_squares(diff);
        let align = tape.scale(ss, 1.0 / self.src.len() as f64);
        let nl = tape.neg_log_one_minus(c);
        let rigid = tape.mean(nl);
        let fem = match self.stiffness {
            Some(k) if self.alpha != 0.0 => tape.quadratic(u, k, self.alpha),
            _ => tape.leaf(DMatrix::zeros(1, 1)),
        };
        let wr = tape.scale(rigid, self.lambda1);
        let wf = tape.scale(fem, self.lambda2);
        let t = tape.add(align, wr);
        let total = tape.add(t, wf);
        (du_mm, [total, align, rigid, fem])
    }

    /// Loss terms and gradients with respect to `params.mats`.
    pub fn evaluate(&self, params: &MlpParams) -> Result<(LossTerms, Vec<DMatrix<f64>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.mats.iter().map(|m| tape.leaf(m.clone())).collect();
        let (_, [total, align, rigid, fem]) = self.record(&mut tape, &vars);
        let terms = LossTerms {
            align: tape.scalar_value(align),
            rigid: tape.scalar_value(rigid),
            fem: tape.scalar_value(fem),
            total: tape.scalar_value(total),
        };
        if !terms.total.is_finite() {
            return Err(Error::NonFinite(format!("loss at level {}", self.level)));
        }
        let g = tape.backward(total);
        Ok((terms, vars.iter().map(|&v| g.get(&tape, v)).collect()))
    }

    /// Loss value only.
    pub fn loss(&self, params: &MlpParams) -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.mats.iter().map(|m| tape.leaf(m.clone())).collect();
        let (_, [total, ..]) = self.record(&mut tape, &vars);
        tape.scalar_value(total)
    }

    /// Incremental displacement `c · a ∘ x_prev`, in mm, `n × 3`.
    pub fn increment(&self, params: &MlpParams) -> Result<DMatrix<f64>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.mats.iter().map(|m| tape.leaf(m.clone())).collect();
        let (du, _) = self.record(&mut tape, &vars);
        let du = tape.value(du).clone();
        if du.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("displacement increment".into()));
        }
        Ok(du)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> NormFrame {
        NormFrame {
            center: Point3::origin(),
            half_extent: 10.0,
        }
    }

    #[test]
    fn hand_cases() {
        let x = [Point3::new(1.0, 2.0, 3.0)];
        let y = [Point3::new(2.0, 2.0, 3.0)];
        let corr = CorrespondenceSet::identity(1);
        let u = DMatrix::zeros(1, 3);
        let p = LevelProblem::new(LevelSpec {
            level: 1,
            x: &x,
            u_prev: &u,
            y: &y,
            corr: &corr,
            stiffness: None,
            frame: frame(),
            lambda1: 0.0,
            lambda2: 0.0,
            alpha: 0.0,
        })
        .unwrap();
        let params = MlpParams::zeros(2, 4);
        let (t, _) = p.evaluate(&params).unwrap();
        assert_eq!(t.align, 1.0);
        assert!((t.rigid - 2f64.ln()).abs() < 1e-15);
        assert_eq!(t.fem, 0.0);

        let aligned = LevelProblem::new(LevelSpec {
            y: &x,
            ..LevelSpec {
                level: 2,
                x: &x,
                u_prev: &u,
                y: &y,
                corr: &corr,
                stiffness: None,
                frame: frame(),
                lambda1: 1.0,
                lambda2: 1.0,
                alpha: 0.5,
            }
        })
        .unwrap();
        assert_eq!(aligned.evaluate(&params).unwrap().0.align, 0.0);
    }

    #[test]
    fn increment_formula() {
        let x = [Point3::new(1.0, 2.0, 3.0)];
        let corr = CorrespondenceSet::identity(1);
        let u = DMatrix::zeros(1, 3);
        let p = LevelProblem::new(LevelSpec {
            level: 1,
            x: &x,
            u_prev: &u,
            y: &x,
            corr: &corr,
            stiffness: None,
            frame: frame(),
            lambda1: 0.0,
            lambda2: 0.0,
            alpha: 0.0,
        })
        .unwrap();
        // Output bias: huge logit (c → 1) and a = (1, 1, 1).
        let mut params = MlpParams::zeros(1, 2);
        params.mats[3].copy_from_slice(&[40.0, 1.0, 1.0, 1.0]);
        let du = p.increment(&params).unwrap();
        for c in 0..3 {
            // x_prev in normalized units is x / 10; mapped back by ×10.
            assert!((du[(0, c)] - x[0][c]).abs() < 1e-12);
        }
        // c → 0 suppresses motion.
        params.mats[3][0] = -40.0;
        assert!(p.increment(&params).unwrap().amax() < 1e-15);
    }
}
