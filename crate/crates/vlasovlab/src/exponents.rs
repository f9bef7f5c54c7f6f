//! Exact rational exponent tables for the interpolation and moment
//! differential inequalities, in both dimensions.

use crate::error::{Error, Result};
use num_rational::Ratio;
use serde::Serialize;

pub type Rat = Ratio<i64>;

pub fn rat(num: i64, den: i64) -> Rat {
    Ratio::new(num, den)
}

pub fn rat_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `p_{n,k} = (n+d)/(k+d)`.
pub fn p_nk(n: i64, k: i64, d: i64) -> Rat {
    rat(n + d, k + d)
}

/// Conjugate exponent `p' = p/(p-1)`.
pub fn conjugate(p: Rat) -> Rat {
    p / (p - 1)
}

/// `theta_{n,k} = 1/p'_{n,k} = (n-k)/(n+d)`.
pub fn theta_nk(n: i64, k: i64, d: i64) -> Rat {
    rat(n - k, n + d)
}

/// Interpolation constant `(d+k+1)/(d+k)` of the pointwise optimization.
pub fn interpolation_constant(d: i64, k: i64) -> Rat {
    rat(d + k + 1, d + k)
}

/// Complete exponent table for the order-`n` moment inequality in
/// dimension `d`. All entries are exact rationals.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentTable {
    pub n: i64,
    pub d: i64,
    /// weak-norm exponent of the kernel gradient: 2 (d=2), 3/2 (d=3)
    pub b: Rat,
    /// `p_{n,n-1}` and its conjugate (the Hoelder split of the force term)
    pub p_n_nm1: Rat,
    pub alpha_conj: Rat,
    pub alpha: Rat,
    pub theta_n_nm1: Rat,
    /// density-norm pair from `1/alpha' + 1/beta' = 1/b`
    pub beta_conj: Rat,
    pub beta: Rat,
    /// plain interpolation exponents `p_m = (m+d)/d`, `theta_m = m/(m+d)`
    pub p_n: Rat,
    pub theta_n: Rat,
    pub p_prev: Option<Rat>,
    pub p_prev_conj: Option<Rat>,
    pub theta_prev: Option<Rat>,
    /// 3D interpolation weight between `p_{n-1}` and `p_n` (only where the
    /// density norm lies between the two; n = 3, 4)
    pub epsilon: Option<Rat>,
    pub big_theta: Option<Rat>,
    pub big_theta0: Option<Rat>,
    /// 2D envelope coefficient pieces: `C_n = coeff * (3/2)^exp * |grad K|_{2,inf}`
    pub envelope_coeff: Rat,
    pub envelope_exp32: Rat,
    /// exponents of the 2D order-n differential inequality
    pub exp_m_prev: Rat,
    pub exp_m_n: Rat,
    pub exp_sup_f: Rat,
    pub exp_l1_f: Rat,
    /// 3D high-order induction: the lower moment order `k = (6n+9)/(n+6)`
    pub induction_k: Option<Rat>,
}

/// Build the exponent table; `n >= 1`, `d` in {2, 3}.
pub fn exponents(n: i64, d: i64) -> Result<ExponentTable> {
    if n < 1 {
        return Err(Error::Invalid(format!("moment order must be >= 1, got {n}")));
    }
    if d != 2 && d != 3 {
        return Err(Error::UnsupportedDim(d as usize));
    }
    let b = if d == 2 { rat(2, 1) } else { rat(3, 2) };
    let p_n_nm1 = p_nk(n, n - 1, d);
    let alpha_conj = conjugate(p_n_nm1); // = n + d
    debug_assert_eq!(alpha_conj, rat(n + d, 1));
    let alpha = p_n_nm1;
    let theta_n_nm1 = theta_nk(n, n - 1, d);
    // 1/beta' = 1/b - 1/alpha'
    let beta_conj_inv = b.recip() - alpha_conj.recip();
    if beta_conj_inv <= rat(0, 1) {
        return Err(Error::ExponentRelation(format!(
            "no admissible beta for n={n}, d={d}"
        )));
    }
    let beta_conj = beta_conj_inv.recip();
    let beta = conjugate(beta_conj);
    let p_n = p_nk(n, 0, d);
    let theta_n = theta_nk(n, 0, d);

    let (p_prev, p_prev_conj, theta_prev) = if n >= 2 {
        let pp = p_nk(n - 1, 0, d);
        (Some(pp), Some(conjugate(pp)), Some(theta_nk(n - 1, 0, d)))
    } else {
        (None, None, None)
    };

    // epsilon from 1/beta' = eps/p_n' + (1-eps)/p_{n-1}'
    let mut epsilon = None;
    let mut big_theta = None;
    let mut big_theta0 = None;
    if let (Some(ppc), Some(tp)) = (p_prev_conj, theta_prev) {
        let pn_conj = conjugate(p_n);
        let denom = pn_conj.recip() - ppc.recip();
        if denom != rat(0, 1) {
            let eps = (beta_conj.recip() - ppc.recip()) / denom;
            if eps > rat(0, 1) && eps <= rat(1, 1) {
                epsilon = Some(eps);
                big_theta0 = Some((rat(1, 1) - eps) * (rat(1, 1) - tp));
                big_theta = Some(rat(1, 1) - theta_n_nm1 + eps * (rat(1, 1) - theta_n));
            }
        }
    }

    // 2D envelope pieces; the base case n = 1 uses the Lebesgue split
    // through p_1 = 3/2 with exponent 3/2 on the constant.
    let (envelope_coeff, envelope_exp32, exp_m_prev, exp_sup_f, exp_l1_f) = if n == 1 {
        (
            rat(1, 1),
            rat(3, 2),
            rat(0, 1),
            rat(2, 3),
            rat(1, 2),
        )
    } else {
        let ppc = p_prev_conj.unwrap();
        let ratio = ppc / beta_conj;
        (
            rat(n * (n + d), n + d - 1),
            ratio,
            (rat(1, 1) - theta_prev.unwrap()) * ratio,
            theta_n_nm1 + beta_conj.recip(),
            rat(1, 1) - ratio,
        )
    };
    let exp_m_n = rat(1, 1) - theta_n_nm1;

    let induction_k = if d == 3 {
        Some(rat(6 * n + 9, n + 6))
    } else {
        None
    };

    Ok(ExponentTable {
        n,
        d,
        b,
        p_n_nm1,
        alpha_conj,
        alpha,
        theta_n_nm1,
        beta_conj,
        beta,
        p_n,
        theta_n,
        p_prev,
        p_prev_conj,
        theta_prev,
        epsilon,
        big_theta,
        big_theta0,
        envelope_coeff,
        envelope_exp32,
        exp_m_prev,
        exp_m_n,
        exp_sup_f,
        exp_l1_f,
        induction_k,
    })
}

/// Decay exponent `a = 3/c - 1` of the field hypothesis; admissible for
/// `c` in (7/5, 3/2), giving `a` in (1, 8/7).
pub fn decay_exponent(c: f64) -> f64 {
    3.0 / c - 1.0
}

pub fn c_range_admissible(c: f64) -> bool {
    c > 7.0 / 5.0 && c < 1.5
}
