//! Material interpolation schemes.
//!
//! Each element carries one design variable per candidate material. A scheme
//! turns that vector into weights `phi_i` and an interpolated Young's modulus:
//!
//! * [`Scheme::PnormMapping`]: `phi_i = ||g||_p / (||g||_1 + delta) * g_i`,
//!   `E = sum phi_i^n (E_i - E_void) + E_void`.
//! * [`Scheme::ExtendedSimp`]: hierarchical products of `g_j^n`,
//!   `E = sum phi_i (E_i - E_void) + E_void`.
//! * [`Scheme::Dmo`]: `phi_i = g_i^n prod_{j != i} (1 - g_j^n)`, same modulus rule
//!   as extended SIMP.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_PENALIZATION: f64 = 3.0;
pub const DEFAULT_NORM_ORDER: f64 = 6.0;
pub const DEFAULT_DELTA: f64 = 1e-9;

/// Candidate materials plus the interpolation parameters shared by all schemes.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialSet {
    moduli: Vec<f64>,
    e_void: f64,
    penal_n: f64,
    norm_p: f64,
    delta: f64,
}

impl MaterialSet {
    /// Builds a set with the default penalization (3), norm order (6) and
    /// divide guard (1e-9).
    pub fn new(moduli: Vec<f64>, e_void: f64) -> Result<Self> {
        Self::with_params(
            moduli,
            e_void,
            DEFAULT_PENALIZATION,
            DEFAULT_NORM_ORDER,
            DEFAULT_DELTA,
        )
    }

    pub fn with_params(
        moduli: Vec<f64>,
        e_void: f64,
        penal_n: f64,
        norm_p: f64,
        delta: f64,
    ) -> Result<Self> {
        if moduli.is_empty() {
            return Err(Error::InvalidMaterial("at least one material is required".into()));
        }
        if !(e_void > 0.0 && e_void.is_finite()) {
            return Err(Error::InvalidMaterial(format!("void modulus must be positive, got {e_void}")));
        }
        if let Some((i, e)) = moduli
            .iter()
            .enumerate()
            .find(|(_, &e)| !(e > e_void && e.is_finite()))
        {
            return Err(Error::InvalidMaterial(format!(
                "modulus E_{} = {e} must exceed the void modulus {e_void}",
                i + 1
            )));
        }
        if !(penal_n >= 1.0 && penal_n.is_finite()) {
            return Err(Error::InvalidMaterial(format!("penalization must be >= 1, got {penal_n}")));
        }
        if !(norm_p >= 1.0 && norm_p.is_finite()) {
            return Err(Error::InvalidMaterial(format!("norm order must be >= 1, got {norm_p}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidMaterial(format!("delta must be positive, got {delta}")));
        }
        Ok(Self {
            moduli,
            e_void,
            penal_n,
            norm_p,
            delta,
        })
    }

    pub fn moduli(&self) -> &[f64] {
        &self.moduli
    }

    pub fn e_void(&self) -> f64 {
        self.e_void
    }

    pub fn penalization(&self) -> f64 {
        self.penal_n
    }

    pub fn norm_order(&self) -> f64 {
        self.norm_p
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of candidate materials.
    pub fn count(&self) -> usize {
        self.moduli.len()
    }

    pub fn max_modulus(&self) -> f64 {
        self.moduli.iter().copied().fold(f64::MIN, f64::max)
    }

    fn contrast(&self, i: usize) -> f64 {
        self.moduli[i] - self.e_void
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    PnormMapping,
    ExtendedSimp,
    Dmo,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::PnormMapping, Scheme::ExtendedSimp, Scheme::Dmo];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::PnormMapping => "pnorm_mapping",
            Scheme::ExtendedSimp => "extended_simp",
            Scheme::Dmo => "dmo",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pnorm_mapping" | "pnorm" => Ok(Scheme::PnormMapping),
            "extended_simp" | "simp" => Ok(Scheme::ExtendedSimp),
            "dmo" => Ok(Scheme::Dmo),
            other => Err(format!(
                "unknown scheme `{other}` (expected pnorm_mapping, extended_simp or dmo)"
            )),
        }
    }
}

#[inline]
fn pow(x: f64, e: f64) -> f64 {
    if e == 3.0 {
        x * x * x
    } else {
        x.powf(e)
    }
}

/// `(||g||_p, ||g||_1 + delta)`.
fn pnorm_parts(gamma: &[f64], p: f64, delta: f64) -> (f64, f64) {
    let sum_p: f64 = gamma.iter().map(|&g| g.powf(p)).sum();
    let sum: f64 = gamma.iter().sum();
    (sum_p.powf(1.0 / p), sum + delta)
}

/// P-norm mapping weights. Each weight satisfies `0 <= phi_i <= gamma_i`.
pub fn weights_pnorm(gamma: &[f64], set: &MaterialSet) -> Vec<f64> {
    let (norm, denom) = pnorm_parts(gamma, set.norm_p, set.delta);
    let ratio = norm / denom;
    gamma.iter().map(|&g| ratio * g).collect()
}

/// Hierarchical products: `w_i = (prod_{k<=i} s_k)(1 - s_{i+1})`, last weight
/// is the full product.
fn hierarchical(s: &[f64]) -> Vec<f64> {
    let m = s.len();
    let mut out = Vec::with_capacity(m);
    let mut prefix = 1.0;
    for i in 0..m {
        prefix *= s[i];
        if i + 1 < m {
            out.push(prefix * (1.0 - s[i + 1]));
        } else {
            out.push(prefix);
        }
    }
    out
}

/// Row-major `m x m` Jacobian `d w_i / d s_j` of [`hierarchical`].
fn hierarchical_jacobian(s: &[f64], jac: &mut [f64]) {
    let m = s.len();
    jac.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..m {
        let tail = if i + 1 < m { 1.0 - s[i + 1] } else { 1.0 };
        for j in 0..=i {
            let others: f64 = (0..=i).filter(|&k| k != j).map(|k| s[k]).product();
            jac[i * m + j] = others * tail;
        }
        if i + 1 < m {
            let prefix: f64 = s[..=i].iter().product();
            jac[i * m + i + 1] = -prefix;
        }
    }
}

/// Extended SIMP weights, hierarchical in the order materials are listed.
pub fn weights_extended_simp(gamma: &[f64], set: &MaterialSet) -> Vec<f64> {
    let s: Vec<f64> = gamma.iter().map(|&g| pow(g, set.penal_n)).collect();
    hierarchical(&s)
}

/// DMO weights.
pub fn weights_dmo(gamma: &[f64], set: &MaterialSet) -> Vec<f64> {
    let s: Vec<f64> = gamma.iter().map(|&g| pow(g, set.penal_n)).collect();
    (0..s.len())
        .map(|i| {
            s[i] * s
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &sj)| 1.0 - sj)
                .product::<f64>()
        })
        .collect()
}

pub fn weights(gamma: &[f64], set: &MaterialSet, scheme: Scheme) -> Vec<f64> {
    match scheme {
        Scheme::PnormMapping => weights_pnorm(gamma, set),
        Scheme::ExtendedSimp => weights_extended_simp(gamma, set),
        Scheme::Dmo => weights_dmo(gamma, set),
    }
}

/// Interpolated Young's modulus of one element.
pub fn modulus(gamma: &[f64], set: &MaterialSet, scheme: Scheme) -> f64 {
    let phi = weights(gamma, set, scheme);
    let exponent = match scheme {
        Scheme::PnormMapping => set.penal_n,
        Scheme::ExtendedSimp | Scheme::Dmo => 1.0,
    };
    phi.iter()
        .enumerate()
        .map(|(i, &w)| pow(w, exponent) * set.contrast(i))
        .sum::<f64>()
        + set.e_void
}

/// `dE / d gamma_j` for every material.
pub fn modulus_gradient(gamma: &[f64], set: &MaterialSet, scheme: Scheme) -> Vec<f64> {
    let mut grad = vec![0.0; gamma.len()];
    modulus_and_gradient(gamma, set, scheme, &mut grad);
    grad
}

/// Modulus and its gradient in one pass; `grad` must have one slot per material.
pub fn modulus_and_gradient(
    gamma: &[f64],
    set: &MaterialSet,
    scheme: Scheme,
    grad: &mut [f64],
) -> f64 {
    debug_assert_eq!(gamma.len(), set.count());
    debug_assert_eq!(grad.len(), set.count());
    match scheme {
        Scheme::PnormMapping => pnorm_modulus_and_gradient(gamma, set, grad),
        Scheme::ExtendedSimp => {
            let n = set.penal_n;
            let m = gamma.len();
            let s: Vec<f64> = gamma.iter().map(|&g| pow(g, n)).collect();
            let phi = hierarchical(&s);
            let mut jac = vec![0.0; m * m];
            hierarchical_jacobian(&s, &mut jac);
            chain_linear_weights(gamma, set, &phi, &jac, grad)
        }
        Scheme::Dmo => {
            let n = set.penal_n;
            let m = gamma.len();
            let s: Vec<f64> = gamma.iter().map(|&g| pow(g, n)).collect();
            let one_minus: Vec<f64> = s.iter().map(|&v| 1.0 - v).collect();
            let phi = weights_dmo(gamma, set);
            let mut jac = vec![0.0; m * m];
            for i in 0..m {
                for k in 0..m {
                    jac[i * m + k] = if k == i {
                        (0..m).filter(|&j| j != i).map(|j| one_minus[j]).product()
                    } else {
                        -s[i]
                            * (0..m)
                                .filter(|&j| j != i && j != k)
                                .map(|j| one_minus[j])
                                .product::<f64>()
                    };
                }
            }
            chain_linear_weights(gamma, set, &phi, &jac, grad)
        }
    }
}

/// Shared tail for schemes whose weights are functions of `s = gamma^n` and
/// enter the modulus linearly. `jac` is `d phi_i / d s_k`, row-major.
fn chain_linear_weights(
    gamma: &[f64],
    set: &MaterialSet,
    phi: &[f64],
    jac: &[f64],
    grad: &mut [f64],
) -> f64 {
    let m = gamma.len();
    let n = set.penal_n;
    for k in 0..m {
        let ds = n * gamma[k].powf(n - 1.0);
        let de_ds: f64 = (0..m).map(|i| set.contrast(i) * jac[i * m + k]).sum();
        grad[k] = de_ds * ds;
    }
    phi.iter()
        .enumerate()
        .map(|(i, &w)| w * set.contrast(i))
        .sum::<f64>()
        + set.e_void
}

fn pnorm_modulus_and_gradient(gamma: &[f64], set: &MaterialSet, grad: &mut [f64]) -> f64 {
    let (p, n) = (set.norm_p, set.penal_n);
    let (norm, denom) = pnorm_parts(gamma, p, set.delta);
    let ratio = norm / denom;

    // a = sum_i n phi_i^(n-1) dE_i gamma_i
    let mut energy = set.e_void;
    let mut a = 0.0;
    for (i, &g) in gamma.iter().enumerate() {
        let phi = ratio * g;
        let phi_nm1 = phi.powf(n - 1.0);
        energy += phi_nm1 * phi * set.contrast(i);
        a += n * phi_nm1 * set.contrast(i) * g;
    }
    // d||g||_p / dg_j = g_j^(p-1) ||g||_p^(1-p); taken as zero at the origin.
    let norm_scale = if norm > 0.0 { norm.powf(1.0 - p) } else { 0.0 };
    for (j, &g) in gamma.iter().enumerate() {
        let dnorm = if norm > 0.0 { g.powf(p - 1.0) * norm_scale } else { 0.0 };
        let phi = ratio * g;
        let own = n * phi.powf(n - 1.0) * set.contrast(j) * ratio;
        grad[j] = dnorm * a / denom + own - norm * a / (denom * denom);
    }
    energy
}

/// Fraction of the element occupied by each material; these are the
/// quantities the volume constraints and grayness measure act on.
///
/// For the p-norm mapping and DMO the design variables are the fractions.
/// For extended SIMP the variables are nested selectors, so material `i`
/// occupies `(prod_{k<=i} g_k)(1 - g_{i+1})` of the element.
pub fn occupancy(gamma: &[f64], scheme: Scheme) -> Vec<f64> {
    match scheme {
        Scheme::PnormMapping | Scheme::Dmo => gamma.to_vec(),
        Scheme::ExtendedSimp => hierarchical(gamma),
    }
}

/// Row-major Jacobian `d occupancy_i / d gamma_k`.
pub fn occupancy_jacobian(gamma: &[f64], scheme: Scheme, jac: &mut [f64]) {
    let m = gamma.len();
    debug_assert_eq!(jac.len(), m * m);
    match scheme {
        Scheme::PnormMapping | Scheme::Dmo => {
            jac.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..m {
                jac[i * m + i] = 1.0;
            }
        }
        Scheme::ExtendedSimp => hierarchical_jacobian(gamma, jac),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set3() -> MaterialSet {
        MaterialSet::new(vec![1.0, 2.0, 5.0], 1e-9).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pnorm_weights_examples() {
        let s = set3();
        let w = weights_pnorm(&[1.0, 0.0, 0.0], &s);
        assert!(close(w[0], 1.0 / (1.0 + 1e-9), 1e-15));
        assert_eq!(&w[1..], &[0.0, 0.0]);

        assert_eq!(weights_pnorm(&[0.0, 0.0, 0.0], &s), vec![0.0; 3]);

        // 3^(1/6) * 0.5 / (1.5 + 1e-9), evaluated at 30 digits
        let w = weights_pnorm(&[0.5, 0.5, 0.5], &s);
        for v in w {
            assert!(close(v, 0.200_156_159_062_563_015, 1e-14), "{v}");
        }
    }

    #[test]
    fn extended_simp_examples() {
        let s = set3();
        assert_eq!(weights_extended_simp(&[1.0, 0.0, 0.0], &s), vec![1.0, 0.0, 0.0]);
        assert_eq!(weights_extended_simp(&[1.0, 1.0, 1.0], &s), vec![0.0, 0.0, 1.0]);
        assert_eq!(
            weights_extended_simp(&[0.5, 0.5, 0.5], &s),
            vec![0.109375, 0.013671875, 0.001953125]
        );
    }

    #[test]
    fn dmo_examples() {
        let s = set3();
        assert_eq!(weights_dmo(&[1.0, 0.0, 0.0], &s), vec![1.0, 0.0, 0.0]);
        assert_eq!(weights_dmo(&[1.0, 1.0, 0.0], &s), vec![0.0, 0.0, 0.0]);
        assert_eq!(weights_dmo(&[0.5, 0.5, 0.5], &s), vec![0.095703125; 3]);
    }

    #[test]
    fn modulus_examples() {
        let s = set3();
        for scheme in [Scheme::PnormMapping, Scheme::Dmo] {
            let e = modulus(&[0.0, 1.0, 0.0], &s, scheme);
            assert!(close(e, 2.0, 1e-8), "{scheme}: {e}");
        }
        // extended SIMP selects material 2 with nested selectors (1, 1, 0)
        let e = modulus(&[1.0, 1.0, 0.0], &s, Scheme::ExtendedSimp);
        assert!(close(e, 2.0, 1e-8));
        for scheme in Scheme::ALL {
            assert_eq!(modulus(&[0.0, 0.0, 0.0], &s, scheme), 1e-9);
        }
        let e = modulus(&[0.5, 0.5, 0.5], &s, Scheme::PnormMapping);
        assert!(close(e, 0.064_150_030_757_602_097, 1e-14), "{e}");
    }

    #[test]
    fn gradient_finite_at_origin() {
        let s = set3();
        for scheme in Scheme::ALL {
            let g = modulus_gradient(&[0.0, 0.0, 0.0], &s, scheme);
            assert!(g.iter().all(|v| v.is_finite()));
        }
        assert_eq!(
            modulus_gradient(&[0.0, 0.0, 0.0], &s, Scheme::PnormMapping),
            vec![0.0; 3]
        );
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(MaterialSet::new(vec![], 1e-9).is_err());
        assert!(MaterialSet::new(vec![1.0, 1e-12], 1e-9).is_err());
        assert!(MaterialSet::new(vec![1.0], 0.0).is_err());
        assert!(MaterialSet::with_params(vec![1.0], 1e-9, 0.5, 6.0, 1e-9).is_err());
        assert!(MaterialSet::with_params(vec![1.0], 1e-9, 3.0, 0.5, 1e-9).is_err());
        assert!(MaterialSet::with_params(vec![1.0], 1e-9, 3.0, 6.0, 0.0).is_err());
    }

    #[test]
    fn scheme_tags_round_trip() {
        for scheme in Scheme::ALL {
            assert_eq!(scheme.tag().parse::<Scheme>().unwrap(), scheme);
        }
        assert!("ordered_simp".parse::<Scheme>().is_err());
    }

    #[test]
    fn occupancy_of_nested_selectors() {
        assert_eq!(occupancy(&[1.0, 1.0, 0.0], Scheme::ExtendedSimp), vec![0.0, 1.0, 0.0]);
        assert_eq!(occupancy(&[0.0, 0.7, 0.2], Scheme::ExtendedSimp), vec![0.0, 0.0, 0.0]);
        assert_eq!(occupancy(&[0.3, 0.7], Scheme::Dmo), vec![0.3, 0.7]);
    }
}
